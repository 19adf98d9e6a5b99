#include "eg/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "eg/errors.hpp"
#include "eg/rng.hpp"

namespace eg {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!f) throw ParseError("failed reading " + path, 0);
    return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

void write_be32(std::ofstream& f, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    f.write(bytes, 4);
}

std::string hex32(std::uint32_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s = "0x";
    for (int i = 7; i >= 0; --i) s += digits[(v >> (i * 4)) & 0xF];
    return s;
}

/// Scale raw bytes by 1/255, standardize per channel from this data, and
/// fill images plus the recorded constants.
void standardize_from_raw(Dataset& ds) {
    const std::size_t spatial = ds.height * ds.width;
    const std::size_t per_image = ds.channels * spatial;
    ds.images = Tensor<float>({ds.n, ds.channels, ds.height, ds.width});
    ds.channel_mean.assign(ds.channels, 0.0);
    ds.channel_std.assign(ds.channels, 1.0);

    for (std::size_t c = 0; c < ds.channels; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < ds.n; ++i) {
            const std::uint8_t* p = ds.raw_images.data() + i * per_image + c * spatial;
            for (std::size_t j = 0; j < spatial; ++j) sum += static_cast<double>(p[j]) / 255.0;
        }
        const double count = static_cast<double>(ds.n * spatial);
        const double mean = sum / count;
        double var_acc = 0.0;
        for (std::size_t i = 0; i < ds.n; ++i) {
            const std::uint8_t* p = ds.raw_images.data() + i * per_image + c * spatial;
            for (std::size_t j = 0; j < spatial; ++j) {
                const double d = static_cast<double>(p[j]) / 255.0 - mean;
                var_acc += d * d;
            }
        }
        double sd = std::sqrt(var_acc / count);
        if (sd == 0.0) sd = 1.0;  // constant channel; leave it centered only
        ds.channel_mean[c] = mean;
        ds.channel_std[c] = sd;
        for (std::size_t i = 0; i < ds.n; ++i) {
            const std::uint8_t* p = ds.raw_images.data() + i * per_image + c * spatial;
            float* q = ds.images.data() + i * per_image + c * spatial;
            for (std::size_t j = 0; j < spatial; ++j) {
                q[j] = static_cast<float>((static_cast<double>(p[j]) / 255.0 - mean) / sd);
            }
        }
    }
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split_tag) {
    const std::vector<std::uint8_t> img = read_file(images_path);
    if (img.size() < 16) throw ParseError("image file too short for an IDX header", img.size());
    const std::uint32_t magic = read_be32(img, 0);
    if (magic != 0x00000803u) {
        throw ParseError("bad image magic: expected 0x00000803, found " + hex32(magic), 0);
    }
    const std::size_t n = read_be32(img, 4);
    const std::size_t h = read_be32(img, 8);
    const std::size_t w = read_be32(img, 12);
    const std::size_t expected = 16 + n * h * w;
    if (img.size() < expected) {
        throw ParseError("truncated image data: expected " + std::to_string(expected) +
                             " bytes, file has " + std::to_string(img.size()),
                         img.size());
    }
    if (img.size() > expected) {
        throw ParseError("trailing bytes after image data", expected);
    }

    const std::vector<std::uint8_t> lab = read_file(labels_path);
    if (lab.size() < 8) throw ParseError("label file too short for an IDX header", lab.size());
    const std::uint32_t lmagic = read_be32(lab, 0);
    if (lmagic != 0x00000801u) {
        throw ParseError("bad label magic: expected 0x00000801, found " + hex32(lmagic), 0);
    }
    const std::size_t ln = read_be32(lab, 4);
    if (ln != n) {
        throw ParseError("image count " + std::to_string(n) + " != label count " +
                             std::to_string(ln),
                         4);
    }
    if (lab.size() < 8 + ln) {
        throw ParseError("truncated label data: expected " + std::to_string(8 + ln) +
                             " bytes, file has " + std::to_string(lab.size()),
                         lab.size());
    }
    if (lab.size() > 8 + ln) {
        throw ParseError("trailing bytes after label data", 8 + ln);
    }

    Dataset ds;
    ds.n = n;
    ds.channels = 1;
    ds.height = h;
    ds.width = w;
    ds.split = split_tag;
    ds.raw_images.assign(img.begin() + 16, img.end());
    ds.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = static_cast<int>(lab[8 + i]);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.class_count = static_cast<std::size_t>(max_label) + 1;
    standardize_from_raw(ds);
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    if (ds.raw_images.empty() && ds.n > 0) {
        throw StateError("dataset has no raw bytes to serialize");
    }
    if (ds.channels != 1) throw ContractError("IDX writer supports single-channel data only");
    for (int y : ds.labels) {
        if (y < 0 || y > 255) throw ContractError("IDX labels must fit one byte");
    }

    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw ConfigError("cannot open file for writing: " + images_path);
    write_be32(fi, 0x00000803u);
    write_be32(fi, static_cast<std::uint32_t>(ds.n));
    write_be32(fi, static_cast<std::uint32_t>(ds.height));
    write_be32(fi, static_cast<std::uint32_t>(ds.width));
    fi.write(reinterpret_cast<const char*>(ds.raw_images.data()),
             static_cast<std::streamsize>(ds.raw_images.size()));
    if (!fi) throw StateError("failed writing " + images_path);

    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw ConfigError("cannot open file for writing: " + labels_path);
    write_be32(fl, 0x00000801u);
    write_be32(fl, static_cast<std::uint32_t>(ds.n));
    for (int y : ds.labels) {
        const char b = static_cast<char>(static_cast<std::uint8_t>(y));
        fl.write(&b, 1);
    }
    if (!fl) throw StateError("failed writing " + labels_path);
}

Dataset load_cifar10(const std::vector<std::string>& batch_files, const std::string& split_tag) {
    if (batch_files.empty()) throw ConfigError("no CIFAR-10 batch files given");
    constexpr std::size_t kRecord = 3073;  // label byte + 3*32*32 pixels
    constexpr std::size_t kPixels = 3072;

    Dataset ds;
    ds.channels = 3;
    ds.height = 32;
    ds.width = 32;
    ds.class_count = 10;
    ds.split = split_tag;

    for (const std::string& path : batch_files) {
        const std::vector<std::uint8_t> bytes = read_file(path);
        if (bytes.size() % kRecord != 0) {
            throw ParseError("truncated CIFAR-10 record in " + path,
                             (bytes.size() / kRecord) * kRecord);
        }
        const std::size_t records = bytes.size() / kRecord;
        for (std::size_t r = 0; r < records; ++r) {
            const std::size_t off = r * kRecord;
            const std::uint8_t label = bytes[off];
            if (label >= 10) {
                throw ParseError("CIFAR-10 label " + std::to_string(label) + " out of range in " +
                                     path,
                                 off);
            }
            ds.labels.push_back(static_cast<int>(label));
            ds.raw_images.insert(ds.raw_images.end(), bytes.begin() + off + 1,
                                 bytes.begin() + off + 1 + kPixels);
        }
    }
    ds.n = ds.labels.size();
    standardize_from_raw(ds);
    return ds;
}

Dataset synth_blobs(std::size_t classes, std::size_t samples, std::size_t dims,
                    std::uint64_t seed, double margin) {
    if (classes < 2) throw ConfigError("synth_blobs needs at least 2 classes");
    if (classes > dims) {
        throw ConfigError("synth_blobs places one class per axis; need classes <= dims");
    }
    if (samples == 0) throw ConfigError("synth_blobs needs at least 1 sample");
    if (!(margin > 0.0)) throw ConfigError("synth_blobs margin must be positive");

    Dataset ds;
    ds.n = samples;
    ds.channels = dims;
    ds.height = 1;
    ds.width = 1;
    ds.class_count = classes;
    ds.split = "synth";
    ds.labels.resize(samples);
    ds.images = Tensor<float>({samples, dims, 1, 1});

    rng::Stream stream(seed, rng::stream_id(rng::Domain::SynthData));
    for (std::size_t i = 0; i < samples; ++i) {
        const std::size_t cls = i % classes;
        ds.labels[i] = static_cast<int>(cls);
        for (std::size_t d = 0; d < dims; ++d) {
            const double center = d == cls ? margin : 0.0;
            ds.images[i * dims + d] =
                static_cast<float>(center + stream.normal(i * dims + d));
        }
    }

    // Per-dimension standardization (affine per axis keeps the margins linear).
    ds.channel_mean.assign(dims, 0.0);
    ds.channel_std.assign(dims, 1.0);
    for (std::size_t d = 0; d < dims; ++d) {
        double sum = 0.0;
        for (std::size_t i = 0; i < samples; ++i) sum += ds.images[i * dims + d];
        const double mean = sum / static_cast<double>(samples);
        double var_acc = 0.0;
        for (std::size_t i = 0; i < samples; ++i) {
            const double diff = ds.images[i * dims + d] - mean;
            var_acc += diff * diff;
        }
        double sd = std::sqrt(var_acc / static_cast<double>(samples));
        if (sd == 0.0) sd = 1.0;
        ds.channel_mean[d] = mean;
        ds.channel_std[d] = sd;
        for (std::size_t i = 0; i < samples; ++i) {
            ds.images[i * dims + d] =
                static_cast<float>((ds.images[i * dims + d] - mean) / sd);
        }
    }
    return ds;
}

Dataset stratified_subset(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k == 0 || k > ds.n) {
        throw ConfigError("subset size " + std::to_string(k) + " outside [1, " +
                          std::to_string(ds.n) + "]");
    }
    if (ds.class_count == 0) throw ContractError("dataset has no classes");

    std::vector<std::vector<std::size_t>> by_class(ds.class_count);
    for (std::size_t i = 0; i < ds.n; ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    const std::size_t base = k / ds.class_count;
    const std::size_t rem = k % ds.class_count;
    std::vector<std::size_t> selected;
    selected.reserve(k);
    for (std::size_t c = 0; c < ds.class_count; ++c) {
        const std::size_t need = base + (c < rem ? 1 : 0);
        if (need > by_class[c].size()) {
            throw ConfigError("class " + std::to_string(c) + " has only " +
                              std::to_string(by_class[c].size()) + " samples, subset needs " +
                              std::to_string(need));
        }
        const std::vector<std::size_t> perm =
            rng::permutation(by_class[c].size(), seed, rng::stream_id(rng::Domain::Subset, c));
        for (std::size_t j = 0; j < need; ++j) selected.push_back(by_class[c][perm[j]]);
    }
    std::sort(selected.begin(), selected.end());

    Dataset out;
    out.n = k;
    out.channels = ds.channels;
    out.height = ds.height;
    out.width = ds.width;
    out.class_count = ds.class_count;
    out.split = ds.split + "-subset" + std::to_string(k);
    out.labels.reserve(k);
    const std::size_t per_image = ds.channels * ds.height * ds.width;
    for (std::size_t idx : selected) out.labels.push_back(ds.labels[idx]);

    if (!ds.raw_images.empty()) {
        out.raw_images.reserve(k * per_image);
        for (std::size_t idx : selected) {
            const std::uint8_t* p = ds.raw_images.data() + idx * per_image;
            out.raw_images.insert(out.raw_images.end(), p, p + per_image);
        }
        standardize_from_raw(out);  // the subset is its own split
    } else {
        out.images = Tensor<float>({k, ds.channels, ds.height, ds.width});
        for (std::size_t j = 0; j < selected.size(); ++j) {
            const float* p = ds.images.data() + selected[j] * per_image;
            std::copy(p, p + per_image, out.images.data() + j * per_image);
        }
        out.channel_mean = ds.channel_mean;
        out.channel_std = ds.channel_std;
    }
    return out;
}

}  // namespace eg
