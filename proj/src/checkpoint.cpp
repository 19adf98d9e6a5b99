#include "eg/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "eg/errors.hpp"

namespace eg {

namespace {

constexpr char kMagic[4] = {'E', 'F', 'G', 'D'};
constexpr std::uint32_t kVersion = 1;

using json = nlohmann::json;

json spec_to_json(const LayerSpec& s) {
    return json{{"kind", layer_kind_name(s.kind)},
                {"out_channels", s.out_channels},
                {"kernel", s.kernel},
                {"stride", s.stride},
                {"pad", s.pad},
                {"out_features", s.out_features},
                {"momentum", s.momentum},
                {"epsilon", s.epsilon},
                {"trainable", s.trainable}};
}

LayerSpec spec_from_json(const json& j) {
    LayerSpec s;
    s.kind = layer_kind_from_name(j.at("kind").get<std::string>());
    s.out_channels = j.at("out_channels").get<std::size_t>();
    s.kernel = j.at("kernel").get<std::size_t>();
    s.stride = j.at("stride").get<std::size_t>();
    s.pad = j.at("pad").get<std::size_t>();
    s.out_features = j.at("out_features").get<std::size_t>();
    s.momentum = j.at("momentum").get<double>();
    s.epsilon = j.at("epsilon").get<double>();
    s.trainable = j.at("trainable").get<bool>();
    return s;
}

/// The persisted tensors of one layer, in declaration order.
std::vector<const Tensor<float>*> layer_arrays(const Layer<float>& l) {
    std::vector<const Tensor<float>*> out;
    for (const Tensor<float>* t :
         {&l.weight, &l.bias, &l.gamma, &l.beta, &l.running_mean, &l.running_var}) {
        if (t->size() > 0) out.push_back(t);
    }
    return out;
}

void write_u32_le(std::ofstream& f, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                       static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
    f.write(b, 4);
}

void write_u64_le(std::ofstream& f, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
    f.write(b, 8);
}

std::uint32_t read_u32_le(const std::vector<char>& buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(buf[off + i]);
    return v;
}

std::uint64_t read_u64_le(const std::vector<char>& buf, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(buf[off + i]);
    return v;
}

}  // namespace

void save_checkpoint(const Network<float>& net, const std::string& path) {
    json header;
    header["version"] = kVersion;
    header["seed"] = net.seed;
    header["input_shape"] = net.input_shape;
    header["layers"] = json::array();
    for (const Layer<float>& l : net.layers) header["layers"].push_back(spec_to_json(l.spec));
    const std::string header_str = header.dump();

    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot open checkpoint for writing: " + path);

    f.write(kMagic, 4);
    write_u32_le(f, kVersion);
    write_u64_le(f, header_str.size());
    f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const Layer<float>& l : net.layers) {
        for (const Tensor<float>* t : layer_arrays(l)) {
            f.write(reinterpret_cast<const char*>(t->data()),
                    static_cast<std::streamsize>(t->size() * sizeof(float)));
        }
    }
    if (!f) throw StateError("failed writing checkpoint " + path);
}

Network<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open checkpoint: " + path);
    std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < 16) throw ParseError("checkpoint too short for its header", buf.size());
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw ParseError("bad checkpoint magic: expected \"EFGD\"", 0);
    }
    const std::uint32_t version = read_u32_le(buf, 4);
    if (version != kVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
    }
    const std::uint64_t header_len = read_u64_le(buf, 8);
    if (buf.size() < 16 + header_len) {
        throw ParseError("checkpoint header extends past end of file", buf.size());
    }

    json header;
    try {
        header = json::parse(buf.begin() + 16, buf.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid checkpoint header JSON: ") + e.what(), 16);
    }

    NetworkConfig config;
    std::uint64_t seed = 0;
    try {
        seed = header.at("seed").get<std::uint64_t>();
        config.input_shape = header.at("input_shape").get<std::vector<std::size_t>>();
        for (const json& lj : header.at("layers")) config.layers.push_back(spec_from_json(lj));
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint header missing fields: ") + e.what(), 16);
    }

    Network<float> net = build_network<float>(config, seed);

    std::size_t off = 16 + header_len;
    for (Layer<float>& l : net.layers) {
        for (const Tensor<float>* ct : layer_arrays(l)) {
            auto* t = const_cast<Tensor<float>*>(ct);
            const std::size_t bytes = t->size() * sizeof(float);
            if (off + bytes > buf.size()) {
                throw ParseError("checkpoint parameter data truncated", buf.size());
            }
            std::memcpy(t->data(), buf.data() + off, bytes);
            off += bytes;
        }
    }
    if (off != buf.size()) throw ParseError("trailing bytes after checkpoint data", off);
    return net;
}

}  // namespace eg
