#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eg/dataio.hpp"
#include "eg/errors.hpp"
#include "eg/network.hpp"
#include "eg/trainer.hpp"

using namespace eg;
namespace fs = std::filesystem;

namespace {

fs::path fixture_dir() {
    const fs::path dir = fs::temp_directory_path() / "eg_dataio_fixtures";
    fs::create_directories(dir);
    return dir;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    REQUIRE(f.good());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                     std::istreambuf_iterator<char>());
}

void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 24));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x));
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t h, std::uint32_t w,
                                     const std::vector<std::uint8_t>& pixels,
                                     std::uint32_t magic = 0x00000803u) {
    std::vector<std::uint8_t> v;
    push_be32(v, magic);
    push_be32(v, n);
    push_be32(v, h);
    push_be32(v, w);
    v.insert(v.end(), pixels.begin(), pixels.end());
    return v;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels,
                                     std::uint32_t magic = 0x00000801u,
                                     std::uint32_t count_override = 0xFFFFFFFFu) {
    std::vector<std::uint8_t> v;
    push_be32(v, magic);
    push_be32(v, count_override == 0xFFFFFFFFu ? static_cast<std::uint32_t>(labels.size())
                                               : count_override);
    v.insert(v.end(), labels.begin(), labels.end());
    return v;
}

/// Two 2x2 images with known bytes plus labels {3, 1}.
struct TinyIdx {
    fs::path images, labels;
    std::vector<std::uint8_t> pixels = {0, 255, 128, 64, 10, 20, 30, 40};
};

TinyIdx make_tiny_idx(const std::string& tag) {
    TinyIdx t;
    const fs::path dir = fixture_dir();
    t.images = dir / (tag + "-images");
    t.labels = dir / (tag + "-labels");
    write_bytes(t.images, idx_images(2, 2, 2, t.pixels));
    write_bytes(t.labels, idx_labels({3, 1}));
    return t;
}

std::vector<std::uint8_t> cifar_record(std::uint8_t label, std::uint8_t fill) {
    std::vector<std::uint8_t> v(3073, fill);
    v[0] = label;
    return v;
}

}  // namespace

TEST_CASE("IDX loader decodes the fixture and standardizes from its own pixels") {
    TinyIdx t = make_tiny_idx("tiny");
    Dataset ds = load_idx(t.images.string(), t.labels.string(), "fixture");
    CHECK(ds.n == 2);
    CHECK(ds.channels == 1);
    CHECK(ds.height == 2);
    CHECK(ds.width == 2);
    CHECK(ds.labels == std::vector<int>{3, 1});
    CHECK(ds.class_count == 4);  // densest label is 3
    CHECK(ds.split == "fixture");
    CHECK(ds.raw_images == t.pixels);

    // reproduce the affine transform independently
    double mean = 0.0;
    for (std::uint8_t p : t.pixels) mean += p / 255.0;
    mean /= 8.0;
    double var = 0.0;
    for (std::uint8_t p : t.pixels) var += (p / 255.0 - mean) * (p / 255.0 - mean);
    const double sd = std::sqrt(var / 8.0);
    CHECK(ds.channel_mean[0] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(ds.channel_std[0] == doctest::Approx(sd).epsilon(1e-12));
    REQUIRE(ds.images.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        const double expect = (t.pixels[i] / 255.0 - mean) / sd;
        CHECK(ds.images[i] == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("IDX loader rejects malformed files with byte offsets") {
    const fs::path dir = fixture_dir();
    TinyIdx t = make_tiny_idx("bad");

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_idx((dir / "nope").string(), t.labels.string()), ConfigError);
    }
    SUBCASE("wrong image magic names expected and found") {
        const fs::path p = dir / "wrong-magic";
        write_bytes(p, idx_images(2, 2, 2, t.pixels, 0x00000802u));
        try {
            load_idx(p.string(), t.labels.string());
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("0x00000803") != std::string::npos);
            CHECK(msg.find("0x00000802") != std::string::npos);
            CHECK(msg.find("byte offset") != std::string::npos);
        }
    }
    SUBCASE("header shorter than 16 bytes") {
        const fs::path p = dir / "short-header";
        write_bytes(p, {0x00, 0x00, 0x08, 0x03, 0x00});
        CHECK_THROWS_AS(load_idx(p.string(), t.labels.string()), ParseError);
    }
    SUBCASE("truncated pixel payload reports the actual size") {
        const fs::path p = dir / "truncated";
        std::vector<std::uint8_t> half(t.pixels.begin(), t.pixels.begin() + 4);
        write_bytes(p, idx_images(2, 2, 2, half));
        try {
            load_idx(p.string(), t.labels.string());
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset == 20);  // 16-byte header + 4 pixels present
        }
    }
    SUBCASE("trailing image bytes") {
        const fs::path p = dir / "trailing";
        auto v = idx_images(2, 2, 2, t.pixels);
        v.push_back(0);
        write_bytes(p, v);
        try {
            load_idx(p.string(), t.labels.string());
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset == 24);  // first unexpected byte
        }
    }
    SUBCASE("wrong label magic") {
        const fs::path p = dir / "bad-labels";
        write_bytes(p, idx_labels({3, 1}, 0x00000803u));
        CHECK_THROWS_AS(load_idx(t.images.string(), p.string()), ParseError);
    }
    SUBCASE("label count disagrees with image count") {
        const fs::path p = dir / "count-mismatch";
        write_bytes(p, idx_labels({3, 1, 2}));
        try {
            load_idx(t.images.string(), p.string());
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset == 4);  // the count field
        }
    }
    SUBCASE("truncated labels") {
        const fs::path p = dir / "short-labels";
        write_bytes(p, idx_labels({3}, 0x00000801u, 2));
        CHECK_THROWS_AS(load_idx(t.images.string(), p.string()), ParseError);
    }
}

TEST_CASE("save_idx inverts load_idx byte-for-byte") {
    TinyIdx t = make_tiny_idx("rt");
    Dataset ds = load_idx(t.images.string(), t.labels.string());
    const fs::path dir = fixture_dir();
    const fs::path im2 = dir / "rt-images-out";
    const fs::path lb2 = dir / "rt-labels-out";
    save_idx(ds, im2.string(), lb2.string());
    CHECK(read_bytes(im2) == read_bytes(t.images));
    CHECK(read_bytes(lb2) == read_bytes(t.labels));

    // synthetic data keeps no raw bytes, so it cannot be serialized
    Dataset synth = synth_blobs(2, 8, 4, 1);
    CHECK_THROWS_AS(save_idx(synth, im2.string(), lb2.string()), StateError);
}

TEST_CASE("CIFAR-10 reader handles single and multi-record batches") {
    const fs::path dir = fixture_dir();

    SUBCASE("one record with label 7") {
        const fs::path p = dir / "cifar-one";
        write_bytes(p, cifar_record(7, 100));
        Dataset ds = load_cifar10({p.string()});
        CHECK(ds.n == 1);
        CHECK(ds.labels == std::vector<int>{7});
        CHECK(ds.channels == 3);
        CHECK(ds.height == 32);
        CHECK(ds.width == 32);
        CHECK(ds.class_count == 10);
        CHECK(ds.raw_images.size() == 3072);
    }
    SUBCASE("five records across two files") {
        const fs::path a = dir / "cifar-a";
        const fs::path b = dir / "cifar-b";
        std::vector<std::uint8_t> two = cifar_record(0, 1);
        const auto second = cifar_record(1, 2);
        two.insert(two.end(), second.begin(), second.end());
        write_bytes(a, two);
        std::vector<std::uint8_t> three = cifar_record(2, 3);
        for (std::uint8_t lbl : {4, 9}) {
            const auto rec = cifar_record(lbl, lbl);
            three.insert(three.end(), rec.begin(), rec.end());
        }
        write_bytes(b, three);
        Dataset ds = load_cifar10({a.string(), b.string()});
        CHECK(ds.n == 5);
        CHECK(ds.labels == std::vector<int>{0, 1, 2, 4, 9});
    }
    SUBCASE("truncated record") {
        const fs::path p = dir / "cifar-cut";
        std::vector<std::uint8_t> v = cifar_record(0, 1);
        v.resize(v.size() - 1);
        fs::remove(p);
        CHECK_THROWS_AS(load_cifar10({p.string(), p.string()}), ConfigError);  // missing file
        write_bytes(p, v);
        try {
            load_cifar10({p.string()});
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset == 0);  // zero complete records
        }
    }
    SUBCASE("label out of range carries the record offset") {
        const fs::path p = dir / "cifar-badlabel";
        std::vector<std::uint8_t> v = cifar_record(3, 1);
        const auto bad = cifar_record(10, 1);
        v.insert(v.end(), bad.begin(), bad.end());
        write_bytes(p, v);
        try {
            load_cifar10({p.string()});
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset == 3073);
        }
    }
    SUBCASE("no files") {
        CHECK_THROWS_AS(load_cifar10({}), ConfigError);
    }
}

TEST_CASE("synthetic blobs are balanced, deterministic, and standardized") {
    Dataset ds = synth_blobs(2, 64, 8, 5);
    CHECK(ds.n == 64);
    CHECK(ds.class_count == 2);
    CHECK(ds.channels == 8);
    CHECK(ds.images.shape() == std::vector<std::size_t>{64, 8, 1, 1});
    int c0 = 0, c1 = 0;
    for (int y : ds.labels) (y == 0 ? c0 : c1)++;
    CHECK(c0 == 32);
    CHECK(c1 == 32);

    Dataset again = synth_blobs(2, 64, 8, 5);
    bool same = true;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        if (ds.images[i] != again.images[i]) same = false;
    }
    CHECK(same);

    Dataset other = synth_blobs(2, 64, 8, 6);
    bool any_diff = false;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        if (ds.images[i] != other.images[i]) any_diff = true;
    }
    CHECK(any_diff);

    for (std::size_t d = 0; d < 8; ++d) {
        double sum = 0.0;
        for (std::size_t i = 0; i < 64; ++i) sum += ds.images[i * 8 + d];
        const double mean = sum / 64.0;
        double var = 0.0;
        for (std::size_t i = 0; i < 64; ++i) {
            var += (ds.images[i * 8 + d] - mean) * (ds.images[i * 8 + d] - mean);
        }
        CHECK(std::abs(mean) <= 1e-5);
        CHECK(std::abs(std::sqrt(var / 64.0) - 1.0) <= 1e-4);
    }

    CHECK_THROWS_AS(synth_blobs(1, 64, 8, 5), ConfigError);
    CHECK_THROWS_AS(synth_blobs(9, 64, 8, 5), ConfigError);  // classes > dims
    CHECK_THROWS_AS(synth_blobs(2, 0, 8, 5), ConfigError);
    CHECK_THROWS_AS(synth_blobs(2, 64, 8, 5, 0.0), ConfigError);
}

TEST_CASE("well-separated blobs are linearly classifiable to 100 percent") {
    Dataset ds = synth_blobs(3, 96, 6, 11, 6.0);
    NetworkConfig ncfg;
    ncfg.input_shape = {6, 1, 1};
    ncfg.layers = {LayerSpec::linear(3), LayerSpec::softmax_cross_entropy()};
    Network<float> net = build_network<float>(ncfg, 1);

    TrainConfig tcfg;
    tcfg.batch_size = 16;
    tcfg.epochs = 50;
    tcfg.lr = 0.1;
    tcfg.momentum = 0.9;
    tcfg.mode = FeedbackMode::BP;
    tcfg.seed = 1;
    tcfg.eval_every = 0;
    tcfg.diag_every = 0;
    train(net, ds, nullptr, tcfg);
    EvalResult ev = evaluate(net, ds, 64);
    CHECK(ev.accuracy == 1.0);
}

TEST_CASE("stratified subsets balance classes and stay deterministic") {
    Dataset ds = synth_blobs(4, 40, 8, 21);
    Dataset sub = stratified_subset(ds, 20, 3);
    CHECK(sub.n == 20);
    std::vector<int> counts(4, 0);
    for (int y : sub.labels) counts[static_cast<std::size_t>(y)]++;
    for (int c : counts) CHECK(c == 5);
    // synthetic parents pass their standardization constants through
    CHECK(sub.channel_mean == ds.channel_mean);
    CHECK(sub.channel_std == ds.channel_std);

    Dataset sub2 = stratified_subset(ds, 20, 3);
    CHECK(sub.labels == sub2.labels);
    bool same = true;
    for (std::size_t i = 0; i < sub.images.size(); ++i) {
        if (sub.images[i] != sub2.images[i]) same = false;
    }
    CHECK(same);

    Dataset sub3 = stratified_subset(ds, 20, 4);
    bool any_diff = sub.labels != sub3.labels;
    for (std::size_t i = 0; i < sub.images.size() && !any_diff; ++i) {
        if (sub.images[i] != sub3.images[i]) any_diff = true;
    }
    CHECK(any_diff);

    CHECK_THROWS_AS(stratified_subset(ds, 0, 1), ConfigError);
    CHECK_THROWS_AS(stratified_subset(ds, 41, 1), ConfigError);
}

TEST_CASE("uneven remainders go to the lowest classes; scarce classes fail loudly") {
    Dataset ds = synth_blobs(3, 30, 4, 8);  // 10 per class
    Dataset sub = stratified_subset(ds, 8, 5);
    std::vector<int> counts(3, 0);
    for (int y : sub.labels) counts[static_cast<std::size_t>(y)]++;
    CHECK(counts[0] == 3);  // 8 = 3 + 3 + 2
    CHECK(counts[1] == 3);
    CHECK(counts[2] == 2);

    // a fixture where one class cannot supply its share
    const fs::path dir = fixture_dir();
    const fs::path im = dir / "scarce-im";
    const fs::path lb = dir / "scarce-lb";
    write_bytes(im, idx_images(4, 2, 2, std::vector<std::uint8_t>(16, 9)));
    write_bytes(lb, idx_labels({0, 0, 0, 1}));
    Dataset uneven = load_idx(im.string(), lb.string());
    CHECK_THROWS_AS(stratified_subset(uneven, 4, 1), ConfigError);
}

TEST_CASE("raw-byte subsets are re-standardized from the selection") {
    const fs::path dir = fixture_dir();
    const fs::path im = dir / "resub-im";
    const fs::path lb = dir / "resub-lb";
    // 12 images, pixel value = image index so class means differ strongly
    std::vector<std::uint8_t> pixels;
    std::vector<std::uint8_t> labels;
    for (std::uint8_t i = 0; i < 12; ++i) {
        for (int j = 0; j < 4; ++j) pixels.push_back(static_cast<std::uint8_t>(i * 20));
        labels.push_back(i % 3);
    }
    write_bytes(im, idx_images(12, 2, 2, pixels));
    write_bytes(lb, idx_labels(labels));
    Dataset ds = load_idx(im.string(), lb.string());
    Dataset sub = stratified_subset(ds, 6, 7);

    CHECK(sub.raw_images.size() == 6 * 4);
    // the subset's standardized pixels must average to zero over ITS samples
    double sum = 0.0;
    for (std::size_t i = 0; i < sub.images.size(); ++i) sum += sub.images[i];
    CHECK(std::abs(sum / static_cast<double>(sub.images.size())) <= 1e-6);
    // selected indices are emitted in ascending order: labels follow i % 3
    for (std::size_t i = 0; i + 1 < sub.n; ++i) {
        // raw pixel value encodes the original index; ascending order holds
        CHECK(sub.raw_images[i * 4] <= sub.raw_images[(i + 1) * 4]);
    }
}

#ifdef EG_TEST_DATA_DIR
TEST_CASE("bundled handwritten-digit split loads and standardizes cleanly") {
    const std::string dir = std::string(EG_TEST_DATA_DIR) + "/mnist";
    Dataset ds = load_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte",
                          "train");
    CHECK(ds.n == 10000);
    CHECK(ds.channels == 1);
    CHECK(ds.height == 28);
    CHECK(ds.width == 28);
    CHECK(ds.class_count == 10);
    for (int y : ds.labels) {
        REQUIRE(y >= 0);
        REQUIRE(y <= 9);
    }

    double sum = 0.0;
    for (std::size_t i = 0; i < ds.images.size(); ++i) sum += ds.images[i];
    const double mean = sum / static_cast<double>(ds.images.size());
    double var = 0.0;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        var += (ds.images[i] - mean) * (ds.images[i] - mean);
    }
    const double sd = std::sqrt(var / static_cast<double>(ds.images.size()));
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(sd - 1.0) <= 1e-4);

    Dataset sub = stratified_subset(ds, 1000, 2);
    std::vector<int> counts(10, 0);
    for (int y : sub.labels) counts[static_cast<std::size_t>(y)]++;
    for (int c : counts) CHECK(c == 100);
}
#endif
