#include "eg/config.hpp"

#include <fstream>
#include <set>

#include "eg/errors.hpp"

namespace eg {

namespace {

using json = nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (allowed.find(key) == allowed.end()) {
            throw ConfigError("unknown config key \"" + key + "\" in " + path);
        }
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + "." + key + ": " + e.what());
    }
}

template <typename T>
T require(const json& j, const char* key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(path + " is missing required key \"" + key + "\"");
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + "." + key + ": " + e.what());
    }
}

LayerSpec parse_layer(const json& j, const std::string& path) {
    const std::string kind = require<std::string>(j, "kind", path);
    LayerSpec spec;
    if (kind == "conv2d") {
        check_keys(j, {"kind", "out_channels", "kernel", "stride", "pad", "trainable"}, path);
        spec = LayerSpec::conv2d(require<std::size_t>(j, "out_channels", path),
                                 require<std::size_t>(j, "kernel", path),
                                 get_or<std::size_t>(j, "stride", 1, path),
                                 get_or<std::size_t>(j, "pad", 0, path));
    } else if (kind == "linear") {
        check_keys(j, {"kind", "out_features", "trainable"}, path);
        spec = LayerSpec::linear(require<std::size_t>(j, "out_features", path));
    } else if (kind == "relu") {
        check_keys(j, {"kind"}, path);
        spec = LayerSpec::relu();
    } else if (kind == "batch_norm") {
        check_keys(j, {"kind", "momentum", "epsilon", "trainable"}, path);
        spec = LayerSpec::batch_norm(get_or<double>(j, "momentum", 0.1, path),
                                     get_or<double>(j, "epsilon", 1e-5, path));
    } else if (kind == "max_pool2d") {
        check_keys(j, {"kind", "kernel", "stride"}, path);
        spec = LayerSpec::max_pool(require<std::size_t>(j, "kernel", path),
                                   get_or<std::size_t>(j, "stride", 0, path));
    } else if (kind == "softmax_cross_entropy") {
        check_keys(j, {"kind"}, path);
        spec = LayerSpec::softmax_cross_entropy();
    } else if (kind == "mse_output") {
        check_keys(j, {"kind"}, path);
        spec = LayerSpec::mse_output();
    } else {
        throw ConfigError(path + ": unknown layer kind \"" + kind + "\"");
    }
    spec.trainable = get_or<bool>(j, "trainable", true, path);
    return spec;
}

json layer_json(const LayerSpec& s) {
    json j;
    j["kind"] = layer_kind_name(s.kind);
    switch (s.kind) {
        case LayerKind::Conv2d:
            j["out_channels"] = s.out_channels;
            j["kernel"] = s.kernel;
            j["stride"] = s.stride;
            j["pad"] = s.pad;
            j["trainable"] = s.trainable;
            break;
        case LayerKind::Linear:
            j["out_features"] = s.out_features;
            j["trainable"] = s.trainable;
            break;
        case LayerKind::BatchNorm:
            j["momentum"] = s.momentum;
            j["epsilon"] = s.epsilon;
            j["trainable"] = s.trainable;
            break;
        case LayerKind::MaxPool2d:
            j["kernel"] = s.kernel;
            j["stride"] = s.stride;
            break;
        default:
            break;
    }
    return j;
}

NetworkConfig parse_network(const json& j, const std::string& path) {
    check_keys(j, {"input_shape", "layers"}, path);
    NetworkConfig net;
    net.input_shape = require<std::vector<std::size_t>>(j, "input_shape", path);
    const json& layers = j.find("layers") != j.end() ? j.at("layers") : json::array();
    if (!layers.is_array() || layers.empty()) {
        throw ConfigError(path + ".layers must be a nonempty array");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        net.layers.push_back(parse_layer(layers[i], path + ".layers[" + std::to_string(i) + "]"));
    }
    return net;
}

PruneConfig parse_prune(const json& j, const std::string& path) {
    check_keys(j, {"enabled", "P", "sigma_source", "ema_decay"}, path);
    PruneConfig p;
    p.enabled = get_or<bool>(j, "enabled", false, path);
    p.P = get_or<double>(j, "P", 0.0, path);
    const std::string src = get_or<std::string>(j, "sigma_source", "per_tensor_batch", path);
    if (src == "per_tensor_batch") {
        p.sigma_source = SigmaSource::PerTensorBatch;
    } else if (src == "running_ema") {
        p.sigma_source = SigmaSource::RunningEma;
    } else {
        throw ConfigError(path + ".sigma_source: unknown value \"" + src + "\"");
    }
    p.ema_decay = get_or<double>(j, "ema_decay", 0.9, path);
    return p;
}

TrainConfig parse_train(const json& j, const std::string& path) {
    check_keys(j,
               {"batch_size", "epochs", "lr", "momentum", "schedule", "decay_epochs",
                "decay_factor", "feedback", "freeze_signs", "overrides", "prune", "eval_every",
                "diag_every", "diag_per_step", "checkpoint_every", "hist_bins", "timing"},
               path);
    TrainConfig t;
    t.batch_size = get_or<std::size_t>(j, "batch_size", t.batch_size, path);
    t.epochs = get_or<std::size_t>(j, "epochs", t.epochs, path);
    t.lr = get_or<double>(j, "lr", t.lr, path);
    t.momentum = get_or<double>(j, "momentum", t.momentum, path);
    const std::string sched = get_or<std::string>(j, "schedule", "constant", path);
    if (sched == "constant") {
        t.schedule = LrSchedule::Constant;
    } else if (sched == "step_decay") {
        t.schedule = LrSchedule::StepDecay;
    } else {
        throw ConfigError(path + ".schedule: unknown value \"" + sched + "\"");
    }
    t.decay_epochs = get_or<std::vector<std::size_t>>(j, "decay_epochs", {}, path);
    t.decay_factor = get_or<double>(j, "decay_factor", t.decay_factor, path);
    t.mode = feedback_mode_from_name(get_or<std::string>(j, "feedback", "bp", path));
    t.freeze_signs = get_or<bool>(j, "freeze_signs", false, path);
    if (auto it = j.find("overrides"); it != j.end()) {
        if (!it->is_object()) throw ConfigError(path + ".overrides must be an object");
        for (const auto& [key, value] : it->items()) {
            std::size_t layer = 0;
            try {
                layer = std::stoul(key);
            } catch (const std::exception&) {
                throw ConfigError(path + ".overrides: key \"" + key +
                                  "\" is not a layer index");
            }
            if (!value.is_string()) {
                throw ConfigError(path + ".overrides." + key + " must be a mode string");
            }
            t.overrides[layer] = feedback_mode_from_name(value.get<std::string>());
        }
    }
    if (auto it = j.find("prune"); it != j.end()) t.prune = parse_prune(*it, path + ".prune");
    t.eval_every = get_or<std::size_t>(j, "eval_every", t.eval_every, path);
    t.diag_every = get_or<std::size_t>(j, "diag_every", t.diag_every, path);
    t.diag_per_step = get_or<bool>(j, "diag_per_step", t.diag_per_step, path);
    t.checkpoint_every = get_or<std::size_t>(j, "checkpoint_every", t.checkpoint_every, path);
    t.hist_bins = get_or<std::size_t>(j, "hist_bins", t.hist_bins, path);
    t.timing = get_or<bool>(j, "timing", t.timing, path);
    return t;
}

CostParams parse_cost(const json& j, const std::string& path) {
    check_keys(j, {"bytes_per_value", "bits_per_sign", "e_dram", "e_mac", "feedback_resident"},
               path);
    CostParams c;
    c.bytes_per_value = get_or<double>(j, "bytes_per_value", c.bytes_per_value, path);
    c.bits_per_sign = get_or<double>(j, "bits_per_sign", c.bits_per_sign, path);
    c.e_dram = get_or<double>(j, "e_dram", c.e_dram, path);
    c.e_mac = get_or<double>(j, "e_mac", c.e_mac, path);
    c.feedback_resident = get_or<bool>(j, "feedback_resident", c.feedback_resident, path);
    return c;
}

DataSpec parse_data(const json& j, const std::string& path) {
    DataSpec d;
    d.kind = data_kind_from_name(require<std::string>(j, "kind", path));
    switch (d.kind) {
        case DataKind::MnistIdx:
            check_keys(j, {"kind", "train_images", "train_labels", "val_images", "val_labels"},
                       path);
            d.train_images = require<std::string>(j, "train_images", path);
            d.train_labels = require<std::string>(j, "train_labels", path);
            d.val_images = get_or<std::string>(j, "val_images", "", path);
            d.val_labels = get_or<std::string>(j, "val_labels", "", path);
            if (d.val_images.empty() != d.val_labels.empty()) {
                throw ConfigError(path + ": val_images and val_labels must be given together");
            }
            break;
        case DataKind::Cifar10:
            check_keys(j, {"kind", "train_batches", "val_batches"}, path);
            d.train_batches = require<std::vector<std::string>>(j, "train_batches", path);
            d.val_batches = get_or<std::vector<std::string>>(j, "val_batches", {}, path);
            break;
        case DataKind::SynthBlobs:
            check_keys(j, {"kind", "classes", "samples", "dims", "margin", "val_samples"}, path);
            d.classes = get_or<std::size_t>(j, "classes", d.classes, path);
            d.samples = get_or<std::size_t>(j, "samples", d.samples, path);
            d.dims = get_or<std::size_t>(j, "dims", d.dims, path);
            d.margin = get_or<double>(j, "margin", d.margin, path);
            d.val_samples = get_or<std::size_t>(j, "val_samples", d.val_samples, path);
            break;
    }
    return d;
}

json data_json(const DataSpec& d) {
    json j;
    j["kind"] = data_kind_name(d.kind);
    switch (d.kind) {
        case DataKind::MnistIdx:
            j["train_images"] = d.train_images;
            j["train_labels"] = d.train_labels;
            if (!d.val_images.empty()) {
                j["val_images"] = d.val_images;
                j["val_labels"] = d.val_labels;
            }
            break;
        case DataKind::Cifar10:
            j["train_batches"] = d.train_batches;
            if (!d.val_batches.empty()) j["val_batches"] = d.val_batches;
            break;
        case DataKind::SynthBlobs:
            j["classes"] = d.classes;
            j["samples"] = d.samples;
            j["dims"] = d.dims;
            j["margin"] = d.margin;
            j["val_samples"] = d.val_samples;
            break;
    }
    return j;
}

}  // namespace

const char* data_kind_name(DataKind k) {
    switch (k) {
        case DataKind::MnistIdx: return "mnist_idx";
        case DataKind::Cifar10: return "cifar10";
        case DataKind::SynthBlobs: return "synth_blobs";
    }
    throw ContractError("unhandled data kind");
}

DataKind data_kind_from_name(const std::string& name) {
    if (name == "mnist_idx") return DataKind::MnistIdx;
    if (name == "cifar10") return DataKind::Cifar10;
    if (name == "synth_blobs") return DataKind::SynthBlobs;
    throw ConfigError("unknown data kind \"" + name + "\"");
}

RunConfig parse_run_config(const json& j) {
    check_keys(j, {"seed", "threads", "out_dir", "subset", "data", "network", "train", "cost"},
               "config");
    RunConfig cfg;
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed, "config");
    cfg.threads = get_or<std::size_t>(j, "threads", cfg.threads, "config");
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir, "config");
    cfg.subset = get_or<std::size_t>(j, "subset", cfg.subset, "config");
    if (auto it = j.find("data"); it != j.end()) cfg.data = parse_data(*it, "config.data");
    if (auto it = j.find("network"); it != j.end()) {
        cfg.network = parse_network(*it, "config.network");
    } else {
        throw ConfigError("config is missing required key \"network\"");
    }
    if (auto it = j.find("train"); it != j.end()) cfg.train = parse_train(*it, "config.train");
    if (auto it = j.find("cost"); it != j.end()) cfg.cost = parse_cost(*it, "config.cost");
    cfg.train.seed = cfg.seed;
    cfg.train.prune.seed = cfg.seed;
    cfg.train.validate();
    cfg.cost.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_run_config(j);
}

json run_config_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["out_dir"] = cfg.out_dir;
    j["subset"] = cfg.subset;
    j["data"] = data_json(cfg.data);

    json net;
    net["input_shape"] = cfg.network.input_shape;
    net["layers"] = json::array();
    for (const LayerSpec& s : cfg.network.layers) net["layers"].push_back(layer_json(s));
    j["network"] = net;

    json t;
    t["batch_size"] = cfg.train.batch_size;
    t["epochs"] = cfg.train.epochs;
    t["lr"] = cfg.train.lr;
    t["momentum"] = cfg.train.momentum;
    t["schedule"] = cfg.train.schedule == LrSchedule::Constant ? "constant" : "step_decay";
    t["decay_epochs"] = cfg.train.decay_epochs;
    t["decay_factor"] = cfg.train.decay_factor;
    t["feedback"] = feedback_mode_name(cfg.train.mode);
    t["freeze_signs"] = cfg.train.freeze_signs;
    t["overrides"] = json::object();
    for (const auto& [layer, mode] : cfg.train.overrides) {
        t["overrides"][std::to_string(layer)] = feedback_mode_name(mode);
    }
    json p;
    p["enabled"] = cfg.train.prune.enabled;
    p["P"] = cfg.train.prune.P;
    p["sigma_source"] = cfg.train.prune.sigma_source == SigmaSource::PerTensorBatch
                            ? "per_tensor_batch"
                            : "running_ema";
    p["ema_decay"] = cfg.train.prune.ema_decay;
    t["prune"] = p;
    t["eval_every"] = cfg.train.eval_every;
    t["diag_every"] = cfg.train.diag_every;
    t["diag_per_step"] = cfg.train.diag_per_step;
    t["checkpoint_every"] = cfg.train.checkpoint_every;
    t["hist_bins"] = cfg.train.hist_bins;
    t["timing"] = cfg.train.timing;
    j["train"] = t;

    json c;
    c["bytes_per_value"] = cfg.cost.bytes_per_value;
    c["bits_per_sign"] = cfg.cost.bits_per_sign;
    c["e_dram"] = cfg.cost.e_dram;
    c["e_mac"] = cfg.cost.e_mac;
    c["feedback_resident"] = cfg.cost.feedback_resident;
    j["cost"] = c;
    return j;
}

json cost_report_json(const CostReport& report) {
    static const char* kPhaseNames[3] = {"forward", "backward", "weight_grad"};
    auto totals_json = [](const CostTotals& t) {
        json j;
        j["macs_total"] = t.macs_total;
        j["macs_effective"] = t.macs_effective;
        j["dram_bytes"] = t.dram_bytes;
        j["energy"] = t.energy;
        return j;
    };
    json j;
    j["mode"] = feedback_mode_name(report.mode);
    j["batch_n"] = report.batch_n;
    j["layers"] = json::array();
    for (const LayerCost& lc : report.layers) {
        json lj;
        lj["layer"] = lc.layer;
        lj["name"] = lc.name;
        lj["phases"] = json::array();
        for (std::size_t p = 0; p < 3; ++p) {
            json pj;
            pj["phase"] = kPhaseNames[p];
            pj["macs_total"] = lc.phases[p].macs_total;
            pj["macs_effective"] = lc.phases[p].macs_effective;
            pj["dram_bytes"] = lc.phases[p].dram_bytes;
            lj["phases"].push_back(pj);
        }
        j["layers"].push_back(lj);
    }
    j["totals"] = totals_json(report.totals);
    j["bp_totals"] = totals_json(report.bp_totals);
    json r;
    r["throughput_proxy"] = report.ratios.throughput_proxy;
    r["traffic_ratio"] = report.ratios.traffic_ratio;
    r["energy_ratio"] = report.ratios.energy_ratio;
    j["ratios"] = r;
    return j;
}

std::pair<Dataset, std::optional<Dataset>> load_datasets(const DataSpec& spec,
                                                         std::size_t subset,
                                                         std::uint64_t seed) {
    Dataset train;
    std::optional<Dataset> val;
    switch (spec.kind) {
        case DataKind::MnistIdx:
            train = load_idx(spec.train_images, spec.train_labels, "train");
            if (!spec.val_images.empty()) {
                val = load_idx(spec.val_images, spec.val_labels, "val");
            }
            break;
        case DataKind::Cifar10:
            train = load_cifar10(spec.train_batches, "train");
            if (!spec.val_batches.empty()) val = load_cifar10(spec.val_batches, "val");
            break;
        case DataKind::SynthBlobs:
            train = synth_blobs(spec.classes, spec.samples, spec.dims, seed, spec.margin);
            if (spec.val_samples > 0) {
                val = synth_blobs(spec.classes, spec.val_samples, spec.dims, seed + 1,
                                  spec.margin);
            }
            break;
    }
    if (subset > 0) train = stratified_subset(train, subset, seed);
    return {std::move(train), std::move(val)};
}

}  // namespace eg
