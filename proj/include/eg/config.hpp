#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eg/costmodel.hpp"
#include "eg/dataio.hpp"
#include "eg/network.hpp"
#include "eg/trainer.hpp"

namespace eg {

enum class DataKind { MnistIdx, Cifar10, SynthBlobs };

const char* data_kind_name(DataKind k);
DataKind data_kind_from_name(const std::string& name);

/// Where the training/validation data comes from. Only the fields relevant
/// to `kind` are consulted; the parser rejects keys from other kinds.
struct DataSpec {
    DataKind kind = DataKind::SynthBlobs;
    // mnist_idx: paths to big-endian IDX files. Validation pair optional.
    std::string train_images, train_labels, val_images, val_labels;
    // cifar10: binary batch files. Validation list optional.
    std::vector<std::string> train_batches, val_batches;
    // synth_blobs
    std::size_t classes = 2;
    std::size_t samples = 256;
    std::size_t dims = 8;
    double margin = 6.0;
    std::size_t val_samples = 0;
};

/// Everything a run needs, resolved from a JSON file plus CLI overrides.
/// One master seed feeds weight init, feedback init, shuffling, pruning
/// and synthetic data.
struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t threads = 0;  // 0 = hardware default
    std::string out_dir = "run";
    std::size_t subset = 0;  // 0 = full training split
    DataSpec data;
    NetworkConfig network;
    TrainConfig train;
    CostParams cost;
};

/// Strict parse: unknown keys anywhere raise ConfigError naming the key and
/// its object path. The master seed is copied into train.seed / prune.seed.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Full round-trippable serialization: parse_run_config(run_config_json(c))
/// reproduces c, so the emitted file replays the run exactly.
nlohmann::json run_config_json(const RunConfig& cfg);

nlohmann::json cost_report_json(const CostReport& report);

/// Loads the train (and optional validation) splits `spec` describes; a
/// nonzero subset stratifies the training split down to that many samples.
std::pair<Dataset, std::optional<Dataset>> load_datasets(const DataSpec& spec,
                                                         std::size_t subset,
                                                         std::uint64_t seed);

}  // namespace eg
