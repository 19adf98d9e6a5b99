#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eg/dataio.hpp"
#include "eg/diagnostics.hpp"
#include "eg/feedback.hpp"
#include "eg/network.hpp"
#include "eg/pruner.hpp"

namespace eg {

enum class LrSchedule { Constant, StepDecay };

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    double lr = 0.01;
    double momentum = 0.9;
    LrSchedule schedule = LrSchedule::Constant;
    std::vector<std::size_t> decay_epochs;  // 1-based epochs at which lr is scaled
    double decay_factor = 0.1;

    FeedbackMode mode = FeedbackMode::BP;
    bool freeze_signs = false;
    std::map<std::size_t, FeedbackMode> overrides;
    PruneConfig prune;

    std::uint64_t seed = 0;
    std::size_t eval_every = 1;  // epochs between validation passes (0 = never)
    std::size_t diag_every = 1;  // epochs between angle/histogram samples (0 = never)
    bool diag_per_step = false;  // sample every step instead of once per epoch
    std::size_t checkpoint_every = 0;  // epochs between checkpoints (0 = final only)
    std::size_t hist_bins = 0;         // 0 disables gradient histograms
    bool timing = false;  // record wall_s; off by default so reruns are byte-identical

    void validate() const;  // throws ConfigError
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_acc;
    std::map<std::string, double> angles;    // layer name -> mean degrees this epoch
    std::map<std::string, double> sparsity;  // layer name -> mean realized zero fraction
    double wall_s = 0.0;
};

struct TrainReport {
    std::vector<EpochMetrics> epochs;
    std::vector<AngleRecord> angle_records;  // every sampled angle, for angles.csv
    std::vector<GradHistogram> histograms;
    std::map<std::size_t, std::string> layer_names;  // weighted layer index -> name
    std::map<std::size_t, std::vector<double>> epoch_zero_fraction;  // layer -> per epoch
    std::optional<double> final_val_acc;
};

/// Test instrumentation: called with exactly the delta each weighted layer's
/// weight gradient consumes (post-prune when pruning is on).
struct TrainHooks {
    std::function<void(std::size_t layer, const Tensor<float>& delta)> on_weight_grad;
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Run the three-phase loop for cfg.epochs over train_data. When out_dir is
/// nonempty, writes out_dir/metrics.jsonl (one JSON object per epoch) and
/// checkpoints under out_dir/checkpoints/. A non-finite loss aborts with
/// DivergedError; checkpoints already written stay on disk.
TrainReport train(Network<float>& net, const Dataset& train_data, const Dataset* val_data,
                  const TrainConfig& cfg, const std::string& out_dir = "",
                  const TrainHooks& hooks = {});

/// Eval-mode loss and argmax accuracy (ties go to the lowest class index).
EvalResult evaluate(Network<float>& net, const Dataset& data, std::size_t batch_size = 256);

/// A named comparison entry: feedback mode plus whether pruning is active.
struct ModeRun {
    std::string name;
    FeedbackMode mode = FeedbackMode::BP;
    bool prune = false;
};

/// Parse "bp" | "fa" | "signsym" | "binarysign" | "signsym_prune".
ModeRun mode_run_from_name(const std::string& name);

struct CompareResult {
    std::vector<std::pair<std::string, TrainReport>> runs;  // in requested order
};

/// Train one fresh, identically seeded network per mode on the same data.
/// When out_dir is nonempty each run writes out_dir/<mode>/metrics.jsonl.
CompareResult compare_modes(const NetworkConfig& netcfg, const Dataset& train_data,
                            const Dataset* val_data, const TrainConfig& base,
                            const std::vector<std::string>& modes,
                            const std::string& out_dir = "");

}  // namespace eg
