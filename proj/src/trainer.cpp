#include "eg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "eg/checkpoint.hpp"
#include "eg/errors.hpp"
#include "eg/rng.hpp"

namespace eg {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("lr must be nonnegative, got " + std::to_string(lr));
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("momentum must lie in [0, 1), got " + std::to_string(momentum));
    }
    if (schedule == LrSchedule::StepDecay && !(decay_factor > 0.0 && decay_factor <= 1.0)) {
        throw ConfigError("decay_factor must lie in (0, 1]");
    }
    prune.validate();
}

namespace {

using json = nlohmann::json;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t p = 1;
    for (std::size_t e : shape) p *= e;
    return p;
}

double effective_lr(const TrainConfig& cfg, std::size_t epoch) {
    if (cfg.schedule == LrSchedule::Constant) return cfg.lr;
    double lr = cfg.lr;
    for (std::size_t at : cfg.decay_epochs) {
        if (epoch >= at) lr *= cfg.decay_factor;
    }
    return lr;
}

void fill_batch(const Dataset& ds, const std::vector<std::size_t>& perm, std::size_t begin,
                std::size_t end, const std::vector<std::size_t>& input_shape,
                std::size_t per_sample, Tensor<float>& x, std::vector<int>& y) {
    const std::size_t bn = end - begin;
    std::vector<std::size_t> shape;
    shape.reserve(input_shape.size() + 1);
    shape.push_back(bn);
    for (std::size_t e : input_shape) shape.push_back(e);
    x = Tensor<float>(std::move(shape));
    y.resize(bn);
    for (std::size_t i = 0; i < bn; ++i) {
        const std::size_t src = perm[begin + i];
        const float* p = ds.images.data() + src * per_sample;
        std::copy(p, p + per_sample, x.data() + i * per_sample);
        y[i] = ds.labels[src];
    }
}

json metrics_json(const EpochMetrics& m) {
    json j;
    j["epoch"] = m.epoch;
    j["train_loss"] = m.train_loss;
    j["train_acc"] = m.train_acc;
    if (m.val_acc.has_value()) {
        j["val_acc"] = *m.val_acc;
    } else {
        j["val_acc"] = nullptr;
    }
    j["angles"] = json::object();
    for (const auto& [name, deg] : m.angles) j["angles"][name] = deg;
    j["sparsity"] = json::object();
    for (const auto& [name, frac] : m.sparsity) j["sparsity"][name] = frac;
    j["wall_s"] = m.wall_s;
    return j;
}

struct MeanAcc {
    double sum = 0.0;
    std::size_t count = 0;
    void add(double v) {
        sum += v;
        ++count;
    }
    double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
};

}  // namespace

EvalResult evaluate(Network<float>& net, const Dataset& data, std::size_t batch_size) {
    if (data.size() == 0) throw ContractError("cannot evaluate on an empty dataset");
    if (batch_size == 0) throw ContractError("evaluation batch size must be >= 1");
    const std::size_t per_sample = shape_product(net.input_shape);
    if (data.images.size() != data.n * per_sample) {
        throw DimError("dataset sample size " + std::to_string(data.images.size() / data.n) +
                       " does not match network input " + std::to_string(per_sample));
    }

    std::vector<std::size_t> order(data.n);
    for (std::size_t i = 0; i < data.n; ++i) order[i] = i;

    double loss_sum = 0.0;
    std::size_t correct = 0;
    ForwardTrace<float> trace;
    Tensor<float> x;
    std::vector<int> y;
    for (std::size_t begin = 0; begin < data.n; begin += batch_size) {
        const std::size_t end = std::min(data.n, begin + batch_size);
        fill_batch(data, order, begin, end, net.input_shape, per_sample, x, y);
        const ForwardResult r = net.forward(x, y, trace, /*training=*/false);
        loss_sum += r.loss * static_cast<double>(end - begin);
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (r.predictions[i] == y[i]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(data.n),
            static_cast<double>(correct) / static_cast<double>(data.n)};
}

TrainReport train(Network<float>& net, const Dataset& train_data, const Dataset* val_data,
                  const TrainConfig& cfg, const std::string& out_dir, const TrainHooks& hooks) {
    cfg.validate();
    if (train_data.size() == 0) throw ContractError("cannot train on an empty dataset");
    const std::size_t per_sample = shape_product(net.input_shape);
    if (train_data.images.size() != train_data.n * per_sample) {
        throw DimError("dataset sample size " +
                       std::to_string(train_data.images.size() / train_data.n) +
                       " does not match network input " + std::to_string(per_sample));
    }

    FeedbackState<float> feedback =
        init_feedback(net, cfg.mode, cfg.seed, cfg.freeze_signs, cfg.overrides);
    std::vector<LayerGrads<float>> velocity;

    TrainReport report;
    const std::vector<std::size_t> weighted = net.weighted_layers();
    for (std::size_t l : weighted) {
        report.layer_names[l] =
            std::string(layer_kind_name(net.layers[l].spec.kind)) + "_" + std::to_string(l);
    }
    const std::size_t L = net.layers.size();
    const std::size_t n = train_data.size();
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

    std::ofstream metrics_out;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::filesystem::create_directories(out_dir + "/checkpoints");
        metrics_out.open(out_dir + "/metrics.jsonl", std::ios::trunc);
        if (!metrics_out) throw ConfigError("cannot open " + out_dir + "/metrics.jsonl");
    }

    std::map<std::size_t, double> sigma_ema;                       // RunningEma state
    std::map<std::size_t, std::pair<double, double>> hist_range;   // frozen at first sample
    std::uint64_t global_step = 0;

    ForwardTrace<float> trace;
    Tensor<float> x;
    std::vector<int> y;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = effective_lr(cfg, epoch);
        const std::vector<std::size_t> perm =
            rng::permutation(n, cfg.seed, rng::stream_id(rng::Domain::Shuffle, 0, epoch));

        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::map<std::size_t, MeanAcc> epoch_sparsity;  // weighted layer -> mean zero fraction
        std::map<std::size_t, MeanAcc> epoch_angles;
        const bool diag_epoch = cfg.diag_every != 0 && epoch % cfg.diag_every == 0;

        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const std::size_t begin = step * cfg.batch_size;
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            fill_batch(train_data, perm, begin, end, net.input_shape, per_sample, x, y);

            const bool sample_diag =
                diag_epoch && (cfg.diag_per_step || step + 1 == steps_per_epoch);

            try {
                const ForwardResult fwd = net.forward(x, y, trace, /*training=*/true);
                loss_sum += fwd.loss * static_cast<double>(end - begin);
                for (std::size_t i = 0; i < y.size(); ++i) {
                    if (fwd.predictions[i] == y[i]) ++correct;
                }

                // Phase 2: walk the error down, substituting the modulatory
                // matrix at weighted layers and pruning on arrival there.
                std::map<std::size_t, Tensor<float>> delta_store;  // layers owning grads
                std::map<std::size_t, Tensor<float>> raw_delta;    // pre-prune, diagnostics
                Tensor<float> delta = net.loss_error(trace);
                std::size_t products = 0;
                for (std::size_t l = L - 1; l-- > 0;) {
                    const Layer<float>& lay = net.layers[l];
                    const bool w = is_weighted(lay.spec.kind);
                    if (w) {
                        if (sample_diag && cfg.hist_bins >= 2) raw_delta.emplace(l, delta);
                        if (cfg.prune.enabled && products >= 1) {
                            double sigma = reduce_std(delta);
                            if (cfg.prune.sigma_source == SigmaSource::RunningEma) {
                                auto it = sigma_ema.find(l);
                                if (it == sigma_ema.end()) {
                                    sigma_ema[l] = sigma;
                                } else {
                                    it->second = cfg.prune.ema_decay * it->second +
                                                 (1.0 - cfg.prune.ema_decay) * sigma;
                                    sigma = it->second;
                                }
                            }
                            const double tau = compute_threshold(cfg.prune.P, sigma);
                            rng::Stream st(cfg.prune.seed,
                                           rng::stream_id(rng::Domain::Prune, l, global_step));
                            auto [pruned, stats] = stochastic_prune(delta, tau, st);
                            delta = std::move(pruned);
                            epoch_sparsity[l].add(stats.realized_zero_fraction);
                        } else {
                            epoch_sparsity[l].add(0.0);
                        }
                        delta_store.emplace(l, delta);
                    } else if (lay.spec.kind == LayerKind::BatchNorm) {
                        delta_store.emplace(l, delta);
                    }
                    delta = net.backward_error(
                        l, delta, trace, w ? modulatory_matrix(feedback, l, lay.weight)
                                           : Tensor<float>());
                    if (w) ++products;
                }

                if (sample_diag) {
                    const std::map<std::size_t, Tensor<float>> bp_deltas =
                        shadow_bp_pass(net, trace);
                    std::map<std::size_t, Tensor<float>> eg_deltas;
                    for (std::size_t l : weighted) eg_deltas.emplace(l, delta_store.at(l));
                    const std::vector<AngleRecord> recs =
                        record_angles(eg_deltas, bp_deltas, epoch, global_step);
                    for (const AngleRecord& rec : recs) {
                        report.angle_records.push_back(rec);
                        if (rec.angle_deg.has_value()) {
                            epoch_angles[rec.layer].add(*rec.angle_deg);
                        }
                    }
                    for (const auto& [l, rd] : raw_delta) {
                        auto it = hist_range.find(l);
                        if (it == hist_range.end()) {
                            const double sd = reduce_std(rd);
                            const double half = sd > 0.0 ? 5.0 * sd : 1.0;
                            it = hist_range.emplace(l, std::make_pair(-half, half)).first;
                        }
                        report.histograms.push_back(record_histogram(
                            rd, cfg.hist_bins, it->second.first, it->second.second, epoch, l));
                    }
                }

                // Phase 3, strictly after phase 2: gradients, then one update.
                std::vector<LayerGrads<float>> grads(L);
                for (const auto& [l, d] : delta_store) {
                    if (hooks.on_weight_grad && is_weighted(net.layers[l].spec.kind)) {
                        hooks.on_weight_grad(l, d);
                    }
                    grads[l] = net.weight_grad(l, d, trace);
                }
                net.sgd_step(grads, lr, cfg.momentum, velocity);
            } catch (const NumericError& e) {
                throw DivergedError("training diverged at epoch " + std::to_string(epoch) +
                                    " step " + std::to_string(step) + ": " + e.what());
            }
            ++global_step;
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(n);
        m.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        if (val_data != nullptr && cfg.eval_every != 0 && epoch % cfg.eval_every == 0) {
            m.val_acc = evaluate(net, *val_data).accuracy;
        }
        for (const auto& [l, acc] : epoch_angles) m.angles[report.layer_names.at(l)] = acc.mean();
        for (const auto& [l, acc] : epoch_sparsity) {
            m.sparsity[report.layer_names.at(l)] = acc.mean();
            report.epoch_zero_fraction[l].push_back(acc.mean());
        }
        if (cfg.timing) {
            m.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        if (metrics_out.is_open()) metrics_out << metrics_json(m).dump() << "\n";
        report.epochs.push_back(std::move(m));

        if (!out_dir.empty() && cfg.checkpoint_every != 0 && epoch % cfg.checkpoint_every == 0) {
            save_checkpoint(net, out_dir + "/checkpoints/epoch_" + std::to_string(epoch) + ".ckpt");
        }
    }

    if (report.epochs.back().val_acc.has_value()) {
        report.final_val_acc = report.epochs.back().val_acc;
    }
    if (!out_dir.empty()) save_checkpoint(net, out_dir + "/checkpoints/final.ckpt");
    return report;
}

ModeRun mode_run_from_name(const std::string& name) {
    if (name == "signsym_prune") return {name, FeedbackMode::SignSym, true};
    return {name, feedback_mode_from_name(name), false};
}

CompareResult compare_modes(const NetworkConfig& netcfg, const Dataset& train_data,
                            const Dataset* val_data, const TrainConfig& base,
                            const std::vector<std::string>& modes, const std::string& out_dir) {
    if (modes.empty()) throw ConfigError("compare needs at least one mode");
    std::vector<ModeRun> runs;
    for (const std::string& name : modes) runs.push_back(mode_run_from_name(name));

    CompareResult result;
    for (const ModeRun& run : runs) {
        Network<float> net = build_network<float>(netcfg, base.seed);
        TrainConfig cfg = base;
        cfg.mode = run.mode;
        cfg.prune.enabled = run.prune;
        const std::string run_dir = out_dir.empty() ? "" : out_dir + "/" + run.name;
        result.runs.emplace_back(run.name, train(net, train_data, val_data, cfg, run_dir));
    }
    return result;
}

}  // namespace eg
