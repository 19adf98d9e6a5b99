#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eg/checkpoint.hpp"
#include "eg/config.hpp"
#include "eg/costmodel.hpp"
#include "eg/errors.hpp"
#include "eg/parallel.hpp"
#include "eg/pruner.hpp"
#include "eg/trainer.hpp"

namespace {

using json = nlohmann::json;

struct GlobalFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::string out_dir;
    std::size_t subset = 0;
};

void add_global_flags(CLI::App* sub, GlobalFlags& f) {
    sub->add_option("--config", f.config_path, "JSON run configuration")->required();
    sub->add_option("--seed", f.seed, "override the master seed");
    sub->add_option("--threads", f.threads, "worker thread cap (0 = hardware)");
    sub->add_option("--out-dir", f.out_dir, "override the run directory");
    sub->add_option("--subset", f.subset, "stratified training subset size (0 = full)");
}

eg::RunConfig resolve_config(const CLI::App* sub, const GlobalFlags& f) {
    eg::RunConfig cfg = eg::load_run_config(f.config_path);
    if (sub->count("--seed") > 0) {
        cfg.seed = f.seed;
        cfg.train.seed = f.seed;
        cfg.train.prune.seed = f.seed;
    }
    if (sub->count("--threads") > 0) cfg.threads = f.threads;
    if (sub->count("--out-dir") > 0) cfg.out_dir = f.out_dir;
    if (sub->count("--subset") > 0) cfg.subset = f.subset;

    int threads = static_cast<int>(cfg.threads);
    if (threads == 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        threads = hw == 0 ? 1 : static_cast<int>(hw);
    }
    eg::set_max_threads(threads);
    return cfg;
}

std::string fmt(double v) { return json(v).dump(); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw eg::ConfigError("cannot open " + path + " for writing");
    out << text;
}

void write_resolved_config(const eg::RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    write_text(cfg.out_dir + "/config.resolved.json",
               eg::run_config_json(cfg).dump(2) + "\n");
}

void write_angles_csv(const std::string& path, const eg::TrainReport& report) {
    std::ostringstream os;
    os << "epoch,step,layer,angle_deg\n";
    for (const eg::AngleRecord& r : report.angle_records) {
        os << r.epoch << "," << r.step << "," << r.layer << ",";
        if (r.angle_deg.has_value()) os << fmt(*r.angle_deg);
        os << "\n";
    }
    write_text(path, os.str());
}

void write_histograms(const std::string& out_dir, const eg::TrainReport& report) {
    for (const eg::GradHistogram& h : report.histograms) {
        std::ostringstream os;
        os << "bin_lo,bin_hi,count\n";
        os << "-inf," << fmt(h.lo) << "," << h.counts.front() << "\n";
        for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
            os << fmt(h.edges[b]) << "," << fmt(h.edges[b + 1]) << "," << h.counts[b + 1]
               << "\n";
        }
        os << fmt(h.hi) << ",inf," << h.counts.back() << "\n";
        write_text(out_dir + "/hist_" + std::to_string(h.layer) + "_" +
                       std::to_string(h.epoch) + ".csv",
                   os.str());
    }
}

std::map<std::size_t, double> measured_zero_fractions(const eg::TrainReport& report) {
    std::map<std::size_t, double> zf;
    for (const auto& [layer, per_epoch] : report.epoch_zero_fraction) {
        double sum = 0.0;
        for (double v : per_epoch) sum += v;
        zf[layer] = per_epoch.empty() ? 0.0 : sum / static_cast<double>(per_epoch.size());
    }
    return zf;
}

void write_cost_json(const eg::RunConfig& cfg, const eg::Network<float>& net,
                     const std::map<std::size_t, double>& zf) {
    const eg::CostReport report = eg::build_cost_report(net, cfg.train.mode, cfg.cost,
                                                        cfg.train.batch_size, zf);
    write_text(cfg.out_dir + "/cost.json", eg::cost_report_json(report).dump(2) + "\n");
}

int cmd_train(const eg::RunConfig& cfg) {
    auto [train_ds, val] = eg::load_datasets(cfg.data, cfg.subset, cfg.seed);
    eg::Network<float> net = eg::build_network<float>(cfg.network, cfg.seed);
    write_resolved_config(cfg);
    const eg::TrainReport report =
        eg::train(net, train_ds, val ? &*val : nullptr, cfg.train, cfg.out_dir);
    write_angles_csv(cfg.out_dir + "/angles.csv", report);
    write_histograms(cfg.out_dir, report);
    write_cost_json(cfg, net, measured_zero_fractions(report));
    const eg::EpochMetrics& last = report.epochs.back();
    std::cerr << "done: train_acc=" << last.train_acc;
    if (last.val_acc.has_value()) std::cerr << " val_acc=" << *last.val_acc;
    std::cerr << "\n";
    return 0;
}

int cmd_compare(const eg::RunConfig& cfg, const std::vector<std::string>& modes) {
    if (modes.empty()) throw eg::ConfigError("--modes requires at least one mode");
    auto [train_ds, val] = eg::load_datasets(cfg.data, cfg.subset, cfg.seed);
    write_resolved_config(cfg);
    const eg::CompareResult result = eg::compare_modes(
        cfg.network, train_ds, val ? &*val : nullptr, cfg.train, modes, cfg.out_dir);

    // Accuracy matrix: validation accuracy when the epoch evaluated one,
    // training accuracy otherwise.
    std::ostringstream os;
    os << "epoch";
    for (const auto& [name, report] : result.runs) os << "," << name;
    os << "\n";
    for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
        os << (e + 1);
        for (const auto& [name, report] : result.runs) {
            const eg::EpochMetrics& m = report.epochs.at(e);
            os << "," << fmt(m.val_acc.has_value() ? *m.val_acc : m.train_acc);
        }
        os << "\n";
    }
    write_text(cfg.out_dir + "/compare.csv", os.str());
    return 0;
}

int cmd_cost(const eg::RunConfig& cfg, const std::string& from_run) {
    const eg::Network<float> net = eg::build_network<float>(cfg.network, cfg.seed);
    std::map<std::size_t, double> zf;
    if (!from_run.empty()) {
        std::ifstream in(from_run + "/metrics.jsonl");
        if (!in) throw eg::ConfigError("cannot open " + from_run + "/metrics.jsonl");
        std::map<std::string, std::size_t> index_of;
        for (std::size_t l : net.weighted_layers()) {
            index_of[std::string(eg::layer_kind_name(net.layers[l].spec.kind)) + "_" +
                     std::to_string(l)] = l;
        }
        std::map<std::size_t, std::pair<double, std::size_t>> acc;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw eg::ParseError(from_run + "/metrics.jsonl: " + e.what(), 0);
            }
            for (const auto& [name, frac] : j.at("sparsity").items()) {
                auto it = index_of.find(name);
                if (it == index_of.end()) {
                    throw eg::ConfigError("run layer \"" + name +
                                          "\" does not match the configured network");
                }
                acc[it->second].first += frac.get<double>();
                acc[it->second].second += 1;
            }
        }
        for (const auto& [l, sums] : acc) {
            zf[l] = sums.first / static_cast<double>(sums.second);
        }
    } else if (cfg.train.prune.enabled) {
        // Mirror training's placement: the weighted layer next to the loss
        // consumes the raw error and is never pruned.
        const std::vector<std::size_t> weighted = net.weighted_layers();
        const double z = eg::expected_zero_fraction(cfg.train.prune.P);
        for (std::size_t l : weighted) {
            if (l != weighted.back()) zf[l] = z;
        }
    }
    std::filesystem::create_directories(cfg.out_dir);
    const eg::CostReport report = eg::build_cost_report(net, cfg.train.mode, cfg.cost,
                                                        cfg.train.batch_size, zf);
    const std::string text = eg::cost_report_json(report).dump(2) + "\n";
    write_text(cfg.out_dir + "/cost.json", text);
    std::cout << text;
    return 0;
}

int cmd_eval(const eg::RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& split) {
    eg::Network<float> net = eg::load_checkpoint(checkpoint_path);
    auto [train_ds, val] = eg::load_datasets(cfg.data, cfg.subset, cfg.seed);
    const eg::Dataset* ds = nullptr;
    if (split == "train") {
        ds = &train_ds;
    } else if (val.has_value()) {
        ds = &*val;
    } else {
        throw eg::ConfigError("config has no validation split to evaluate");
    }
    const eg::EvalResult r = eg::evaluate(net, *ds);
    json out;
    out["loss"] = r.loss;
    out["accuracy"] = r.accuracy;
    std::cout << out.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EfficientGrad: sign-symmetric feedback training with gradient pruning"};
    app.require_subcommand(1);

    GlobalFlags train_flags, compare_flags, cost_flags, eval_flags;
    CLI::App* train_cmd = app.add_subcommand("train", "train one network, one feedback mode");
    add_global_flags(train_cmd, train_flags);

    CLI::App* compare_cmd =
        app.add_subcommand("compare", "train identically seeded networks across modes");
    add_global_flags(compare_cmd, compare_flags);
    std::vector<std::string> modes;
    compare_cmd->add_option("--modes", modes, "comma-separated feedback modes")
        ->delimiter(',')
        ->required();

    CLI::App* cost_cmd = app.add_subcommand("cost", "analytic MAC/traffic/energy report");
    add_global_flags(cost_cmd, cost_flags);
    std::string from_run;
    cost_cmd->add_option("--from-run", from_run,
                         "use measured sparsity from this run directory");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    add_global_flags(eval_cmd, eval_flags);
    std::string checkpoint_path, split = "val";
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--split", split, "dataset split: train or val")
        ->check(CLI::IsMember({"train", "val"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(resolve_config(train_cmd, train_flags));
        if (compare_cmd->parsed()) {
            return cmd_compare(resolve_config(compare_cmd, compare_flags), modes);
        }
        if (cost_cmd->parsed()) return cmd_cost(resolve_config(cost_cmd, cost_flags), from_run);
        if (eval_cmd->parsed()) {
            return cmd_eval(resolve_config(eval_cmd, eval_flags), checkpoint_path, split);
        }
        return 2;
    } catch (const eg::DivergedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const eg::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const eg::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const eg::BuildError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const eg::DimError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
