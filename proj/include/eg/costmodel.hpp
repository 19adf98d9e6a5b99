#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eg/feedback.hpp"
#include "eg/network.hpp"

namespace eg {

/// Relative-unit accounting constants. This is a first-order analytic model
/// (no tiling, banking, or interconnect contention) so only ratios between
/// modes are meaningful, not absolute hardware numbers.
struct CostParams {
    double bytes_per_value = 4.0;  // activations, weights, deltas
    double bits_per_sign = 1.0;    // packed sign storage
    double e_dram = 1.0;           // energy per byte moved
    double e_mac = 1.0;            // energy per effective MAC
    bool feedback_resident = true;  // |B| pinned on-chip after one fetch

    void validate() const;  // throws ConfigError unless all positive
};

enum class Phase : std::size_t { Forward = 0, Backward = 1, WeightGrad = 2 };

struct PhaseCost {
    double macs_total = 0.0;
    double macs_effective = 0.0;
    double dram_bytes = 0.0;
};

struct LayerCost {
    std::size_t layer = 0;
    std::string name;
    std::array<PhaseCost, 3> phases;
};

struct CostTotals {
    double macs_total = 0.0;
    double macs_effective = 0.0;
    double dram_bytes = 0.0;
    double energy = 0.0;
};

/// Improvement factors over the BP baseline; 1.0 means parity, larger is
/// better for the mode under report.
struct CostRatios {
    double throughput_proxy = 1.0;  // macs_total / macs_effective
    double traffic_ratio = 1.0;     // bp_bytes / mode_bytes
    double energy_ratio = 1.0;      // bp_energy / mode_energy
};

struct CostReport {
    FeedbackMode mode = FeedbackMode::BP;
    std::size_t batch_n = 1;
    std::vector<LayerCost> layers;  // weighted layers only
    CostTotals totals;
    CostTotals bp_totals;  // same topology, BP, dense gradients
    CostRatios ratios;
};

/// MACs one phase spends on a weighted layer for a batch of batch_n samples.
/// The three phases of a conv/FC layer cost the same number of MACs.
template <typename T>
double layer_macs(const Layer<T>& layer, Phase phase, std::size_t batch_n);

/// Phase-1 traffic: one weight fetch plus the input-activation hop.
template <typename T>
double phase1_traffic(const Layer<T>& layer, const CostParams& params, std::size_t batch_n);

/// Phase-2 traffic: the modulatory operand (full W for BP, packed signs for
/// SignSym/BinarySign, resident-or-refetched B for FA/SignSym) plus, when
/// batch_n > 0, the incoming delta hop discounted by its zero fraction.
template <typename T>
double phase2_traffic(const Layer<T>& layer, FeedbackMode mode, const CostParams& params,
                      std::size_t batch_n = 0, double zero_fraction = 0.0);

/// Phase-3 traffic: the weight writeback.
template <typename T>
double phase3_traffic(const Layer<T>& layer, const CostParams& params);

/// Assemble the full per-layer report for one mode. zero_fractions maps
/// network layer index to the realized (or expected) zero fraction of the
/// delta consumed at that layer; missing layers count as dense.
template <typename T>
CostReport build_cost_report(const Network<T>& net, FeedbackMode mode, const CostParams& params,
                             std::size_t batch_n,
                             const std::map<std::size_t, double>& zero_fractions = {});

/// Rescale phases 2-3 effective MACs by per-layer zero fractions and refresh
/// totals and ratios. Forward MACs and traffic tallies are left as built.
CostReport apply_sparsity(const CostReport& report, const CostParams& params,
                          const std::map<std::size_t, double>& zero_fractions);

}  // namespace eg
