#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "eg/network.hpp"
#include "eg/tensor.hpp"

namespace eg {

struct AngleRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::size_t layer = 0;
    std::optional<double> angle_deg;  // nullopt = undefined (zero-norm input)
};

struct GradHistogram {
    std::size_t epoch = 0;
    std::size_t layer = 0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> edges;          // bins+1 interior edges over [lo, hi]
    std::vector<std::size_t> counts;    // bins+2: underflow, interior..., overflow
};

/// Re-run phase 2 on a finished forward trace with modulatory = W and no
/// pruning, returning the delta each weighted layer would consume under pure
/// BP. Touches no parameters, buffers, or RNG streams.
template <typename T>
std::map<std::size_t, Tensor<T>> shadow_bp_pass(const Network<T>& net,
                                                const ForwardTrace<T>& trace);

/// One AngleRecord per weighted layer; key sets of the two maps must match.
template <typename T>
std::vector<AngleRecord> record_angles(const std::map<std::size_t, Tensor<T>>& eg_deltas,
                                       const std::map<std::size_t, Tensor<T>>& bp_deltas,
                                       std::size_t epoch, std::size_t step);

/// Histogram of delta values over fixed edges with overflow bins at both
/// ends; bins >= 2 and lo < hi.
template <typename T>
GradHistogram record_histogram(const Tensor<T>& delta, std::size_t bins, double lo, double hi,
                               std::size_t epoch, std::size_t layer);

}  // namespace eg
