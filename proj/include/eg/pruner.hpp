#pragma once

#include <cstdint>
#include <utility>

#include "eg/rng.hpp"
#include "eg/tensor.hpp"

namespace eg {

enum class SigmaSource {
    PerTensorBatch,  // population std of the current delta tensor
    RunningEma,      // exponential moving average of per-batch stds
};

struct PruneConfig {
    double P = 0.0;  // target pruning rate, in [0, 1)
    bool enabled = false;
    SigmaSource sigma_source = SigmaSource::PerTensorBatch;
    double ema_decay = 0.9;  // used when sigma_source == RunningEma
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError on bad values
};

/// Per-layer, per-step accounting of what the prune did.
struct PruneStats {
    double tau = 0.0;
    std::size_t n_total = 0;
    std::size_t n_passed = 0;   // |delta| > tau, untouched
    std::size_t n_clamped = 0;  // snapped to +/- tau
    std::size_t n_zeroed = 0;
    double realized_zero_fraction = 0.0;
};

/// Standard normal quantile Q(p), p in (0, 1). Rational approximation with a
/// single Halley refinement against the erfc-based CDF; absolute error below
/// 1e-9 over the full domain.
double normal_quantile(double p);

/// tau = Q((1+P)/2) * sigma_delta. Throws ConfigError for P outside [0, 1)
/// and ContractError for negative sigma.
double compute_threshold(double P, double sigma_delta);

/// Three-way stochastic prune of an error-gradient tensor:
///   |delta| >  tau           -> delta (unchanged)
///   tau >= |delta| >= r*tau  -> tau * sign(delta)
///   otherwise                -> 0
/// with one independent r ~ U[0,1) per element drawn from `stream` at the
/// element's flat index, so the result does not depend on evaluation order.
/// tau == 0 degenerates to the identity map (everything counts as passed).
std::pair<Tensor<float>, PruneStats> stochastic_prune(const Tensor<float>& delta, double tau,
                                                      const rng::Stream& stream);

/// Fraction of elements an ideal prune zeroes when delta ~ N(0, sigma^2):
///   Z(P) = integral over |x| <= tau of phi(x) * (1 - |x|/tau) dx,
/// with tau = Q((1+P)/2) and phi the standard normal density. Evaluated by
/// adaptive Simpson quadrature to absolute error <= 1e-6. Z(0) = 0.
double expected_zero_fraction(double P);

}  // namespace eg
