#include "eg/pruner.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "eg/errors.hpp"
#include "eg/parallel.hpp"

namespace eg {

void PruneConfig::validate() const {
    if (!(P >= 0.0 && P < 1.0)) {
        throw ConfigError("prune rate P must lie in [0, 1), got " + std::to_string(P));
    }
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) {
        throw ConfigError("prune ema_decay must lie in (0, 1), got " + std::to_string(ema_decay));
    }
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ContractError("normal_quantile requires p in (0, 1), got " + std::to_string(p));
    }

    // Rational approximation (relative error ~1e-9 before refinement).
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    static constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Halley step against the exact CDF, Phi(x) = erfc(-x/sqrt(2))/2.
    static const double sqrt_2pi = std::sqrt(2.0 * std::acos(-1.0));
    const double err = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = err * sqrt_2pi * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

double compute_threshold(double P, double sigma_delta) {
    if (!(P >= 0.0 && P < 1.0)) {
        throw ConfigError("prune rate P must lie in [0, 1), got " + std::to_string(P));
    }
    if (!(sigma_delta >= 0.0)) {
        throw ContractError("sigma_delta must be nonnegative, got " + std::to_string(sigma_delta));
    }
    if (P == 0.0) return 0.0;  // Q(0.5) = 0
    return normal_quantile(0.5 * (1.0 + P)) * sigma_delta;
}

std::pair<Tensor<float>, PruneStats> stochastic_prune(const Tensor<float>& delta, double tau,
                                                      const rng::Stream& stream) {
    if (!(tau >= 0.0)) {
        throw ContractError("prune threshold must be nonnegative, got " + std::to_string(tau));
    }

    const std::size_t n = delta.size();
    PruneStats stats;
    stats.tau = tau;
    stats.n_total = n;

    if (tau == 0.0) {
        stats.n_passed = n;
        return {delta, stats};
    }

    Tensor<float> out(delta.shape());
    const float taf = static_cast<float>(tau);

    std::atomic<std::size_t> passed{0}, clamped{0}, zeroed{0};
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::size_t np = 0, nc = 0, nz = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const float v = delta[i];
            const float mag = std::fabs(v);
            if (mag > taf) {
                out[i] = v;
                ++np;
            } else {
                const double r = stream.u01(i);
                if (static_cast<double>(mag) >= r * tau) {
                    out[i] = v > 0.0f ? taf : (v < 0.0f ? -taf : 0.0f);
                    ++nc;
                } else {
                    out[i] = 0.0f;
                    ++nz;
                }
            }
        }
        passed += np;
        clamped += nc;
        zeroed += nz;
    });

    stats.n_passed = passed.load();
    stats.n_clamped = clamped.load();
    stats.n_zeroed = zeroed.load();
    stats.realized_zero_fraction =
        n == 0 ? 0.0 : static_cast<double>(stats.n_zeroed) / static_cast<double>(n);
    return {std::move(out), stats};
}

namespace {

double normal_pdf(double x) {
    static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::acos(-1.0));
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double simpson(double (*f)(double, double), double tau, double lo, double hi) {
    const double mid = 0.5 * (lo + hi);
    return (hi - lo) / 6.0 * (f(lo, tau) + 4.0 * f(mid, tau) + f(hi, tau));
}

double adaptive_simpson(double (*f)(double, double), double tau, double lo, double hi,
                        double whole, double tol, int depth) {
    const double mid = 0.5 * (lo + hi);
    const double left = simpson(f, tau, lo, mid);
    const double right = simpson(f, tau, mid, hi);
    const double diff = left + right - whole;
    if (depth <= 0 || std::fabs(diff) <= 15.0 * tol) {
        return left + right + diff / 15.0;
    }
    return adaptive_simpson(f, tau, lo, mid, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, tau, mid, hi, right, 0.5 * tol, depth - 1);
}

double zero_band_integrand(double x, double tau) { return normal_pdf(x) * (1.0 - x / tau); }

}  // namespace

double expected_zero_fraction(double P) {
    if (!(P >= 0.0 && P < 1.0)) {
        throw ConfigError("prune rate P must lie in [0, 1), got " + std::to_string(P));
    }
    if (P == 0.0) return 0.0;
    const double tau = normal_quantile(0.5 * (1.0 + P));
    // Symmetric integrand: integrate [0, tau] and double.
    const double whole = simpson(&zero_band_integrand, tau, 0.0, tau);
    return 2.0 * adaptive_simpson(&zero_band_integrand, tau, 0.0, tau, whole, 5e-7, 40);
}

}  // namespace eg
