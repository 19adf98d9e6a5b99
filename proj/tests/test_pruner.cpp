#include <doctest.h>

#include <cmath>
#include <random>

#include "eg/errors.hpp"
#include "eg/pruner.hpp"
#include "eg/rng.hpp"
#include "oracle_helpers.hpp"

using namespace eg;

namespace {

rng::Stream prune_stream(std::uint64_t seed) {
    return rng::Stream(seed, rng::stream_id(rng::Domain::Prune, 0, 0));
}

// Deterministically find a seed whose first draw lands in [lo, hi); the
// prune rule reads r for element i from u01(i).
std::uint64_t seed_with_first_r_in(double lo, double hi) {
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const double r = prune_stream(seed).u01(0);
        if (r >= lo && r < hi) return seed;
    }
    REQUIRE(false);
    return 0;
}

}  // namespace

TEST_CASE("normal_quantile matches the bisection-on-erf oracle") {
    for (double p : {0.501, 0.55, 0.6, 0.684135, 0.75, 0.84135, 0.9, 0.95, 0.975, 0.99,
                     0.999, 0.9999, 0.99999}) {
        CHECK(std::abs(normal_quantile(p) - oracle::bisect_quantile(p)) <= 1e-9);
        // symmetry
        CHECK(std::abs(normal_quantile(1.0 - p) + normal_quantile(p)) <= 1e-9);
    }
    CHECK(normal_quantile(0.5) == 0.0);
    CHECK_THROWS_AS(normal_quantile(0.0), ContractError);
    CHECK_THROWS_AS(normal_quantile(1.0), ContractError);
}

TEST_CASE("compute_threshold follows tau = Q((1+P)/2) * sigma") {
    CHECK(compute_threshold(0.0, 5.0) == 0.0);
    // P=0.6827, sigma=1: the band edge sits at ~1 sigma
    CHECK(compute_threshold(0.6827, 1.0) == doctest::Approx(1.0000217133).epsilon(1e-9));
    // P=0.95, sigma=2: Q(0.975) ~ 1.95996
    CHECK(compute_threshold(0.95, 2.0) == doctest::Approx(3.9199279691).epsilon(1e-9));
    // scales linearly in sigma
    CHECK(compute_threshold(0.7, 3.0) ==
          doctest::Approx(3.0 * compute_threshold(0.7, 1.0)).epsilon(1e-12));
    CHECK(compute_threshold(0.7, 0.0) == 0.0);

    CHECK_THROWS_AS(compute_threshold(1.0, 1.0), ConfigError);
    CHECK_THROWS_AS(compute_threshold(-0.1, 1.0), ConfigError);
    CHECK_THROWS_AS(compute_threshold(0.5, -1.0), ContractError);
}

TEST_CASE("stochastic_prune implements the three-case rule") {
    const double tau = 0.2;
    const std::uint64_t seed_low = seed_with_first_r_in(0.05, 0.45);   // r*tau < 0.1
    const std::uint64_t seed_high = seed_with_first_r_in(0.55, 0.95);  // r*tau > 0.1

    // |delta| > tau passes through bit-exactly, whatever r is
    for (std::uint64_t s : {seed_low, seed_high}) {
        Tensor<float> d({1}, {0.5f});
        auto [out, stats] = stochastic_prune(d, tau, prune_stream(s));
        CHECK(out[0] == 0.5f);
        CHECK(stats.n_passed == 1);
    }

    // tau >= |delta| >= r*tau clamps to tau * sign(delta)
    {
        Tensor<float> d({1}, {0.1f});
        auto [out, stats] = stochastic_prune(d, tau, prune_stream(seed_low));
        CHECK(out[0] == doctest::Approx(0.2f));
        CHECK(stats.n_clamped == 1);
    }
    {
        Tensor<float> d({1}, {-0.1f});
        auto [out, stats] = stochastic_prune(d, tau, prune_stream(seed_low));
        CHECK(out[0] == doctest::Approx(-0.2f));
        CHECK(stats.n_clamped == 1);
    }

    // |delta| < r*tau zeroes
    {
        Tensor<float> d({1}, {0.1f});
        auto [out, stats] = stochastic_prune(d, tau, prune_stream(seed_high));
        CHECK(out[0] == 0.0f);
        CHECK(stats.n_zeroed == 1);
        CHECK(stats.realized_zero_fraction == 1.0);
    }

    CHECK_THROWS_AS(stochastic_prune(Tensor<float>({1}), -0.1, prune_stream(0)),
                    ContractError);
}

TEST_CASE("tau = 0 is the identity map with everything counted as passed") {
    Tensor<float> d({4}, {0.0f, -1.0f, 0.5f, 0.0f});
    auto [out, stats] = stochastic_prune(d, 0.0, prune_stream(3));
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(out[i] == d[i]);
    CHECK(stats.n_passed == 4);
    CHECK(stats.n_clamped == 0);
    CHECK(stats.n_zeroed == 0);
    CHECK(stats.tau == 0.0);
}

TEST_CASE("pruned values lie in {0, +-tau, delta} and stats balance") {
    std::mt19937 gen(99);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    Tensor<float> d({10000});
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = dist(gen);
    const double tau = 1.0;
    auto [out, stats] = stochastic_prune(d, tau, prune_stream(5));

    CHECK(stats.n_total == d.size());
    CHECK(stats.n_passed + stats.n_clamped + stats.n_zeroed == stats.n_total);
    CHECK(stats.realized_zero_fraction ==
          static_cast<double>(stats.n_zeroed) / static_cast<double>(stats.n_total));
    CHECK(stats.tau == tau);

    for (std::size_t i = 0; i < d.size(); ++i) {
        if (std::abs(d[i]) > tau) {
            CHECK(out[i] == d[i]);  // pass-through region untouched bit-exactly
        } else {
            const bool ok = out[i] == 0.0f || out[i] == static_cast<float>(tau) ||
                            out[i] == static_cast<float>(-tau);
            CHECK(ok);
        }
    }
}

TEST_CASE("expectation preservation: E[delta_hat] = delta inside the band") {
    // One tensor of identical elements; each element draws its own r, so the
    // element mean is the Monte-Carlo mean over that many draws.
    const double tau = 0.2;
    const std::size_t n = 100000;
    const double tol = 4.0 * tau / std::sqrt(static_cast<double>(n));
    for (double frac : {-0.9, -0.5, -0.2, 0.2, 0.5, 0.9}) {
        const double delta = frac * tau;
        Tensor<float> d = Tensor<float>::full({n}, static_cast<float>(delta));
        auto [out, stats] = stochastic_prune(d, tau, prune_stream(17));
        const double mean = reduce_sum(out) / static_cast<double>(n);
        CHECK(std::abs(mean - delta) <= tol);
    }
}

TEST_CASE("prune is deterministic in the stream and element-indexed") {
    Tensor<float> d({1000});
    std::mt19937 gen(4);
    std::normal_distribution<float> dist;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = dist(gen);
    auto [a, sa] = stochastic_prune(d, 0.8, prune_stream(21));
    auto [b, sb] = stochastic_prune(d, 0.8, prune_stream(21));
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(sa.n_zeroed == sb.n_zeroed);
    auto [c, sc] = stochastic_prune(d, 0.8, prune_stream(22));
    CHECK(sc.n_zeroed != sa.n_zeroed);  // different stream, different r field
}

TEST_CASE("expected_zero_fraction matches the closed-form oracle") {
    CHECK(expected_zero_fraction(0.0) == 0.0);
    for (double P : {0.3, 0.5, 0.7, 0.9, 0.95, 0.99}) {
        CHECK(std::abs(expected_zero_fraction(P) - oracle::closed_form_zero_fraction(P)) <=
              1e-6);
    }
    // frozen spot values from the closed form, guarding both sides
    CHECK(expected_zero_fraction(0.5) == doctest::Approx(0.2593270833).epsilon(1e-6));
    CHECK(expected_zero_fraction(0.7) == doctest::Approx(0.3800884517).epsilon(1e-6));
    CHECK(expected_zero_fraction(0.9) == doctest::Approx(0.5403246645).epsilon(1e-6));
    CHECK(expected_zero_fraction(0.5) < expected_zero_fraction(0.9));
}

TEST_CASE("band fraction and realized zero fraction on synthetic gaussians") {
    const double sigma = 1.7;
    const std::size_t n = 1000000;
    std::mt19937 gen(12345);
    std::normal_distribution<float> dist(0.0f, static_cast<float>(sigma));
    Tensor<float> d({n});
    for (std::size_t i = 0; i < n; ++i) d[i] = dist(gen);

    for (double P : {0.5, 0.7, 0.9}) {
        const double tau = compute_threshold(P, sigma);
        std::size_t in_band = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (std::abs(static_cast<double>(d[i])) <= tau) ++in_band;
        }
        const double frac = static_cast<double>(in_band) / static_cast<double>(n);
        CHECK(std::abs(frac - P) <= 0.01);  // threshold captures P of the mass

        auto [out, stats] = stochastic_prune(d, tau, prune_stream(31));
        CHECK(std::abs(stats.realized_zero_fraction - expected_zero_fraction(P)) <= 0.02);
    }
}

TEST_CASE("PruneConfig validation") {
    PruneConfig ok;
    ok.P = 0.7;
    ok.validate();

    PruneConfig bad = ok;
    bad.P = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.P = -0.01;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    PruneConfig ema = ok;
    ema.sigma_source = SigmaSource::RunningEma;
    ema.ema_decay = 0.0;
    CHECK_THROWS_AS(ema.validate(), ConfigError);
    ema.ema_decay = 1.0;
    CHECK_THROWS_AS(ema.validate(), ConfigError);
    ema.ema_decay = 0.9;
    ema.validate();
}
