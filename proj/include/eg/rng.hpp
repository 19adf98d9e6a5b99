#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace eg::rng {

/// Philox 4x32-10 counter block function. Stateless: the same (counter, key)
/// always yields the same four 32-bit words, so random draws can be indexed
/// by position instead of sequenced, and output never depends on how work is
/// split across threads.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Domain tags keep the independent random streams of a run from colliding.
/// A stream id is (tag, layer, step) packed into 64 bits.
enum class Domain : std::uint64_t {
    WeightInit = 1,
    FeedbackInit = 2,
    FeedbackSign = 3,
    Prune = 4,
    Shuffle = 5,
    SynthData = 6,
    Subset = 7,
};

std::uint64_t stream_id(Domain tag, std::uint64_t layer = 0, std::uint64_t step = 0);

/// An indexed random stream: key = (seed, stream id), counter = draw index.
/// Every draw is addressed explicitly, which makes results reproducible and
/// independent of evaluation order.
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t id);

    std::array<std::uint32_t, 4> block(std::uint64_t index) const;

    /// Uniform double in [0, 1), 32 bits of resolution.
    double u01(std::uint64_t index) const;

    /// Uniform double in [lo, hi).
    double uniform(std::uint64_t index, double lo, double hi) const;

    /// Standard normal via Box-Muller on two lanes of one block.
    double normal(std::uint64_t index) const;

    /// Uniform integer in [0, n), n >= 1.
    std::uint32_t bounded(std::uint64_t index, std::uint32_t n) const;

private:
    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 2> id_hi_;
};

/// Seeded Fisher-Yates permutation of {0, ..., n-1}.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t id);

}  // namespace eg::rng
