#include "eg/rng.hpp"

#include <cmath>
#include <numbers>

namespace eg::rng {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9;  // golden ratio
constexpr std::uint32_t kWeyl1 = 0xBB67AE85;  // sqrt(3) - 1

inline void philox_round(std::array<std::uint32_t, 4>& ctr, const std::array<std::uint32_t, 2>& key) {
    std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        philox_round(counter, key);
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return counter;
}

std::uint64_t stream_id(Domain tag, std::uint64_t layer, std::uint64_t step) {
    // tag:8 | layer:16 | step:40
    return (static_cast<std::uint64_t>(tag) << 56) | ((layer & 0xFFFF) << 40) |
           (step & 0xFFFFFFFFFFULL);
}

Stream::Stream(std::uint64_t seed, std::uint64_t id)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      id_hi_{static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)} {}

std::array<std::uint32_t, 4> Stream::block(std::uint64_t index) const {
    return philox4x32({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                       id_hi_[0], id_hi_[1]},
                      key_);
}

double Stream::u01(std::uint64_t index) const {
    return block(index)[0] * 0x1p-32;
}

double Stream::uniform(std::uint64_t index, double lo, double hi) const {
    return lo + (hi - lo) * u01(index);
}

double Stream::normal(std::uint64_t index) const {
    auto b = block(index);
    double u1 = (static_cast<double>(b[0]) + 1.0) * 0x1p-32;  // (0, 1], keeps log finite
    double u2 = b[1] * 0x1p-32;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint32_t Stream::bounded(std::uint64_t index, std::uint32_t n) const {
    // multiply-shift map of a 32-bit draw onto [0, n)
    return static_cast<std::uint32_t>((static_cast<std::uint64_t>(block(index)[0]) * n) >> 32);
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t id) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Stream stream(seed, id);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = stream.bounded(i, static_cast<std::uint32_t>(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

}  // namespace eg::rng
