#include "sve/rng.hpp"

#include <cmath>

#include "sve/error.hpp"

namespace sve {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox_block(std::array<std::uint32_t, 4> ctr,
                                          std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW0;
        key[1] += kPhiloxW1;
    }
    return ctr;
}

} // namespace

Rng::Rng(std::uint64_t seed) {
    key_[0] = static_cast<std::uint32_t>(seed);
    key_[1] = static_cast<std::uint32_t>(seed >> 32);
}

void Rng::refill() {
    block_ = philox_block(counter_, key_);
    block_pos_ = 0;
    // 128-bit counter increment.
    for (int i = 0; i < 4; ++i) {
        if (++counter_[i] != 0) break;
    }
}

std::uint32_t Rng::next_u32() {
    if (block_pos_ == 4) refill();
    return block_[block_pos_++];
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return lo | (hi << 32);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::uniform_range(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw IndexError("uniform_index: n must be positive");
    auto idx = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return idx < n ? idx : n - 1;
}

double Rng::normal(double mean, double std) {
    if (std == 0.0) return mean;
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + std * (r * std::cos(2.0 * M_PI * u2));
}

std::vector<double> Rng::normal_vec(std::size_t n, double mean, double std) {
    std::vector<double> out(n, mean);
    if (std == 0.0) return out;
    for (std::size_t i = 0; i < n; i += 2) {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        out[i] = mean + std * (r * std::cos(2.0 * M_PI * u2));
        if (i + 1 < n) out[i + 1] = mean + std * (r * std::sin(2.0 * M_PI * u2));
    }
    return out;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = uniform_index(i);
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

Rng Rng::split(std::uint64_t tag) const {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(tag),
        static_cast<std::uint32_t>(tag >> 32),
        0x53564531u, // "SVE1" domain separator
        0u,
    };
    const auto block = philox_block(ctr, key_);
    Rng child(0);
    child.key_ = {block[0], block[1]};
    return child;
}

} // namespace sve
