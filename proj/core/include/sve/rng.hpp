#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace sve {

// Counter-based pseudo-random generator (Philox4x32, 10 rounds).
//
// State is a 128-bit block counter plus a 64-bit key derived from the seed;
// every draw is a pure function of (key, counter), so identical seeds produce
// identical streams on every platform. The uniform stream is bit-exact
// across platforms; normal draws go through libm (log/cos/sin) and may differ
// in the last ulp between C libraries.
//
// Draw conventions, fixed and relied on by the committed stream fixture:
//   - next_u32 returns the four words of each Philox block in order.
//   - next_u64 = lo_word | (hi_word << 32) from two consecutive u32 draws.
//   - uniform() = (next_u64() >> 11) * 2^-53, in [0, 1).
//   - normal draws come from Box-Muller pairs on uniform draws, with the
//     first uniform mapped into (0, 1]; odd-length requests discard the
//     spare half of the final pair.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Recorded in checkpoints and result files.
    static const char* algorithm_id() { return "philox4x32-10"; }

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    // [0, 1), 53-bit resolution.
    double uniform();
    // (0, 1]; used where log(0) must be impossible.
    double uniform_pos();
    // Uniform over [lo, hi).
    double uniform_range(double lo, double hi);
    // Uniform index in [0, n); n must be > 0.
    std::size_t uniform_index(std::size_t n);

    // Single normal draw; consumes one Box-Muller pair. std == 0 returns
    // mean without consuming the stream.
    double normal(double mean, double std);
    std::vector<double> normal_vec(std::size_t n, double mean, double std);

    // Fisher-Yates shuffle of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

    // Derives an independent child stream. Pure function of (parent key,
    // tag): the parent's counter position does not influence the child, and
    // equal tags give equal children. Pass distinct tags for distinct
    // streams.
    Rng split(std::uint64_t tag) const;

private:
    std::array<std::uint32_t, 4> counter_{};
    std::array<std::uint32_t, 2> key_{};
    std::array<std::uint32_t, 4> block_{};
    int block_pos_ = 4; // 4 = block exhausted

    void refill();
};

} // namespace sve
