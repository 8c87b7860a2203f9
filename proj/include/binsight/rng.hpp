#pragma once

// Seeded generator used for every randomized step.
//
// The algorithm is fixed so that results are reproducible across platforms,
// standard libraries and thread counts:
//
//   * state is a single 64-bit word advanced SplitMix64-style
//     (state += 0x9E3779B97F4A7C15, then the Stafford "mix13" finalizer);
//   * a stream is selected by hashing (seed, stream index) into the
//     starting state, so stream(s, i) and stream(s, j) never share a state
//     sequence prefix for i != j in practice;
//   * bounded integers use Lemire's multiply-and-reject, doubles take the
//     top 53 bits.

#include <cstdint>
#include <utility>
#include <vector>

namespace binsight {

class Rng {
public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    constexpr explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : state_(mix(mix(seed) ^ mix(stream * kGamma + 0x632BE59BD9B4E019ULL))) {}

    /// Child generator for sub-stream `index`; does not advance this one.
    constexpr Rng split(std::uint64_t index) const noexcept { return Rng(state_, index); }

    constexpr std::uint64_t next() noexcept {
        state_ += kGamma;
        return mix(state_);
    }

    /// Uniform integer in [0, bound). bound must be > 0.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept {
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Uniform double in [0, 1).
    constexpr double uniform() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    template <class T>
    void shuffle(std::vector<T>& v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    constexpr std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

}  // namespace binsight
