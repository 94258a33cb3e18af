#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace advgraph {

/// Counter-based generator: output i is a SplitMix64 finalizer applied to
/// key + i * golden. Streams for independent components are obtained with
/// `derive(label)`, so e.g. the dropout stream does not shift when the
/// attack consumes more numbers.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) noexcept : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return mix(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

    /// Child stream keyed on (this key, label). Does not advance this stream.
    Rng derive(std::string_view label) const noexcept {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : label) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        Rng child;
        child.key_ = mix(key_ ^ mix(h));
        return child;
    }

    Rng derive(std::uint64_t index) const noexcept {
        Rng child;
        child.key_ = mix(key_ ^ mix(index + 0x243f6a8885a308d3ULL));
        return child;
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) noexcept {
        // Lemire's multiply-shift with rejection.
        for (;;) {
            const unsigned __int128 prod = static_cast<unsigned __int128>((*this)()) * bound;
            const auto low = static_cast<std::uint64_t>(prod);
            if (low >= bound || low >= (-bound) % bound) return static_cast<std::uint64_t>(prod >> 64);
        }
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Standard normal via Box-Muller (one draw per call, the pair's second value is discarded).
    double normal() noexcept;

    std::uint64_t key() const noexcept { return key_; }

private:
    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace advgraph
