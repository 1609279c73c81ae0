#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace catpol {

// xoshiro256** with splitmix64 seeding. The whole generator state is 32 bytes,
// which is what checkpoints persist.
class Rng {
public:
    using result_type = std::uint64_t;
    using State = std::array<std::uint64_t, 4>;

    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    // Independent stream derived from a base seed and a stream name.
    static Rng stream(std::uint64_t seed, std::string_view name);

    void reseed(std::uint64_t seed);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();
    /// Standard normal via Box-Muller (one output per call, no cached state).
    double normal();

    const State& state() const { return s_; }
    void set_state(const State& s) { s_ = s; }

    bool operator==(const Rng&) const = default;

private:
    State s_{};
};

} // namespace catpol
