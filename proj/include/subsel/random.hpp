#pragma once

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <random>

namespace subsel {

// Seed splitting. Every random stream in the library is seeded with
//
//     seed_for(master, stream, index) = splitmix64(splitmix64(master ^ C*stream) + index)
//
// where C is the 64-bit golden-ratio constant and `stream` is one of the
// fixed tags below. Any chain or bank can therefore be replayed in isolation
// from the master seed alone.
enum class Stream : std::uint64_t {
    trial = 1,
    init = 2,
    volume_walk = 3,
    residual_bank = 4,
    uniform_bank = 5,
    bank_coins = 6,
    chain = 7,
    adaptive_round = 8,
    synthetic = 9,
    diagnostic = 10,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t seed_for(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
    const auto tag = static_cast<std::uint64_t>(stream);
    return splitmix64(splitmix64(master ^ (0x9E3779B97F4A7C15ULL * tag)) + index);
}

// mt19937_64 with hand-rolled conversions, so draws do not depend on the
// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    double exponential() { return -std::log(uniform()); }

    // Uniform index in [0, n).
    std::size_t index(std::size_t n) {
        const unsigned __int128 wide = static_cast<unsigned __int128>(engine_()) * n;
        return static_cast<std::size_t>(wide >> 64);
    }

    bool coin() { return (engine_() >> 63) != 0; }

    // Box-Muller; one of the pair is discarded to keep the stream simple.
    double normal() {
        const double u1 = uniform(), u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace subsel
