#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace nslab {

/// Stateless counter-based generator: every variate is a pure function of
/// (seed, stream, counter), so results do not depend on evaluation order.
class CounterRng {
public:
    static constexpr std::uint64_t mix(std::uint64_t z)
    {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t stream,
                                        std::uint64_t counter)
    {
        return mix(mix(mix(seed) ^ stream) ^ (counter * 0xd1b54a32d192ed03ULL));
    }

    /// Uniform in the open interval (0, 1).
    static double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter)
    {
        return (static_cast<double>(hash(seed, stream, counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal (Box-Muller on two consecutive counters).
    static double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter)
    {
        const double u1 = uniform(seed, stream, 2 * counter);
        const double u2 = uniform(seed, stream, 2 * counter + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
};

/// Sequential view on one counter stream.
class StreamRng {
public:
    StreamRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    double uniform() { return CounterRng::uniform(seed_, stream_, counter_++); }
    double normal() { return CounterRng::normal(seed_, stream_, counter_++); }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

} // namespace nslab
