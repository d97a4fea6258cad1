#pragma once

#include <array>
#include <cstdint>

namespace riskdiff::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

// Philox4x32-10 block cipher (Salmon et al., Random123).
Counter philox4x32(Counter ctr, Key key);

std::uint64_t splitmix64(std::uint64_t x);

// Inverse of the standard normal CDF (Wichura, AS241 PPND16).
// p must lie in (0, 1).
double normal_quantile(double p);

// Counter-based stream: every draw is a pure function of
// (seed, stream_id, path, step, slot), so paths can be generated in any
// order or in parallel with identical results.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream_id);

    // Two independent uniforms in (0, 1) for the given coordinates.
    std::array<double, 2> uniforms(std::uint64_t path, std::uint32_t step,
                                   std::uint32_t slot = 0) const;

    // Two independent standard normals.
    std::array<double, 2> normals(std::uint64_t path, std::uint32_t step,
                                  std::uint32_t slot = 0) const;

    std::uint64_t bits(std::uint64_t path, std::uint32_t step, std::uint32_t slot = 0) const;

private:
    Key key_;
};

} // namespace riskdiff::rng
