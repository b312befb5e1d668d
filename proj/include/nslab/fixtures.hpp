#pragma once

#include "nslab/grid.hpp"

#include <cstdint>

namespace nslab {

/// Taylor-Green vortex on the 2-torus [0, 2 pi)^2:
/// v = (sin x cos y, -cos x sin y) e^{-2 nu t}, p = (cos 2x + cos 2y) e^{-4 nu t} / 4.
/// Extra axes (n > 2) carry zero velocity.
Field taylor_green(const Domain& torus, double nu, double t, double amplitude = 1.0);
Field taylor_green_pressure(const Domain& torus, double nu, double t, double amplitude = 1.0);

/// Divergence-free random field with Fourier modes 1 <= |k|_inf <= kmax and
/// |v|_inf = amplitude. Torus: stream-function modes (n = 2) or the Leray
/// projection of random modes (n >= 3). Box: the same modes damped by a
/// Gaussian envelope of width extent / 4 and then projected.
Field random_divfree(const Domain& domain, double amplitude, int kmax, std::uint64_t seed);

/// Six swirls with stream function (1 + |x - c|^2)^{-(q-1)/2} at the vertices of
/// a hexagon of the given radius, all turning the same way; the velocity decays like
/// |x|^{-q}. 2-D box only.
Field swirl_ring(const Domain& box, double q, double radius, double amplitude);

} // namespace nslab
