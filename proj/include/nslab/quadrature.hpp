#pragma once

#include <vector>

namespace nslab {

struct GaussRule {
    std::vector<double> nodes;   ///< on [-1, 1]
    std::vector<double> weights; ///< sum to 2
};

/// Gauss-Legendre rule with `points` nodes (Newton iteration on P_n).
GaussRule gauss_legendre(int points);

/// Lagrange basis weights at `t` for interpolation through `nodes`.
std::vector<double> lagrange_weights(const std::vector<double>& nodes, double t);

} // namespace nslab
