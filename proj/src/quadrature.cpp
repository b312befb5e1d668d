#include "nslab/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nslab {

GaussRule gauss_legendre(int points)
{
    if (points < 1)
        throw std::invalid_argument("gauss_legendre: need at least one node");
    GaussRule rule;
    rule.nodes.resize(points);
    rule.weights.resize(points);
    for (int i = 0; i < points; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (points + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= points; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            if (points == 1)
                p0 = 1.0;
            dp = points * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        rule.nodes[points - 1 - i] = x;
        rule.weights[points - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

std::vector<double> lagrange_weights(const std::vector<double>& nodes, double t)
{
    std::vector<double> w(nodes.size(), 1.0);
    for (std::size_t j = 0; j < nodes.size(); ++j)
        for (std::size_t m = 0; m < nodes.size(); ++m)
            if (m != j)
                w[j] *= (t - nodes[m]) / (nodes[j] - nodes[m]);
    return w;
}

} // namespace nslab
