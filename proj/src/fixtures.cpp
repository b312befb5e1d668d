#include "nslab/fixtures.hpp"

#include "nslab/kernels.hpp"
#include "nslab/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nslab {

namespace {

void require_tg_torus(const Domain& d)
{
    if (!d.is_torus())
        throw std::invalid_argument("taylor_green: needs a torus");
    for (double L : d.extent())
        if (std::abs(L - 2.0 * std::numbers::pi) > 1e-12)
            throw std::invalid_argument("taylor_green: needs period 2 pi on every axis");
}

double rescale_to(Field& v, double amplitude)
{
    double m = 0.0;
    for (double x : v.data())
        m = std::max(m, std::abs(x));
    if (m > 0.0)
        v *= amplitude / m;
    return m;
}

} // namespace

Field taylor_green(const Domain& torus, double nu, double t, double amplitude)
{
    require_tg_torus(torus);
    const double decay = amplitude * std::exp(-2.0 * nu * t);
    return sample(torus, torus.dim(), [&](std::span<const double> x, int c) {
        if (c == 0)
            return decay * std::sin(x[0]) * std::cos(x[1]);
        if (c == 1)
            return -decay * std::cos(x[0]) * std::sin(x[1]);
        return 0.0;
    });
}

Field taylor_green_pressure(const Domain& torus, double nu, double t, double amplitude)
{
    require_tg_torus(torus);
    const double decay = amplitude * amplitude * std::exp(-4.0 * nu * t);
    return sample(torus, 1, [&](std::span<const double> x, int) {
        return 0.25 * decay * (std::cos(2.0 * x[0]) + std::cos(2.0 * x[1]));
    });
}

Field random_divfree(const Domain& domain, double amplitude, int kmax, std::uint64_t seed)
{
    const int n = domain.dim();
    if (kmax < 1)
        throw std::invalid_argument("random_divfree: kmax must be >= 1");
    if (n < 2)
        throw std::invalid_argument("random_divfree: dimension must be >= 2");
    StreamRng rng(seed, 0x5eed);

    // enumerate wave vectors with entries in [-kmax, kmax], first nonzero entry positive
    struct Mode {
        std::vector<int> k;
        std::vector<double> a, b; // per component (or scalar stream function for n = 2)
    };
    std::vector<Mode> modes;
    std::vector<int> k(n, -kmax);
    while (true) {
        int first = 0;
        for (int v : k)
            if (v != 0) {
                first = v;
                break;
            }
        if (first > 0) {
            Mode m;
            m.k = k;
            double k2 = 0.0;
            for (int v : k)
                k2 += v * v;
            const int comps = n == 2 ? 1 : n;
            for (int c = 0; c < comps; ++c) {
                m.a.push_back(rng.normal() / k2);
                m.b.push_back(rng.normal() / k2);
            }
            modes.push_back(std::move(m));
        }
        int a = n - 1;
        while (a >= 0 && ++k[a] > kmax) {
            k[a] = -kmax;
            --a;
        }
        if (a < 0)
            break;
    }

    // wave numbers scaled to the domain: torus period L, box width 2a
    std::vector<double> scale(n);
    for (int a = 0; a < n; ++a)
        scale[a] = 2.0 * std::numbers::pi / (domain.is_torus() ? domain.extent()[a] : 2.0 * domain.extent()[a]);

    Field v = Field::vector(domain);
    std::vector<double> x(n);
    for (std::size_t p = 0; p < domain.size(); ++p) {
        domain.point(p, x);
        for (const auto& m : modes) {
            double phase = 0.0;
            for (int a = 0; a < n; ++a)
                phase += m.k[a] * scale[a] * x[a];
            const double cs = std::cos(phase), sn = std::sin(phase);
            if (n == 2) {
                // v = (d_y psi, -d_x psi), psi = a cos + b sin
                const double dpsi = -m.a[0] * sn + m.b[0] * cs;
                v.component(0)[p] += m.k[1] * scale[1] * dpsi;
                v.component(1)[p] -= m.k[0] * scale[0] * dpsi;
            } else {
                for (int c = 0; c < n; ++c)
                    v.component(c)[p] += m.a[c] * cs + m.b[c] * sn;
            }
        }
    }
    if (!domain.is_torus()) {
        std::vector<double> w(n);
        for (int a = 0; a < n; ++a)
            w[a] = domain.extent()[a] / 4.0;
        for (std::size_t p = 0; p < domain.size(); ++p) {
            domain.point(p, x);
            double r2 = 0.0;
            for (int a = 0; a < n; ++a)
                r2 += (x[a] / w[a]) * (x[a] / w[a]);
            const double g = std::exp(-0.5 * r2);
            for (int c = 0; c < n; ++c)
                v.component(c)[p] *= g;
        }
        v = leray_project(v);
    } else if (n > 2) {
        v = leray_project(v);
    }
    rescale_to(v, amplitude);
    return v;
}

Field swirl_ring(const Domain& box, double q, double radius, double amplitude)
{
    if (box.is_torus() || box.dim() != 2)
        throw std::invalid_argument("swirl_ring: needs a 2-D box");
    if (!(q > 1.0))
        throw std::invalid_argument("swirl_ring: decay order must exceed 1");
    const double e = 0.5 * (q - 1.0);
    Field v = sample(box, 2, [&](std::span<const double> x, int c) {
        double s = 0.0;
        for (int j = 0; j < 6; ++j) {
            const double th = j * std::numbers::pi / 3.0;
            const double dx = x[0] - radius * std::cos(th), dy = x[1] - radius * std::sin(th);
            // d psi / d(x_a) = -2 e (x_a - c_a) (1 + r^2)^{-e-1}
            const double f = -2.0 * e * std::pow(1.0 + dx * dx + dy * dy, -e - 1.0);
            s += (c == 0 ? f * dy : -f * dx);
        }
        return s;
    });
    rescale_to(v, amplitude);
    return v;
}

} // namespace nslab
