#include "nslab/semigroup.hpp"

#include "nslab/kernels.hpp"
#include "nslab/parallel.hpp"
#include "nslab/quadrature.hpp"
#include "nslab/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nslab {

std::string to_string(Backend b)
{
    return b == Backend::spectral ? "spectral" : "fd_substep";
}

Backend backend_from_string(const std::string& s)
{
    if (s == "spectral")
        return Backend::spectral;
    if (s == "fd_substep" || s == "fd")
        return Backend::fd_substep;
    throw std::invalid_argument("unknown semigroup backend '" + s + "'");
}

namespace {

/// Spectral radius of the discrete first derivative along `axis`.
double first_derivative_radius(const Domain& d, int axis)
{
    if (d.is_torus())
        return (d.shape()[axis] / 2 - 1) * 2.0 * std::numbers::pi / d.extent()[axis];
    return 1.3722 / d.spacing(axis);
}

double second_derivative_radius(const Domain& d, int axis)
{
    if (d.is_torus()) {
        const double k = d.shape()[axis] / 2 * 2.0 * std::numbers::pi / d.extent()[axis];
        return k * k;
    }
    const double h = d.spacing(axis);
    return 16.0 / 3.0 / (h * h);
}

/// Fourth-order centred stencils with zero ghost layers on the box, so the
/// first derivative is skew and the second negative definite.
Field box_derivative(const Field& u, int axis, int order)
{
    const Domain& d = u.domain();
    const std::size_t stride = d.stride(axis);
    const long n = d.shape()[axis];
    const double h = d.spacing(axis);
    const double s = order == 1 ? 1.0 / (12.0 * h) : 1.0 / (12.0 * h * h);
    const double w1[5] = {1.0, -8.0, 0.0, 8.0, -1.0};
    const double w2[5] = {-1.0, 16.0, -30.0, 16.0, -1.0};
    const double* w = order == 1 ? w1 : w2;
    Field out(d, u.components());
    for (int c = 0; c < u.components(); ++c) {
        const auto src = u.component(c);
        auto dst = out.component(c);
#pragma omp parallel for schedule(static) num_threads(thread_budget())
        for (std::size_t p = 0; p < src.size(); ++p) {
            const long i = static_cast<long>((p / stride) % static_cast<std::size_t>(n));
            double acc = 0.0;
            for (int o = -2; o <= 2; ++o) {
                const long k = i + o;
                if (k >= 0 && k < n && w[o + 2] != 0.0)
                    acc += w[o + 2] * src[static_cast<std::size_t>(static_cast<long>(p) + o * static_cast<long>(stride))];
            }
            dst[p] = s * acc;
        }
    }
    return out;
}

Field op_derivative(const Field& u, int axis, int order)
{
    return u.domain().is_torus() ? derivative(u, axis, order) : box_derivative(u, axis, order);
}

void multiply_inplace(Field& f, const Field& coef)
{
    const auto c = coef.component(0);
    for (int k = 0; k < f.components(); ++k) {
        auto dst = f.component(k);
        for (std::size_t p = 0; p < dst.size(); ++p)
            dst[p] *= c[p];
    }
}

} // namespace

Semigroup::Semigroup(const HormanderSystem& sys, const Domain& domain, Backend backend)
    : sys_(sys), domain_(domain), backend_(backend)
{
    if (sys.dim() != domain.dim())
        throw std::invalid_argument("Semigroup: system and domain dimensions differ");
    if (backend == Backend::spectral && !sys.is_heat())
        throw std::invalid_argument("Semigroup: the spectral backend needs constant heat-type fields; use fd_substep");

    const int n = sys.dim();
    std::vector<double> origin(n, 0.0);
    double diffusion = 0.0, drift = 0.0;
    for (std::size_t j = 0; j < sys.fields().size(); ++j) {
        std::vector<Coef> row(n);
        double rate = 0.0;
        std::vector<double> vmaxes(n);
        for (int a = 0; a < n; ++a) {
            const auto& f = sys.field(static_cast<int>(j))[a];
            Coef& c = row[a];
            double vmax = 0.0;
            if (f.is_constant()) {
                c.value = f(origin);
                c.zero = c.value == 0.0;
                vmax = std::abs(c.value);
            } else {
                c.constant = false;
                c.field = sample_function(f, domain);
                for (double v : c.field.data())
                    vmax = std::max(vmax, std::abs(v));
                c.zero = vmax == 0.0;
            }
            rate += vmax * first_derivative_radius(domain, a);
            vmaxes[a] = vmax;
        }
        const bool constant = std::all_of(row.begin(), row.end(), [](const Coef& c) { return c.constant; });
        if (j == 0)
            drift = rate;
        else if (constant) {
            for (int a = 0; a < n; ++a) {
                diffusion += 0.5 * vmaxes[a] * vmaxes[a] * second_derivative_radius(domain, a);
                for (int b = a + 1; b < n; ++b)
                    diffusion += vmaxes[a] * vmaxes[b] * first_derivative_radius(domain, a) *
                                 first_derivative_radius(domain, b);
            }
        } else
            diffusion += 0.5 * rate * rate;
        coef_.push_back(std::move(row));
    }
    lambda_ = std::max(diffusion + drift, 1e-12);
}

Field Semigroup::directional(const std::vector<Coef>& v, const Field& u) const
{
    Field out(u.domain(), u.components());
    for (int a = 0; a < domain_.dim(); ++a) {
        const Coef& c = v[a];
        if (c.zero)
            continue;
        Field d = op_derivative(u, a, 1);
        if (c.constant)
            out.axpy(c.value, d);
        else {
            multiply_inplace(d, c.field);
            out += d;
        }
    }
    return out;
}

Field Semigroup::generator(const Field& u) const
{
    const int n = domain_.dim();
    Field out = directional(coef_[0], u);
    std::vector<int> alpha(n);
    for (std::size_t j = 1; j < coef_.size(); ++j) {
        const auto& v = coef_[j];
        const bool constant = std::all_of(v.begin(), v.end(), [](const Coef& c) { return c.constant; });
        if (constant) {
            // (V.grad)^2 u = sum_ab v_a v_b d_ab u
            for (int a = 0; a < n; ++a) {
                for (int b = a; b < n; ++b) {
                    const double w = (a == b ? 0.5 : 1.0) * v[a].value * v[b].value;
                    if (w == 0.0)
                        continue;
                    if (a == b)
                        out.axpy(w, op_derivative(u, a, 2));
                    else if (domain_.is_torus()) {
                        std::fill(alpha.begin(), alpha.end(), 0);
                        alpha[a] = alpha[b] = 1;
                        out.axpy(w, derivative(u, alpha));
                    } else
                        out.axpy(w, box_derivative(box_derivative(u, a, 1), b, 1));
                }
            }
        } else {
            out.axpy(0.5, directional(v, directional(v, u)));
        }
    }
    return out;
}

int Semigroup::substeps(double t) const
{
    return std::max(1, static_cast<int>(std::ceil(t / max_substep() - 1e-12)));
}

Field Semigroup::rk4(const Field& u, double dt, double rate, const std::function<Field(double)>* forcing,
                     double s) const
{
    auto rhs = [&](const Field& w, double time) {
        Field r = generator(w);
        r *= rate;
        if (forcing)
            r += (*forcing)(time);
        return r;
    };
    const Field k1 = rhs(u, s);
    Field tmp = u;
    tmp.axpy(0.5 * dt, k1);
    const Field k2 = rhs(tmp, s + 0.5 * dt);
    tmp = u;
    tmp.axpy(0.5 * dt, k2);
    const Field k3 = rhs(tmp, s + 0.5 * dt);
    tmp = u;
    tmp.axpy(dt, k3);
    const Field k4 = rhs(tmp, s + dt);
    Field out = u;
    out.axpy(dt / 6.0, k1);
    out.axpy(dt / 3.0, k2);
    out.axpy(dt / 3.0, k3);
    out.axpy(dt / 6.0, k4);
    return out;
}

Field Semigroup::apply(const Field& f, double t) const
{
    if (t < 0.0)
        throw std::invalid_argument("Semigroup: negative time");
    if (f.domain() != domain_)
        throw std::invalid_argument("Semigroup: field lives on a different grid");
    if (t == 0.0)
        return f;
    if (backend_ == Backend::spectral)
        return heat_convolve(f, sys_.nu(), t);
    const int steps = substeps(t);
    const double dt = t / steps;
    Field u = f;
    for (int s = 0; s < steps; ++s)
        u = rk4(u, dt, 1.0, nullptr, 0.0);
    return u;
}

Field Semigroup::evolve(const Field& u0, double duration, double rate,
                        const std::function<Field(double)>& forcing) const
{
    if (duration < 0.0 || rate < 0.0)
        throw std::invalid_argument("Semigroup: negative duration or rate");
    if (backend_ == Backend::spectral) {
        // Duhamel with composite 4-point Gauss-Legendre
        Field out = apply(u0, rate * duration);
        const auto gl = gauss_legendre(4);
        const int panels = 8;
        const double w = duration / panels;
        for (int p = 0; p < panels; ++p) {
            for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
                const double s = w * (p + 0.5 * (gl.nodes[q] + 1.0));
                out.axpy(0.5 * w * gl.weights[q], apply(forcing(s), rate * (duration - s)));
            }
        }
        return out;
    }
    const int steps = substeps(rate * duration);
    const double dt = duration / steps;
    Field u = u0;
    for (int s = 0; s < steps; ++s)
        u = rk4(u, dt, rate, &forcing, s * dt);
    return u;
}

Field apply_semigroup(const HormanderSystem& sys, const Field& f, double tau, Backend backend)
{
    return Semigroup(sys, f.domain(), backend).apply(f, tau);
}

//---------------------------------------------------------------------------//
// Euler-Maruyama
//---------------------------------------------------------------------------//

namespace {

/// Coefficient compiled to constant, affine or general form.
struct CompiledCoef {
    enum Kind { constant, affine, general } kind = constant;
    double c0 = 0.0;
    std::vector<double> grad;
    const ScalarFunction* f = nullptr;

    explicit CompiledCoef(const ScalarFunction& fn, int n) : grad(n, 0.0), f(&fn)
    {
        if (!fn.is_polynomial()) {
            kind = general;
            return;
        }
        bool linear = true;
        for (const auto& t : fn.terms()) {
            int deg = 0;
            for (int e : t.exp)
                deg += e;
            if (deg > 1)
                linear = false;
        }
        if (!linear) {
            kind = general;
            return;
        }
        for (const auto& t : fn.terms()) {
            int axis = -1;
            for (int a = 0; a < n; ++a)
                if (t.exp[a] == 1)
                    axis = a;
            if (axis < 0)
                c0 += t.coef;
            else
                grad[axis] += t.coef;
        }
        kind = std::any_of(grad.begin(), grad.end(), [](double g) { return g != 0.0; }) ? affine : constant;
    }

    double value(std::span<const double> x) const
    {
        if (kind == constant)
            return c0;
        if (kind == affine) {
            double v = c0;
            for (std::size_t a = 0; a < grad.size(); ++a)
                v += grad[a] * x[a];
            return v;
        }
        return (*f)(x);
    }

    double partial(std::span<const double> x, int axis, std::span<int> alpha) const
    {
        if (kind != general)
            return grad[axis];
        std::fill(alpha.begin(), alpha.end(), 0);
        alpha[axis] = 1;
        return f->derivative(x, alpha);
    }
};

} // namespace

SampleSet euler_maruyama_sample(const HormanderSystem& sys, const std::vector<double>& x0, double tau,
                                int steps, int N, std::uint64_t seed)
{
    const int n = sys.dim();
    const int m = sys.diffusion_count();
    if (static_cast<int>(x0.size()) != n)
        throw std::invalid_argument("euler_maruyama_sample: base point has the wrong dimension");
    if (N < 1)
        throw std::invalid_argument("euler_maruyama_sample: no samples requested");
    if (steps < 16 || !(tau > 0.0))
        throw std::invalid_argument("euler_maruyama_sample: need steps >= 16 and tau > 0");

    std::vector<std::vector<CompiledCoef>> coef;
    std::vector<bool> needs_correction(m + 1, false);
    for (int j = 0; j <= m; ++j) {
        std::vector<CompiledCoef> row;
        for (int a = 0; a < n; ++a) {
            row.emplace_back(sys.field(j)[a], n);
            if (j > 0 && row.back().kind != CompiledCoef::constant)
                needs_correction[j] = true;
        }
        coef.push_back(std::move(row));
    }

    SampleSet out;
    out.x0 = x0;
    out.tau = tau;
    out.points.resize(N, n);
    const double dt = tau / steps;
    const double sdt = std::sqrt(dt);
    const double two_pi = 2.0 * std::numbers::pi;

#pragma omp parallel for schedule(static) num_threads(thread_budget())
    for (int i = 0; i < N; ++i) {
        std::vector<double> x(x0), v(n), drift(n), inc(n), noise(m + 1);
        std::vector<int> alpha(n);
        const auto stream = static_cast<std::uint64_t>(i);
        std::uint64_t counter = 0;
        double spare = 0.0;
        bool has_spare = false;
        auto next_normal = [&]() {
            // Box-Muller, both branches used in sequence
            if (has_spare) {
                has_spare = false;
                return spare;
            }
            const double u1 = CounterRng::uniform(seed, stream, counter++);
            const double u2 = CounterRng::uniform(seed, stream, counter++);
            const double r = std::sqrt(-2.0 * std::log(u1));
            spare = r * std::sin(two_pi * u2);
            has_spare = true;
            return r * std::cos(two_pi * u2);
        };
        for (int s = 0; s < steps; ++s) {
            for (int j = 1; j <= m; ++j)
                noise[j] = next_normal();
            for (int b = 0; b < n; ++b) {
                drift[b] = coef[0][b].value(x);
                inc[b] = 0.0;
            }
            for (int j = 1; j <= m; ++j) {
                for (int a = 0; a < n; ++a)
                    v[a] = coef[j][a].value(x);
                if (needs_correction[j]) {
                    for (int b = 0; b < n; ++b) {
                        double c = 0.0;
                        for (int a = 0; a < n; ++a)
                            if (v[a] != 0.0)
                                c += v[a] * coef[j][b].partial(x, a, alpha);
                        drift[b] += 0.5 * c;
                    }
                }
                for (int a = 0; a < n; ++a)
                    inc[a] += v[a] * sdt * noise[j];
            }
            for (int a = 0; a < n; ++a)
                x[a] += drift[a] * dt + inc[a];
        }
        for (int a = 0; a < n; ++a)
            out.points(i, a) = x[a];
    }
    return out;
}

//---------------------------------------------------------------------------//
// Density estimation
//---------------------------------------------------------------------------//

double DensityEstimate::mass() const
{
    double s = 0.0;
    for (double v : density.data())
        s += v;
    return s * density.domain().cell_volume();
}

DensityEstimate DensityEstimate::scaled(double factor) const
{
    DensityEstimate out = *this;
    out.density *= factor;
    out.noise_floor *= factor;
    return out;
}

DensityEstimate estimate_density(const SampleSet& samples, const Domain& grid, std::optional<double> bandwidth,
                                 std::vector<double> origin)
{
    const int n = grid.dim();
    const auto N = static_cast<std::size_t>(samples.points.rows());
    if (grid.is_torus())
        throw std::invalid_argument("estimate_density: needs a box grid");
    if (samples.points.cols() != n)
        throw std::invalid_argument("estimate_density: sample dimension does not match the grid");
    if (N == 0)
        throw std::invalid_argument("estimate_density: no samples");
    if (origin.empty())
        origin.assign(n, 0.0);
    if (static_cast<int>(origin.size()) != n)
        throw std::invalid_argument("estimate_density: origin has the wrong dimension");

    std::vector<double> h(n);
    for (int a = 0; a < n; ++a) {
        if (bandwidth) {
            if (!(*bandwidth > 0.0))
                throw std::invalid_argument("estimate_density: bandwidth must be positive");
            h[a] = *bandwidth;
            continue;
        }
        const auto col = samples.points.col(a);
        const double mean = col.mean();
        const double var = N > 1 ? (col.array() - mean).square().sum() / static_cast<double>(N - 1) : 0.0;
        if (!(var > 0.0))
            throw std::invalid_argument("estimate_density: zero spread along axis " + std::to_string(a) +
                                        "; pass an explicit bandwidth");
        h[a] = std::pow(static_cast<double>(N), -1.0 / (n + 4)) * std::sqrt(var);
    }

    DensityEstimate est;
    est.x0 = samples.x0;
    est.tau = samples.tau;
    est.origin = origin;
    est.N = N;
    est.bandwidth = h;
    double norm = static_cast<double>(N) * std::pow(2.0 * std::numbers::pi, 0.5 * n);
    for (double ha : h)
        norm *= ha;
    est.noise_floor = 1.0 / norm;
    est.density = Field::scalar(grid);

    const auto& shape = grid.shape();
    const double cut = 6.0;
    auto dst = est.density.component(0);
    const int slabs = std::max(1, std::min(thread_budget(), shape[0]));

    // Each slab of the first axis is owned by one thread; within a slab the
    // samples are accumulated in index order.
#pragma omp parallel for schedule(static) num_threads(slabs)
    for (int t = 0; t < slabs; ++t) {
        const int lo0 = static_cast<int>(static_cast<long>(shape[0]) * t / slabs);
        const int hi0 = static_cast<int>(static_cast<long>(shape[0]) * (t + 1) / slabs);
        std::vector<int> lo(n), hi(n), idx(n);
        std::vector<std::vector<double>> w(n);
        for (std::size_t i = 0; i < N; ++i) {
            bool empty = false;
            for (int a = 0; a < n && !empty; ++a) {
                const double y = samples.points(static_cast<Eigen::Index>(i), a) - origin[a];
                const double hs = grid.spacing(a);
                const double first = grid.coord(a, 0);
                int l = static_cast<int>(std::ceil((y - cut * h[a] - first) / hs));
                int r = static_cast<int>(std::floor((y + cut * h[a] - first) / hs));
                l = std::max(l, a == 0 ? lo0 : 0);
                r = std::min(r, (a == 0 ? hi0 : shape[a]) - 1);
                if (l > r) {
                    empty = true;
                    break;
                }
                lo[a] = l;
                hi[a] = r;
                w[a].resize(r - l + 1);
                for (int k = l; k <= r; ++k) {
                    const double z = (grid.coord(a, k) - y) / h[a];
                    w[a][k - l] = std::exp(-0.5 * z * z);
                }
            }
            if (empty)
                continue;
            // odometer over the window
            idx = lo;
            while (true) {
                double v = est.noise_floor;
                std::size_t flat = 0;
                for (int a = 0; a < n; ++a) {
                    v *= w[a][idx[a] - lo[a]];
                    flat += static_cast<std::size_t>(idx[a]) * grid.stride(a);
                }
                dst[flat] += v;
                int a = n - 1;
                while (a >= 0 && ++idx[a] > hi[a]) {
                    idx[a] = lo[a];
                    --a;
                }
                if (a < 0)
                    break;
            }
        }
    }
    return est;
}

//---------------------------------------------------------------------------//
// Envelope fit
//---------------------------------------------------------------------------//

KSEnvelope fit_envelope(const std::vector<DensityEstimate>& densities)
{
    if (densities.empty())
        throw std::invalid_argument("fit_envelope: no densities");
    struct Row {
        double lx, lt, r2t, lp;
    };
    std::vector<Row> rows;
    std::vector<double> xs, ts;
    for (const auto& d : densities) {
        const Domain& g = d.density.domain();
        const int n = g.dim();
        double x0n = 0.0;
        for (double v : d.x0)
            x0n += v * v;
        const double lx = std::log1p(std::sqrt(x0n));
        xs.push_back(lx);
        ts.push_back(d.tau);
        const auto p = d.density.component(0);
        std::vector<double> y(n);
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (!(p[k] > 10.0 * d.noise_floor))
                continue;
            g.point(k, y);
            double r2 = 0.0;
            for (int a = 0; a < n; ++a) {
                const double dy = d.origin[a] + y[a] - d.x0[a];
                r2 += dy * dy;
            }
            rows.push_back({lx, std::log(d.tau), r2 / d.tau, std::log(p[k])});
        }
    }
    auto distinct = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v.empty() ? 0 : 1 + static_cast<int>(std::count_if(v.begin() + 1, v.end(), [&, prev = v[0]](double x) mutable {
                                                         const bool d = std::abs(x - prev) > 1e-12;
                                                         prev = x;
                                                         return d;
                                                     }));
    };
    if (distinct(ts) < 2)
        throw std::invalid_argument("fit_envelope: need at least two distinct times");
    const bool fit_m = distinct(xs) >= 2;
    const int cols = fit_m ? 4 : 3;
    if (rows.size() < static_cast<std::size_t>(4 * cols))
        throw std::runtime_error("fit_envelope: too few density values above the noise floor");

    Eigen::MatrixXd M(rows.size(), cols);
    Eigen::VectorXd rhs(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        int c = 0;
        M(r, c++) = 1.0;
        if (fit_m)
            M(r, c++) = rows[r].lx;
        M(r, c++) = -rows[r].lt;
        M(r, c++) = -rows[r].r2t;
        rhs(r) = rows[r].lp;
    }
    const Eigen::VectorXd sol = M.colPivHouseholderQr().solve(rhs);
    KSEnvelope env;
    int c = 0;
    env.A = std::exp(sol(c++));
    env.m_exp = fit_m ? sol(c++) : 0.0;
    env.n_exp = sol(c++);
    env.B = sol(c++);
    env.residual = std::sqrt((M * sol - rhs).squaredNorm() / static_cast<double>(rows.size()));
    env.points_used = rows.size();
    return env;
}

KSEnvelope fit_ks_envelope(const HormanderSystem& sys, const std::vector<double>& taus,
                           const std::vector<std::vector<double>>& base_points, int N, std::uint64_t seed,
                           const EnvelopeProbe& probe)
{
    const int n = sys.dim();
    auto distinct_count = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return std::unique(v.begin(), v.end()) - v.begin();
    };
    if (distinct_count(taus) < 3)
        throw std::invalid_argument("fit_ks_envelope: need at least 3 distinct times");
    if (base_points.size() < 3)
        throw std::invalid_argument("fit_ks_envelope: need at least 3 base points");
    if (N < 1)
        throw std::invalid_argument("fit_ks_envelope: no samples");
    std::vector<DensityEstimate> estimates;
    std::uint64_t k = 0;
    for (double tau : taus) {
        for (const auto& x0 : base_points) {
            const SampleSet s = euler_maruyama_sample(sys, x0, tau, probe.steps, N, CounterRng::hash(seed, 0xe11, k++));
            std::vector<double> centre(n), half(n);
            for (int a = 0; a < n; ++a) {
                const auto col = s.points.col(a);
                centre[a] = col.mean();
                const double sd = std::sqrt((col.array() - centre[a]).square().mean());
                half[a] = std::max(probe.grid_sigmas * sd, 1e-6);
            }
            const Domain grid = Domain::box(std::vector<int>(n, probe.grid_points), half);
            estimates.push_back(estimate_density(s, grid, std::nullopt, centre));
        }
    }
    return fit_envelope(estimates);
}

double kolmogorov_density(double t, std::span<const double> x0, std::span<const double> y)
{
    if (x0.size() != 2 || y.size() != 2 || !(t > 0.0))
        throw std::invalid_argument("kolmogorov_density: needs n = 2 and t > 0");
    const double d0 = y[0] - x0[0];
    const double d1 = y[1] - x0[1] - x0[0] * t;
    const double det = t * t * t * t / 12.0;
    const double q = (t * t * t / 3.0 * d0 * d0 - t * t * d0 * d1 + t * d1 * d1) / det;
    return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(det));
}

} // namespace nslab
