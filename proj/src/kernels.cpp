#include "nslab/kernels.hpp"

#include "nslab/fft.hpp"
#include "nslab/parallel.hpp"
#include "nslab/quadrature.hpp"
#include "nslab/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nslab {

namespace {
constexpr double pi = std::numbers::pi;

double euclid(std::span<const double> x)
{
    double s = 0.0;
    for (double v : x)
        s += v * v;
    return std::sqrt(s);
}
} // namespace

double unit_sphere_area(int n)
{
    return 2.0 * std::pow(pi, 0.5 * n) / std::tgamma(0.5 * n);
}

double poisson_kernel(std::span<const double> x)
{
    const int n = static_cast<int>(x.size());
    if (n < 2)
        throw std::invalid_argument("poisson_kernel: dimension must be >= 2");
    const double r = euclid(x);
    if (r == 0.0)
        throw std::domain_error("poisson_kernel: singular at x = 0");
    if (n == 2)
        return std::log(r) / (2.0 * pi);
    return std::pow(r, 2.0 - n) / ((2.0 - n) * unit_sphere_area(n));
}

void poisson_kernel_gradient(std::span<const double> x, std::span<double> grad)
{
    const int n = static_cast<int>(x.size());
    const double r = euclid(x);
    if (r == 0.0)
        throw std::domain_error("poisson_kernel_gradient: singular at x = 0");
    const double f = 1.0 / (unit_sphere_area(n) * std::pow(r, n));
    for (int i = 0; i < n; ++i)
        grad[i] = x[i] * f;
}

double homogeneous_cell_integral(const std::function<double(std::span<const double>)>& f,
                                 std::span<const double> spacing, double degree)
{
    const int n = static_cast<int>(spacing.size());
    if (n + degree <= 0.0)
        throw std::invalid_argument("homogeneous_cell_integral: not locally integrable");
    static const GaussRule rule = gauss_legendre(16);
    const int q = static_cast<int>(rule.nodes.size());
    std::vector<double> y(n);
    std::vector<int> idx(n - 1);
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
        for (double sign : {-1.0, 1.0}) {
            double face = 0.0;
            std::size_t count = 1;
            for (int a = 0; a < n - 1; ++a)
                count *= static_cast<std::size_t>(q);
            for (std::size_t flat = 0; flat < count; ++flat) {
                std::size_t rest = flat;
                double w = 1.0;
                int slot = 0;
                for (int a = 0; a < n; ++a) {
                    if (a == k) {
                        y[a] = sign * 0.5 * spacing[a];
                        continue;
                    }
                    const int i = static_cast<int>(rest % static_cast<std::size_t>(q));
                    rest /= static_cast<std::size_t>(q);
                    y[a] = 0.5 * spacing[a] * rule.nodes[i];
                    w *= 0.5 * spacing[a] * rule.weights[i];
                    ++slot;
                }
                face += w * f(y);
            }
            total += 0.5 * spacing[k] * face / (n + degree);
        }
    }
    return total;
}

//---------------------------------------------------------------------------//
// EllipticKernel
//---------------------------------------------------------------------------//

EllipticKernel EllipticKernel::poisson(int n)
{
    return EllipticKernel(
        n, [](std::span<const double> x) { return poisson_kernel(x); },
        [](std::span<const double> x, std::span<double> g) { poisson_kernel_gradient(x, g); },
        n == 2);
}

EllipticKernel::EllipticKernel(int n, Value value, Gradient gradient, bool logarithmic,
                               double bound_radius)
    : n_(n), value_(std::move(value)), gradient_(std::move(gradient)), logarithmic_(logarithmic)
{
    if (n_ < 2)
        throw std::invalid_argument("EllipticKernel: dimension must be >= 2");
    // measure c on radii in [1e-3 R, R] along axes and diagonals
    std::vector<double> x(n_), g(n_);
    for (int dir = 0; dir <= n_; ++dir) {
        for (int s = 0; s <= 60; ++s) {
            const double r = bound_radius * std::pow(10.0, -3.0 + 3.0 * s / 60.0);
            for (int a = 0; a < n_; ++a)
                x[a] = dir == n_ ? r / std::sqrt(double(n_)) : (a == dir ? r : 0.0);
            const double kv = std::abs(value_(x));
            gradient_(x, g);
            double gn = 0.0;
            for (double gi : g)
                gn = std::max(gn, std::abs(gi));
            if (!std::isfinite(kv) || !std::isfinite(gn))
                throw std::domain_error("EllipticKernel: non-finite value off the diagonal");
            bound_ = std::max({bound_, kv * std::pow(r, n_ - 2.0), gn * std::pow(r, n_ - 1.0)});
        }
    }
}

double EllipticKernel::evaluate(std::span<const double> x) const { return value_(x); }

void EllipticKernel::gradient(std::span<const double> x, std::span<double> grad) const
{
    gradient_(x, grad);
}

EllipticKernel EllipticKernel::scaled(double factor) const
{
    auto v = value_;
    auto g = gradient_;
    return EllipticKernel(
        n_, [v, factor](std::span<const double> x) { return factor * v(x); },
        [g, factor](std::span<const double> x, std::span<double> out) {
            g(x, out);
            for (auto& o : out)
                o *= factor;
        },
        logarithmic_);
}

double EllipticKernel::cell_average(std::span<const double> spacing) const
{
    double volume = 1.0;
    for (double h : spacing)
        volume *= h;
    if (!logarithmic_)
        return homogeneous_cell_integral(value_, spacing, 2.0 - n_) / volume;
    // K(t y) = K(y) + L ln t with L read off the kernel itself
    std::vector<double> e(n_, 0.0), e2(n_, 0.0);
    e[0] = 1.0;
    e2[0] = std::numbers::e;
    const double L = value_(e2) - value_(e);
    // int_cell K = sum_faces (h_k/2) [ L int_0^1 t^(n-1) ln t dt |face| + (1/n) int_face K ]
    const double base = homogeneous_cell_integral(value_, spacing, 0.0);
    double faces = 0.0;
    for (int k = 0; k < n_; ++k)
        faces += 2.0 * 0.5 * spacing[k] * (volume / spacing[k]);
    return (base - L * faces / (double(n_) * n_)) / volume;
}

double EllipticKernel::cell_average_gradient(int i, std::span<const double> spacing) const
{
    double volume = 1.0;
    for (double h : spacing)
        volume *= h;
    std::vector<double> g(n_);
    return homogeneous_cell_integral(
               [&](std::span<const double> x) {
                   gradient_(x, g);
                   return g[i];
               },
               spacing, 1.0 - n_)
        / volume;
}

double EllipticKernel::cell_average_abs_gradient(int i, std::span<const double> spacing) const
{
    double volume = 1.0;
    for (double h : spacing)
        volume *= h;
    std::vector<double> g(n_);
    return homogeneous_cell_integral(
               [&](std::span<const double> x) {
                   gradient_(x, g);
                   return std::abs(g[i]);
               },
               spacing, 1.0 - n_)
        / volume;
}

//---------------------------------------------------------------------------//
// Heat semigroup
//---------------------------------------------------------------------------//

namespace {

void gaussian_line_convolve(const Field& in, Field& out, int axis, double sigma)
{
    const Domain& d = in.domain();
    const int n = d.shape()[axis];
    const double h = d.spacing(axis);
    const int window = std::min(n - 1, static_cast<int>(std::floor(8.0 * sigma / h)));
    std::vector<double> w(2 * window + 1);
    double mass = 0.0;
    for (int k = -window; k <= window; ++k) {
        const double x = k * h;
        w[k + window] = std::exp(-x * x / (2.0 * sigma * sigma));
        mass += w[k + window];
    }
    for (auto& x : w)
        x /= mass;

    const std::size_t stride = d.stride(axis);
    const std::size_t block = stride * static_cast<std::size_t>(n);
    const std::size_t lines = d.size() / static_cast<std::size_t>(n);
    for (int c = 0; c < in.components(); ++c) {
        const double* src = in.component(c).data();
        double* dst = out.component(c).data();
#pragma omp parallel for num_threads(thread_budget()) schedule(static)
        for (std::ptrdiff_t line = 0; line < static_cast<std::ptrdiff_t>(lines); ++line) {
            const std::size_t base = (static_cast<std::size_t>(line) / stride) * block
                + static_cast<std::size_t>(line) % stride;
            for (int i = 0; i < n; ++i) {
                const int lo = std::max(0, i - window), hi = std::min(n - 1, i + window);
                double acc = 0.0;
                for (int j = lo; j <= hi; ++j)
                    acc += w[i - j + window] * src[base + static_cast<std::size_t>(j) * stride];
                dst[base + static_cast<std::size_t>(i) * stride] = acc;
            }
        }
    }
}

} // namespace

Field heat_convolve(const Field& f, double kappa, double tau)
{
    const double s = kappa * tau;
    if (!(s >= 0.0) || kappa < 0.0 || tau < 0.0)
        throw std::invalid_argument("heat_convolve: kappa * tau must be non-negative");
    if (s == 0.0)
        return f;
    const Domain& d = f.domain();
    if (d.is_torus()) {
        Field out(d, f.components());
        for (int c = 0; c < f.components(); ++c) {
            auto hat = fft::forward(f.component(c), d.shape());
            fft::for_each_mode(d.shape(), [&](std::size_t i, std::span<const int> k) {
                double k2 = 0.0;
                for (int a = 0; a < d.dim(); ++a) {
                    const double kk = 2.0 * pi * k[a] / d.extent()[a];
                    k2 += kk * kk;
                }
                hat[i] *= std::exp(-k2 * s);
            });
            fft::inverse(hat, d.shape(), out.component(c));
        }
        return out;
    }
    const double sigma = std::sqrt(2.0 * s);
    Field cur = f, next(d, f.components());
    for (int axis = 0; axis < d.dim(); ++axis) {
        gaussian_line_convolve(cur, next, axis, sigma);
        std::swap(cur, next);
    }
    return cur;
}

//---------------------------------------------------------------------------//
// Leray term, pressure, projection
//---------------------------------------------------------------------------//

namespace {

struct ModeInfo {
    std::vector<double> k;     // angular wavenumbers
    std::vector<double> k_eff; // first-derivative wavenumbers (Nyquist dropped)
    double k2 = 0.0;
};

ModeInfo mode_info(const Domain& d, std::span<const int> k)
{
    ModeInfo m;
    m.k.resize(d.dim());
    m.k_eff.resize(d.dim());
    for (int a = 0; a < d.dim(); ++a) {
        m.k[a] = 2.0 * pi * k[a] / d.extent()[a];
        m.k_eff[a] = 2 * std::abs(k[a]) == d.shape()[a] ? 0.0 : m.k[a];
        m.k2 += m.k[a] * m.k[a];
    }
    return m;
}

// Box convolution operators for one domain and kernel: n gradient components
// plus the kernel value itself.
struct BoxKernelOps {
    std::vector<fft::PaddedConvolution> gradient;
    std::unique_ptr<fft::PaddedConvolution> value;
};

// Sum over the lattice o * h, o != 0, |o_a h_a| <= R, of fn(z).
template <class Fn>
double punctured_lattice_sum(std::span<const double> h, double R, Fn&& fn)
{
    const int n = static_cast<int>(h.size());
    std::vector<int> lim(n);
    std::size_t total = 1;
    for (int a = 0; a < n; ++a) {
        lim[a] = static_cast<int>(std::ceil(R / h[a]));
        total *= static_cast<std::size_t>(2 * lim[a] + 1);
    }
    std::vector<double> z(n);
    double sum = 0.0;
    for (std::size_t f = 0; f < total; ++f) {
        std::size_t r = f;
        bool origin = true;
        for (int a = 0; a < n; ++a) {
            const std::size_t m = static_cast<std::size_t>(2 * lim[a] + 1);
            const int o = static_cast<int>(r % m) - lim[a];
            r /= m;
            z[a] = o * h[a];
            origin = origin && o == 0;
        }
        if (!origin)
            sum += fn(std::span<const double>(z));
    }
    double dv = 1.0;
    for (double x : h)
        dv *= x;
    return sum * dv;
}

// The punctured lattice rule for int d_iK(z) phi(z) dz misses
// C_i d_i phi(0) + O(h^4) (the local error of a homogeneous kernel of degree
// 1-n). C_i is fitted from Gaussian moments phi = z_i exp(-|z|^2/s^2):
// T(s) = s^2 I - C_i - D / s^2.
double gradient_correction(const EllipticKernel& kernel, int i, std::span<const double> h)
{
    const int n = kernel.dim();
    const double hmax = *std::max_element(h.begin(), h.end());
    const double scales[3] = {6.0, 9.0, 12.0};
    Eigen::Matrix3d A;
    Eigen::Vector3d T;
    std::vector<double> g(n);
    for (int r = 0; r < 3; ++r) {
        const double s = scales[r] * hmax;
        T(r) = punctured_lattice_sum(h, 6.0 * s, [&](std::span<const double> z) {
            double r2 = 0.0;
            for (double t : z)
                r2 += t * t;
            kernel.gradient(z, g);
            return g[i] * z[i] * std::exp(-r2 / (s * s));
        });
        A(r, 0) = s * s;
        A(r, 1) = -1.0;
        A(r, 2) = -1.0 / (s * s);
    }
    return A.fullPivLu().solve(T)(1);
}

// Weight of the singular point for the Poisson kernel itself, fitted against
// the closed-form Gaussian moments E(s) = int K exp(-|z|^2/s^2) dz:
// E(s) - T(s) = W + D / s^2.
double poisson_centre_weight(std::span<const double> h)
{
    const int n = static_cast<int>(h.size());
    const double hmax = *std::max_element(h.begin(), h.end());
    auto exact = [n](double s) {
        if (n == 2)
            return 0.5 * s * s * (std::log(s) - 0.5 * std::numbers::egamma);
        return s * s / (2.0 * (2.0 - n));
    };
    const double scales[2] = {8.0, 12.0};
    double E[2];
    for (int r = 0; r < 2; ++r) {
        const double s = scales[r] * hmax;
        E[r] = exact(s) - punctured_lattice_sum(h, 6.0 * s, [&](std::span<const double> z) {
                   double r2 = 0.0;
                   for (double t : z)
                       r2 += t * t;
                   return poisson_kernel(z) * std::exp(-r2 / (s * s));
               });
    }
    const double s0 = scales[0] * scales[0], s1 = scales[1] * scales[1];
    return (s1 * E[1] - s0 * E[0]) / (s1 - s0);
}

std::shared_ptr<const BoxKernelOps> build_box_ops(const Domain& d, const EllipticKernel& kernel,
                                                  bool poisson_value)
{
    auto ops = std::make_shared<BoxKernelOps>();
    const int n = d.dim();
    const double dv = d.cell_volume();
    const auto& h = d.spacing();
    std::vector<double> x(n), g(n);
    for (int i = 0; i < n; ++i) {
        const double centre = kernel.cell_average_gradient(i, h) * dv;
        const double corr = gradient_correction(kernel, i, h) / (2.0 * h[i]);
        ops->gradient.emplace_back(d.shape(), [&, i](std::span<const int> off) {
            int nonzero = 0, axis = -1;
            for (int a = 0; a < n; ++a) {
                x[a] = off[a] * h[a];
                if (off[a] != 0) {
                    ++nonzero;
                    axis = a;
                }
            }
            if (nonzero == 0)
                return centre;
            kernel.gradient(x, g);
            double w = g[i] * dv;
            // centred difference for -C_i d_i s(x)
            if (nonzero == 1 && axis == i && std::abs(off[i]) == 1)
                w += off[i] * corr;
            return w;
        });
    }
    if (poisson_value) {
        const double centre = poisson_centre_weight(h);
        ops->value = std::make_unique<fft::PaddedConvolution>(d.shape(), [&](std::span<const int> off) {
            bool zero = true;
            for (int a = 0; a < n; ++a) {
                x[a] = off[a] * h[a];
                zero = zero && off[a] == 0;
            }
            return zero ? centre : poisson_kernel(x) * dv;
        });
    }
    return ops;
}

std::shared_ptr<const BoxKernelOps> poisson_box_ops(const Domain& d)
{
    static std::mutex mutex;
    static std::map<std::pair<std::vector<int>, std::vector<double>>, std::shared_ptr<const BoxKernelOps>>
        cache;
    std::lock_guard lock(mutex);
    auto key = std::make_pair(d.shape(), d.extent());
    if (auto it = cache.find(key); it != cache.end())
        return it->second;
    auto ops = build_box_ops(d, EllipticKernel::poisson(d.dim()), true);
    cache.emplace(key, ops);
    return ops;
}

// grad[k][j] = d v_k / d x_j
std::vector<std::vector<Field>> velocity_gradient(const Field& v)
{
    const int n = v.domain().dim();
    std::vector<std::vector<Field>> grad(n);
    for (int k = 0; k < n; ++k) {
        Field vk = v.extract(k);
        for (int j = 0; j < n; ++j)
            grad[k].push_back(derivative(vk, j, 1));
    }
    return grad;
}

void check_velocity(const Field& v, const char* where)
{
    const int n = v.domain().dim();
    if (n < 2)
        throw std::invalid_argument(std::string(where) + ": dimension must be >= 2");
    if (v.components() != n)
        throw std::invalid_argument(std::string(where) + ": expected an n-vector field");
}

// Per-component scalar sources s_i; coupling callables take (j, k, point).
template <class C, class D>
std::vector<Field> leray_integrands(const Field& v, C&& c_at, D&& d_at, bool has_d)
{
    const Domain& dom = v.domain();
    const int n = dom.dim();
    const auto grad = velocity_gradient(v);
    Field base = Field::scalar(dom);
    auto b = base.component(0);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            auto vkj = grad[k][j].component(0), vjk = grad[j][k].component(0);
            for (std::size_t p = 0; p < dom.size(); ++p)
                b[p] += c_at(j, k, p) * vkj[p] * vjk[p];
        }
    std::vector<Field> s(n, base);
    if (has_d)
        for (int i = 0; i < n; ++i) {
            auto si = s[i].component(0);
            for (int k = 0; k < n; ++k) {
                auto vik = grad[i][k].component(0);
                for (std::size_t p = 0; p < dom.size(); ++p)
                    si[p] += d_at(k, p) * vik[p];
            }
        }
    return s;
}

Field apply_leray_kernel(const Domain& dom, const std::vector<Field>& s, const BoxKernelOps* ops)
{
    const int n = dom.dim();
    Field out = Field::vector(dom);
    if (dom.is_torus()) {
        for (int i = 0; i < n; ++i) {
            auto hat = fft::forward(s[i].component(0), dom.shape());
            fft::for_each_mode(dom.shape(), [&](std::size_t m, std::span<const int> k) {
                const auto info = mode_info(dom, k);
                // d_i Delta^{-1}
                hat[m] = info.k2 == 0.0
                    ? std::complex<double>{}
                    : hat[m] * std::complex<double>(0.0, -info.k_eff[i] / info.k2);
            });
            fft::inverse(hat, dom.shape(), out.component(i));
        }
        return out;
    }
    for (int i = 0; i < n; ++i)
        ops->gradient[i].apply(s[i].component(0), out.component(i));
    return out;
}

} // namespace

Field leray_source(const Field& v, const Couplings& couplings)
{
    check_velocity(v, "leray_source");
    const Domain& dom = v.domain();
    const int n = dom.dim();
    if (couplings.c.rows() != n || couplings.c.cols() != n || couplings.d.size() != n)
        throw std::invalid_argument("leray_source: coupling dimensions do not match the field");
    const bool has_d = couplings.d.cwiseAbs().maxCoeff() != 0.0;
    auto s = leray_integrands(
        v, [&](int j, int k, std::size_t) { return couplings.c(j, k); },
        [&](int k, std::size_t) { return couplings.d(k); }, has_d);
    auto ops = dom.is_torus() ? nullptr : poisson_box_ops(dom);
    return apply_leray_kernel(dom, s, ops.get());
}

Field leray_source(const Field& v, const CouplingFields& couplings)
{
    check_velocity(v, "leray_source");
    const Domain& dom = v.domain();
    const int n = dom.dim();
    if (static_cast<int>(couplings.c.size()) != n)
        throw std::invalid_argument("leray_source: coupling dimensions do not match the field");
    const bool has_d = !couplings.d.empty();
    auto s = leray_integrands(
        v, [&](int j, int k, std::size_t p) { return couplings.c[j][k].data()[p]; },
        [&](int k, std::size_t p) { return couplings.d[k].data()[p]; }, has_d);
    auto ops = dom.is_torus() ? nullptr : poisson_box_ops(dom);
    return apply_leray_kernel(dom, s, ops.get());
}

Field leray_source(const Field& v, const Couplings& couplings, const EllipticKernel& kernel)
{
    check_velocity(v, "leray_source");
    const Domain& dom = v.domain();
    if (dom.is_torus())
        return leray_source(v, couplings);
    if (kernel.dim() != dom.dim())
        throw std::invalid_argument("leray_source: kernel dimension mismatch");
    const bool has_d = couplings.d.cwiseAbs().maxCoeff() != 0.0;
    auto s = leray_integrands(
        v, [&](int j, int k, std::size_t) { return couplings.c(j, k); },
        [&](int k, std::size_t) { return couplings.d(k); }, has_d);
    auto ops = build_box_ops(dom, kernel, false);
    return apply_leray_kernel(dom, s, ops.get());
}

Field kernel_gradient_convolve(const std::vector<Field>& s)
{
    if (s.empty())
        throw std::invalid_argument("kernel_gradient_convolve: no integrands");
    const Domain& dom = s[0].domain();
    if (static_cast<int>(s.size()) != dom.dim())
        throw std::invalid_argument("kernel_gradient_convolve: need one integrand per axis");
    for (const auto& f : s)
        if (f.domain() != dom || !f.is_scalar())
            throw std::invalid_argument("kernel_gradient_convolve: integrands must be scalar fields on one grid");
    auto ops = dom.is_torus() ? nullptr : poisson_box_ops(dom);
    return apply_leray_kernel(dom, s, ops.get());
}

Field recover_pressure(const Field& v)
{
    check_velocity(v, "recover_pressure");
    const Domain& dom = v.domain();
    auto s = leray_integrands(
        v, [](int, int, std::size_t) { return 1.0; },
        [](int, std::size_t) { return 0.0; }, false);
    Field p = Field::scalar(dom);
    if (dom.is_torus()) {
        auto hat = fft::forward(s[0].component(0), dom.shape());
        fft::for_each_mode(dom.shape(), [&](std::size_t m, std::span<const int> k) {
            const auto info = mode_info(dom, k);
            hat[m] = info.k2 == 0.0 ? std::complex<double>{} : hat[m] / info.k2;
        });
        fft::inverse(hat, dom.shape(), p.component(0));
        return p;
    }
    poisson_box_ops(dom)->value->apply(s[0].component(0), p.component(0));
    p *= -1.0;
    return p;
}

Field leray_project(const Field& v)
{
    check_velocity(v, "leray_project");
    const Domain& dom = v.domain();
    const int n = dom.dim();
    if (!dom.is_torus()) {
        Field div = divergence(v);
        Field grad_phi = Field::vector(dom);
        auto ops = poisson_box_ops(dom);
        for (int i = 0; i < n; ++i)
            ops->gradient[i].apply(div.component(0), grad_phi.component(i));
        return v - grad_phi;
    }
    std::vector<std::vector<fft::cplx>> hat(n);
    for (int i = 0; i < n; ++i)
        hat[i] = fft::forward(v.component(i), dom.shape());
    fft::for_each_mode(dom.shape(), [&](std::size_t m, std::span<const int> k) {
        const auto info = mode_info(dom, k);
        double ke2 = 0.0;
        fft::cplx dot{};
        for (int a = 0; a < n; ++a) {
            ke2 += info.k_eff[a] * info.k_eff[a];
            dot += info.k_eff[a] * hat[a][m];
        }
        if (ke2 == 0.0)
            return;
        for (int a = 0; a < n; ++a)
            hat[a][m] -= info.k_eff[a] * dot / ke2;
    });
    Field out = Field::vector(dom);
    for (int i = 0; i < n; ++i)
        fft::inverse(hat[i], dom.shape(), out.component(i));
    return out;
}

Field dealias(const Field& f)
{
    const Domain& dom = f.domain();
    if (!dom.is_torus())
        return f;
    Field out(dom, f.components());
    for (int c = 0; c < f.components(); ++c) {
        auto hat = fft::forward(f.component(c), dom.shape());
        fft::for_each_mode(dom.shape(), [&](std::size_t m, std::span<const int> k) {
            for (int a = 0; a < dom.dim(); ++a)
                if (3 * std::abs(k[a]) >= dom.shape()[a]) {
                    hat[m] = 0.0;
                    return;
                }
        });
        fft::inverse(hat, dom.shape(), out.component(c));
    }
    return out;
}

//---------------------------------------------------------------------------//
// Estimation constants
//---------------------------------------------------------------------------//

namespace {

// Integral of sum-tracked |d_i K(x - y)| w(y) over one axis-aligned box.
// lo/hi are the box corners; `vertex` marks boxes that have x as a corner.
struct CKIntegrator {
    const EllipticKernel& kernel;
    int n;
    GaussRule near = gauss_legendre(8);
    GaussRule mid = gauss_legendre(4);
    GaussRule far = gauss_legendre(2);
    std::vector<double> y, z, g, p;
    std::vector<int> idx;

    CKIntegrator(const EllipticKernel& k) : kernel(k), n(k.dim()), y(n), z(n), g(n), p(n), idx(n) {}

    static double weight(std::span<const double> y)
    {
        double r2 = 0.0;
        for (double t : y)
            r2 += t * t;
        return 1.0 / (1.0 + std::pow(std::sqrt(r2), double(y.size())));
    }

    void tensor(const GaussRule& rule, std::span<const double> x, std::span<const double> lo,
                std::span<const double> hi, std::vector<double>& acc)
    {
        const int q = static_cast<int>(rule.nodes.size());
        std::size_t total = 1;
        for (int a = 0; a < n; ++a)
            total *= static_cast<std::size_t>(q);
        for (std::size_t f = 0; f < total; ++f) {
            std::size_t r = f;
            double w = 1.0;
            for (int a = 0; a < n; ++a) {
                const int i = static_cast<int>(r % static_cast<std::size_t>(q));
                r /= static_cast<std::size_t>(q);
                const double half = 0.5 * (hi[a] - lo[a]);
                y[a] = lo[a] + half * (1.0 + rule.nodes[i]);
                w *= half * rule.weights[i];
                z[a] = x[a] - y[a];
            }
            kernel.gradient(z, g);
            w *= weight(y);
            for (int i = 0; i < n; ++i)
                acc[i] += w * std::abs(g[i]);
        }
    }

    // Box with corner x and side vector s: one pyramid per face opposite x,
    // y = x + t p with p on the face; |d_i K(-t p)| t^(n-1) = |d_i K(p)|.
    void duffy(std::span<const double> x, std::span<const double> s, std::vector<double>& acc)
    {
        const int q = static_cast<int>(near.nodes.size());
        std::size_t total = 1;
        for (int a = 0; a < n; ++a)
            total *= static_cast<std::size_t>(q);
        for (int k = 0; k < n; ++k) {
            for (std::size_t f = 0; f < total; ++f) {
                std::size_t r = f;
                double w = std::abs(s[k]);
                double t = 0.0;
                for (int a = 0; a < n; ++a) {
                    const int i = static_cast<int>(r % static_cast<std::size_t>(q));
                    r /= static_cast<std::size_t>(q);
                    const double u = 0.5 * (1.0 + near.nodes[i]);
                    w *= 0.5 * near.weights[i];
                    if (a == k) {
                        t = u; // radial variable in the slot of the fixed axis
                        p[a] = s[a];
                    } else {
                        p[a] = u * s[a];
                        w *= std::abs(s[a]);
                    }
                }
                for (int a = 0; a < n; ++a) {
                    y[a] = x[a] + t * p[a];
                    z[a] = -p[a];
                }
                kernel.gradient(z, g);
                w *= weight(y);
                for (int i = 0; i < n; ++i)
                    acc[i] += w * std::abs(g[i]);
            }
        }
    }
};

} // namespace

CKEstimate estimate_CK(const Domain& box, const EllipticKernel& kernel, std::uint64_t seed)
{
    if (box.is_torus())
        throw std::invalid_argument("estimate_CK: requires a box domain");
    const int n = box.dim();
    if (kernel.dim() != n)
        throw std::invalid_argument("estimate_CK: kernel dimension mismatch");

    std::vector<std::vector<double>> probes{std::vector<double>(n, 0.0)};
    StreamRng rng(seed, 0);
    for (int p = 0; p < 8; ++p) {
        std::vector<double> x(n);
        for (int a = 0; a < n; ++a)
            x[a] = (rng.uniform() - 0.5) * box.extent()[a];
        probes.push_back(x);
    }

    CKEstimate est;
    for (const auto& x : probes) {
        // breakpoints per axis: x_a + k h_a clipped to [-a, a]
        std::vector<std::vector<double>> cuts(n);
        for (int a = 0; a < n; ++a) {
            const double h = box.spacing(a), L = box.extent()[a];
            const int kmin = static_cast<int>(std::floor((-L - x[a]) / h));
            const int kmax = static_cast<int>(std::ceil((L - x[a]) / h));
            cuts[a].push_back(-L);
            for (int k = kmin; k <= kmax; ++k) {
                const double c = x[a] + k * h;
                if (c > -L + 1e-9 * h && c < L - 1e-9 * h)
                    cuts[a].push_back(c);
            }
            cuts[a].push_back(L);
        }

        std::size_t cells = 1;
        for (int a = 0; a < n; ++a)
            cells *= cuts[a].size() - 1;
        const int threads = thread_budget();
        std::vector<std::vector<double>> partial(threads, std::vector<double>(n, 0.0));
#pragma omp parallel num_threads(threads)
        {
#ifdef _OPENMP
            const int tid = omp_get_thread_num();
#else
            const int tid = 0;
#endif
            CKIntegrator integ(kernel);
            std::vector<double> lo(n), hi(n), s(n);
#pragma omp for schedule(static)
            for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(cells); ++c) {
                std::size_t r = static_cast<std::size_t>(c);
                bool vertex = true;
                double dist = 0.0;
                for (int a = n - 1; a >= 0; --a) {
                    const std::size_t m = cuts[a].size() - 1;
                    const std::size_t i = r % m;
                    r /= m;
                    lo[a] = cuts[a][i];
                    hi[a] = cuts[a][i + 1];
                    const bool at_lo = lo[a] == x[a], at_hi = hi[a] == x[a];
                    vertex = vertex && (at_lo || at_hi);
                    s[a] = at_lo ? hi[a] - lo[a] : lo[a] - hi[a];
                    const double gap = std::max({lo[a] - x[a], x[a] - hi[a], 0.0}) / box.spacing(a);
                    dist = std::max(dist, gap);
                }
                if (vertex)
                    integ.duffy(x, s, partial[tid]);
                else
                    integ.tensor(dist < 1.5 ? integ.near : dist < 4.5 ? integ.mid : integ.far, x, lo, hi,
                                 partial[tid]);
            }
        }
        std::vector<double> acc(n, 0.0);
        for (const auto& part : partial)
            for (int i = 0; i < n; ++i)
                acc[i] += part[i];
        const double value = *std::max_element(acc.begin(), acc.end());
        est.per_point.push_back(value);
        est.value = std::max(est.value, value);
    }
    const double radius = *std::min_element(box.extent().begin(), box.extent().end());
    // |x| <= a/2 and |y| >= a give |x - y| >= |y|/2
    est.tail = kernel.bound_constant() * std::pow(2.0, n - 1.0) * unit_sphere_area(n)
        * std::pow(radius, 1.0 - n) / (n - 1.0);
    return est;
}

double weighted_product_ratio(const Field& v, const Field& w, double s)
{
    const Domain& dom = v.domain();
    const int n = dom.dim();
    const double dv = dom.cell_volume();
    // u(x) = int (1+|y|^2)^(-s/2) v(x - y) w(y) dy as a linear convolution of
    // v with a(y) = weight(y) w(y); x - y is mapped onto the grid through the
    // centre cell.
    Field a = sample(dom, 1, [&](std::span<const double> y, int) {
        double r2 = 0.0;
        for (double t : y)
            r2 += t * t;
        return std::pow(1.0 + r2, -0.5 * s);
    });
    for (std::size_t p = 0; p < dom.size(); ++p)
        a.data()[p] *= w.data()[p] * dv;
    std::vector<int> mid(n);
    for (int i = 0; i < n; ++i)
        mid[i] = dom.shape()[i] / 2;
    fft::PaddedConvolution conv(dom.shape(), [&](std::span<const int> off) {
        std::size_t flat = 0;
        for (int i = 0; i < n; ++i) {
            const int idx = off[i] + mid[i];
            if (idx < 0 || idx >= dom.shape()[i])
                return 0.0;
            flat += static_cast<std::size_t>(idx) * dom.stride(i);
        }
        return v.data()[flat];
    });
    Field u = Field::scalar(dom);
    conv.apply(a.component(0), u.component(0));
    const double denom = norm(v, Norm::l2()) * norm(w, Norm::l2());
    return denom == 0.0 ? 0.0 : norm(u, Norm::l2()) / denom;
}

CsEstimate estimate_Cs(int n, double s, int trials, std::uint64_t seed, int points_per_axis,
                       double half_width)
{
    if (!(s > 0.5 * n))
        throw std::invalid_argument("estimate_Cs: requires s > n/2");
    if (trials < 0)
        throw std::invalid_argument("estimate_Cs: trials must be non-negative");
    Domain dom = Domain::box(std::vector<int>(n, points_per_axis), std::vector<double>(n, half_width));
    CsEstimate est;

    Field spike = Field::scalar(dom);
    std::size_t centre = 0;
    for (int i = 0; i < n; ++i)
        centre += static_cast<std::size_t>(points_per_axis / 2) * dom.stride(i);
    spike.data()[centre] = 1.0 / dom.cell_volume();
    est.raw = weighted_product_ratio(spike, spike, s);

    // non-negative sums of Gaussian bumps: the ratio is then monotone in s
    auto bumps = [&](StreamRng& rng) {
        const int count = 1 + static_cast<int>(rng.uniform() * 4);
        std::vector<std::vector<double>> centres(count, std::vector<double>(n));
        std::vector<double> widths(count), amps(count);
        for (int b = 0; b < count; ++b) {
            for (int i = 0; i < n; ++i)
                centres[b][i] = (2.0 * rng.uniform() - 1.0) * 0.5 * half_width;
            widths[b] = 0.3 + 2.0 * rng.uniform();
            amps[b] = rng.uniform();
        }
        return sample(dom, 1, [&](std::span<const double> x, int) {
            double total = 0.0;
            for (int b = 0; b < count; ++b) {
                double r2 = 0.0;
                for (int i = 0; i < n; ++i)
                    r2 += (x[i] - centres[b][i]) * (x[i] - centres[b][i]);
                total += amps[b] * std::exp(-r2 / (2 * widths[b] * widths[b]));
            }
            return total;
        });
    };
    for (int t = 0; t < trials; ++t) {
        StreamRng rng(seed, static_cast<std::uint64_t>(t));
        Field v = bumps(rng), w = bumps(rng);
        est.raw = std::max(est.raw, weighted_product_ratio(v, w, s));
    }
    est.value = std::max(1.0, est.raw);
    return est;
}

} // namespace nslab
