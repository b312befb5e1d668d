#include "nslab/grid.hpp"

#include "nslab/fft.hpp"
#include "nslab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nslab {

std::string to_string(DomainKind kind) { return kind == DomainKind::torus ? "torus" : "box"; }

DomainKind domain_kind_from_string(const std::string& name)
{
    if (name == "torus")
        return DomainKind::torus;
    if (name == "box")
        return DomainKind::box;
    throw std::invalid_argument("unknown domain kind '" + name + "'");
}

//---------------------------------------------------------------------------//
// Domain
//---------------------------------------------------------------------------//

Domain::Domain(DomainKind kind, std::vector<int> shape, std::vector<double> extent)
    : kind_(kind), shape_(std::move(shape)), extent_(std::move(extent))
{
    const int n = static_cast<int>(shape_.size());
    if (n < 2)
        throw std::invalid_argument("Domain: dimension must be >= 2");
    if (extent_.size() != shape_.size())
        throw std::invalid_argument("Domain: shape and extent lengths differ");
    spacing_.resize(n);
    strides_.assign(n, 1);
    size_ = 1;
    for (int a = 0; a < n; ++a) {
        if (shape_[a] < 8)
            throw std::invalid_argument("Domain: every axis needs at least 8 points");
        if (kind_ == DomainKind::torus && (shape_[a] & (shape_[a] - 1)) != 0)
            throw std::invalid_argument("Domain: torus axes must be powers of two");
        if (!(extent_[a] > 0.0) || !std::isfinite(extent_[a]))
            throw std::invalid_argument("Domain: extent must be positive and finite");
        spacing_[a] = kind_ == DomainKind::torus ? extent_[a] / shape_[a]
                                                 : 2.0 * extent_[a] / shape_[a];
        size_ *= static_cast<std::size_t>(shape_[a]);
    }
    for (int a = n - 2; a >= 0; --a)
        strides_[a] = strides_[a + 1] * static_cast<std::size_t>(shape_[a + 1]);
}

Domain Domain::torus(std::vector<int> shape, std::vector<double> period)
{
    return Domain(DomainKind::torus, std::move(shape), std::move(period));
}

Domain Domain::box(std::vector<int> shape, std::vector<double> half_width)
{
    return Domain(DomainKind::box, std::move(shape), std::move(half_width));
}

double Domain::cell_volume() const
{
    double v = 1.0;
    for (double h : spacing_)
        v *= h;
    return v;
}

double Domain::coord(int axis, int i) const
{
    const double h = spacing_[axis];
    return kind_ == DomainKind::torus ? i * h : -extent_[axis] + (i + 0.5) * h;
}

void Domain::unravel(std::size_t flat, std::span<int> index) const
{
    for (int a = dim() - 1; a >= 0; --a) {
        index[a] = static_cast<int>(flat % static_cast<std::size_t>(shape_[a]));
        flat /= static_cast<std::size_t>(shape_[a]);
    }
}

void Domain::point(std::size_t flat, std::span<double> x) const
{
    for (int a = dim() - 1; a >= 0; --a) {
        const int i = static_cast<int>(flat % static_cast<std::size_t>(shape_[a]));
        flat /= static_cast<std::size_t>(shape_[a]);
        x[a] = coord(a, i);
    }
}

bool Domain::operator==(const Domain& other) const
{
    return kind_ == other.kind_ && shape_ == other.shape_ && extent_ == other.extent_;
}

//---------------------------------------------------------------------------//
// Field
//---------------------------------------------------------------------------//

Field::Field(Domain domain, int components)
    : domain_(std::move(domain)), components_(components)
{
    if (components_ < 1)
        throw std::invalid_argument("Field: needs at least one component");
    data_.assign(static_cast<std::size_t>(components_) * domain_.size(), 0.0);
}

Field::Field(Domain domain, int components, std::vector<double> data)
    : domain_(std::move(domain)), components_(components), data_(std::move(data))
{
    if (components_ < 1)
        throw std::invalid_argument("Field: needs at least one component");
    if (data_.size() != static_cast<std::size_t>(components_) * domain_.size())
        throw std::invalid_argument("Field: data length does not match components x points");
}

std::span<double> Field::component(int c)
{
    if (c < 0 || c >= components_)
        throw std::out_of_range("Field: component index out of range");
    return {data_.data() + static_cast<std::size_t>(c) * points(), points()};
}

std::span<const double> Field::component(int c) const
{
    if (c < 0 || c >= components_)
        throw std::out_of_range("Field: component index out of range");
    return {data_.data() + static_cast<std::size_t>(c) * points(), points()};
}

Field Field::extract(int c) const
{
    auto src = component(c);
    return Field(domain_, 1, std::vector<double>(src.begin(), src.end()));
}

void Field::assign(int c, const Field& scalar)
{
    if (!scalar.is_scalar() || scalar.domain() != domain_)
        throw std::invalid_argument("Field::assign: expected a scalar field on the same domain");
    std::ranges::copy(scalar.data(), component(c).begin());
}

bool Field::all_finite() const
{
    return std::ranges::all_of(data_, [](double x) { return std::isfinite(x); });
}

void Field::require_finite(const char* where) const
{
    if (!all_finite())
        throw std::domain_error(std::string(where) + ": non-finite value in field");
}

void Field::check_compatible(const Field& rhs) const
{
    if (rhs.components_ != components_ || rhs.domain_ != domain_)
        throw std::invalid_argument("Field: incompatible operands");
}

Field& Field::operator+=(const Field& rhs)
{
    check_compatible(rhs);
    for (std::size_t i = 0; i < data_.size(); ++i)
        data_[i] += rhs.data_[i];
    return *this;
}

Field& Field::operator-=(const Field& rhs)
{
    check_compatible(rhs);
    for (std::size_t i = 0; i < data_.size(); ++i)
        data_[i] -= rhs.data_[i];
    return *this;
}

Field& Field::operator*=(double s)
{
    for (auto& x : data_)
        x *= s;
    return *this;
}

Field& Field::axpy(double s, const Field& rhs)
{
    check_compatible(rhs);
    for (std::size_t i = 0; i < data_.size(); ++i)
        data_[i] += s * rhs.data_[i];
    return *this;
}

Field operator+(Field lhs, const Field& rhs) { return lhs += rhs; }
Field operator-(Field lhs, const Field& rhs) { return lhs -= rhs; }
Field operator*(double s, Field f) { return f *= s; }

//---------------------------------------------------------------------------//
// Derivatives
//---------------------------------------------------------------------------//

namespace {

// Spectral symbol prod_a (i k_a)^alpha_a; odd derivatives drop the Nyquist mode.
std::complex<double> spectral_symbol(const Domain& d, std::span<const int> k,
                                     std::span<const int> alpha)
{
    std::complex<double> s{1.0, 0.0};
    for (int a = 0; a < d.dim(); ++a) {
        if (alpha[a] == 0)
            continue;
        const int n = d.shape()[a];
        if ((alpha[a] % 2) == 1 && std::abs(k[a]) * 2 == n)
            return {0.0, 0.0};
        const double kk = 2.0 * std::numbers::pi * k[a] / d.extent()[a];
        for (int p = 0; p < alpha[a]; ++p)
            s *= std::complex<double>(0.0, kk);
    }
    return s;
}

void spectral_derivative(std::span<const double> in, std::span<double> out, const Domain& d,
                         std::span<const int> alpha)
{
    auto hat = fft::forward(in, d.shape());
    fft::for_each_mode(d.shape(), [&](std::size_t i, std::span<const int> k) {
        hat[i] *= spectral_symbol(d, k, alpha);
    });
    fft::inverse(hat, d.shape(), out);
}

// One line of the box stencil along an axis.
void stencil_line(const double* f, double* out, int n, std::size_t stride, double h, int order)
{
    auto F = [&](int i) { return f[static_cast<std::size_t>(i) * stride]; };
    auto O = [&](int i) -> double& { return out[static_cast<std::size_t>(i) * stride]; };
    if (order == 1) {
        const double c2 = 1.0 / (2.0 * h), c4 = 1.0 / (12.0 * h);
        O(0) = (-3.0 * F(0) + 4.0 * F(1) - F(2)) * c2;
        O(n - 1) = (3.0 * F(n - 1) - 4.0 * F(n - 2) + F(n - 3)) * c2;
        O(1) = (F(2) - F(0)) * c2;
        O(n - 2) = (F(n - 1) - F(n - 3)) * c2;
        for (int i = 2; i < n - 2; ++i)
            O(i) = (F(i - 2) - 8.0 * F(i - 1) + 8.0 * F(i + 1) - F(i + 2)) * c4;
    } else {
        const double h2 = h * h;
        O(0) = (2.0 * F(0) - 5.0 * F(1) + 4.0 * F(2) - F(3)) / h2;
        O(n - 1) = (2.0 * F(n - 1) - 5.0 * F(n - 2) + 4.0 * F(n - 3) - F(n - 4)) / h2;
        O(1) = (F(0) - 2.0 * F(1) + F(2)) / h2;
        O(n - 2) = (F(n - 3) - 2.0 * F(n - 2) + F(n - 1)) / h2;
        for (int i = 2; i < n - 2; ++i)
            O(i) = (-F(i - 2) + 16.0 * F(i - 1) - 30.0 * F(i) + 16.0 * F(i + 1) - F(i + 2))
                / (12.0 * h2);
    }
}

void box_derivative(std::span<const double> in, std::span<double> out, const Domain& d, int axis,
                    int order)
{
    const int n = d.shape()[axis];
    const std::size_t stride = d.stride(axis);
    const std::size_t lines = d.size() / static_cast<std::size_t>(n);
    const double h = d.spacing(axis);
    const std::size_t block = stride * static_cast<std::size_t>(n);
#pragma omp parallel for num_threads(thread_budget()) schedule(static)
    for (std::ptrdiff_t line = 0; line < static_cast<std::ptrdiff_t>(lines); ++line) {
        const std::size_t outer = static_cast<std::size_t>(line) / stride;
        const std::size_t inner = static_cast<std::size_t>(line) % stride;
        const std::size_t base = outer * block + inner;
        stencil_line(in.data() + base, out.data() + base, n, stride, h, order);
    }
}

} // namespace

Field derivative(const Field& f, int axis, int order)
{
    const Domain& d = f.domain();
    if (axis < 0 || axis >= d.dim())
        throw std::out_of_range("derivative: axis out of range");
    if (order != 1 && order != 2)
        throw std::invalid_argument("derivative: order must be 1 or 2");
    Field out(d, f.components());
    for (int c = 0; c < f.components(); ++c) {
        if (d.is_torus()) {
            std::vector<int> alpha(d.dim(), 0);
            alpha[axis] = order;
            spectral_derivative(f.component(c), out.component(c), d, alpha);
        } else {
            box_derivative(f.component(c), out.component(c), d, axis, order);
        }
    }
    return out;
}

Field derivative(const Field& f, std::span<const int> alpha)
{
    const Domain& d = f.domain();
    if (static_cast<int>(alpha.size()) != d.dim())
        throw std::invalid_argument("derivative: multi-index has wrong length");
    if (d.is_torus()) {
        Field out(d, f.components());
        for (int c = 0; c < f.components(); ++c)
            spectral_derivative(f.component(c), out.component(c), d, alpha);
        return out;
    }
    Field out = f;
    for (int a = 0; a < d.dim(); ++a) {
        int remaining = alpha[a];
        while (remaining >= 2) {
            out = derivative(out, a, 2);
            remaining -= 2;
        }
        if (remaining == 1)
            out = derivative(out, a, 1);
    }
    return out;
}

Field divergence(const Field& v)
{
    const Domain& d = v.domain();
    if (v.components() != d.dim())
        throw std::invalid_argument("divergence: expected an n-vector field");
    Field out = Field::scalar(d);
    for (int j = 0; j < d.dim(); ++j)
        out += derivative(v.extract(j), j, 1);
    return out;
}

Field gradient(const Field& scalar)
{
    if (!scalar.is_scalar())
        throw std::invalid_argument("gradient: expected a scalar field");
    const Domain& d = scalar.domain();
    Field out = Field::vector(d);
    for (int j = 0; j < d.dim(); ++j)
        out.assign(j, derivative(scalar, j, 1));
    return out;
}

//---------------------------------------------------------------------------//
// Norms
//---------------------------------------------------------------------------//

std::vector<std::vector<int>> multi_indices_of_order(int n, int order)
{
    std::vector<std::vector<int>> out;
    std::vector<int> alpha(n, 0);
    // enumerate compositions of `order` into n parts, lexicographically descending
    auto rec = [&](auto&& self, int axis, int left) -> void {
        if (axis == n - 1) {
            alpha[axis] = left;
            out.push_back(alpha);
            return;
        }
        for (int p = left; p >= 0; --p) {
            alpha[axis] = p;
            self(self, axis + 1, left - p);
        }
    };
    rec(rec, 0, order);
    return out;
}

std::vector<std::vector<int>> multi_indices(int n, int m)
{
    std::vector<std::vector<int>> out;
    for (int order = 0; order <= m; ++order) {
        auto level = multi_indices_of_order(n, order);
        out.insert(out.end(), level.begin(), level.end());
    }
    return out;
}

namespace {

double l2_squared(std::span<const double> f, double dv)
{
    double s = 0.0;
    for (double x : f)
        s += x * x;
    return s * dv;
}

double hm_squared_torus(std::span<const double> f, const Domain& d, int m)
{
    const auto hat = fft::forward(f, d.shape());
    const auto alphas = multi_indices(d.dim(), m);
    const int n_last = d.shape().back();
    const double dv_over_n = d.cell_volume() / static_cast<double>(d.size());
    double total = 0.0;
    fft::for_each_mode(d.shape(), [&](std::size_t i, std::span<const int> k) {
        const int kl = k[d.dim() - 1];
        const double mult = (kl == 0 || 2 * kl == n_last) ? 1.0 : 2.0;
        double weight = 0.0;
        for (const auto& alpha : alphas)
            weight += std::norm(spectral_symbol(d, k, alpha));
        total += mult * weight * std::norm(hat[i]);
    });
    return total * dv_over_n;
}

double hm_squared_box(const Field& scalar, int m)
{
    double total = 0.0;
    for (const auto& alpha : multi_indices(scalar.domain().dim(), m))
        total += l2_squared(derivative(scalar, alpha).data(), scalar.domain().cell_volume());
    return total;
}

double component_norm(const Field& f, int c, Norm kind, double& squared)
{
    const Domain& d = f.domain();
    auto data = f.component(c);
    switch (kind.kind) {
    case NormKind::L2:
        squared = l2_squared(data, d.cell_volume());
        return std::sqrt(squared);
    case NormKind::Linf: {
        double mx = 0.0;
        for (double x : data)
            mx = std::max(mx, std::abs(x));
        return mx;
    }
    case NormKind::Hm:
        if (kind.m < 0 || kind.m > 4)
            throw std::invalid_argument("norm: Sobolev order must be in [0, 4]");
        squared = d.is_torus() ? hm_squared_torus(data, d, kind.m)
                               : hm_squared_box(f.extract(c), kind.m);
        return std::sqrt(squared);
    case NormKind::weighted_Linf: {
        if (d.is_torus())
            throw std::invalid_argument("norm: weighted sup norm requires a box domain");
        std::vector<double> x(d.dim());
        double mx = 0.0;
        for (std::size_t p = 0; p < d.size(); ++p) {
            d.point(p, x);
            double r2 = 0.0;
            for (double xi : x)
                r2 += xi * xi;
            mx = std::max(mx, (1.0 + std::pow(std::sqrt(r2), kind.q)) * std::abs(data[p]));
        }
        return mx;
    }
    }
    throw std::logic_error("norm: unhandled kind");
}

} // namespace

double norm(const Field& f, Norm kind)
{
    const bool sup = kind.kind == NormKind::Linf || kind.kind == NormKind::weighted_Linf;
    double acc = 0.0;
    for (int c = 0; c < f.components(); ++c) {
        double sq = 0.0;
        const double v = component_norm(f, c, kind, sq);
        acc = sup ? std::max(acc, v) : acc + sq;
    }
    return sup ? acc : std::sqrt(acc);
}

double max_component_norm(const Field& f, Norm kind)
{
    double mx = 0.0;
    for (int c = 0; c < f.components(); ++c) {
        double sq = 0.0;
        mx = std::max(mx, component_norm(f, c, kind, sq));
    }
    return mx;
}

} // namespace nslab
