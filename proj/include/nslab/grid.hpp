#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nslab {

enum class DomainKind { torus, box };

std::string to_string(DomainKind kind);
DomainKind domain_kind_from_string(const std::string& name);

/// Uniform tensor grid on either a periodic torus [0, L_i) or a box
/// [-a_i, a_i] sampled at cell centres.
class Domain {
public:
    Domain() = default;

    /// `period[i]` is the length of axis i; every shape entry must be a power of two >= 8.
    static Domain torus(std::vector<int> shape, std::vector<double> period);
    /// `half_width[i]` is a_i; the box is [-a_i, a_i].
    static Domain box(std::vector<int> shape, std::vector<double> half_width);

    DomainKind kind() const { return kind_; }
    bool is_torus() const { return kind_ == DomainKind::torus; }
    int dim() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    const std::vector<double>& extent() const { return extent_; }
    double spacing(int axis) const { return spacing_.at(axis); }
    const std::vector<double>& spacing() const { return spacing_; }
    std::size_t size() const { return size_; }
    /// Volume element h_1 * ... * h_n.
    double cell_volume() const;

    /// Coordinate of grid index `i` along `axis`.
    double coord(int axis, int i) const;
    /// Row-major stride of `axis` (last axis is contiguous).
    std::size_t stride(int axis) const { return strides_.at(axis); }
    /// Multi-index of a flat index.
    void unravel(std::size_t flat, std::span<int> index) const;
    /// Point coordinates of a flat index.
    void point(std::size_t flat, std::span<double> x) const;

    bool operator==(const Domain& other) const;
    bool operator!=(const Domain& other) const { return !(*this == other); }

private:
    Domain(DomainKind kind, std::vector<int> shape, std::vector<double> extent);

    DomainKind kind_ = DomainKind::torus;
    std::vector<int> shape_;
    std::vector<double> extent_;
    std::vector<double> spacing_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

/// Scalar (1 component) or vector (n components) samples on a Domain.
/// Components are stored as consecutive row-major blocks.
class Field {
public:
    Field() = default;
    Field(Domain domain, int components);
    Field(Domain domain, int components, std::vector<double> data);

    static Field scalar(const Domain& domain) { return Field(domain, 1); }
    static Field vector(const Domain& domain) { return Field(domain, domain.dim()); }

    const Domain& domain() const { return domain_; }
    int components() const { return components_; }
    bool is_scalar() const { return components_ == 1; }
    std::size_t points() const { return domain_.size(); }

    std::span<double> component(int c);
    std::span<const double> component(int c) const;
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    /// Copy of one component as a scalar field.
    Field extract(int c) const;
    void assign(int c, const Field& scalar);

    bool all_finite() const;
    /// Throws std::domain_error when a NaN or Inf is present.
    void require_finite(const char* where) const;

    Field& operator+=(const Field& rhs);
    Field& operator-=(const Field& rhs);
    Field& operator*=(double s);
    /// this += s * rhs
    Field& axpy(double s, const Field& rhs);

    /// Throws std::invalid_argument unless grids and component counts match.
    void check_compatible(const Field& rhs) const;

private:

    Domain domain_;
    int components_ = 0;
    std::vector<double> data_;
};

Field operator+(Field lhs, const Field& rhs);
Field operator-(Field lhs, const Field& rhs);
Field operator*(double s, Field f);

/// Fills a field from a callable f(x, component).
template <class Fn>
Field sample(const Domain& domain, int components, Fn&& fn)
{
    Field out(domain, components);
    std::vector<double> x(domain.dim());
    for (int c = 0; c < components; ++c) {
        auto dst = out.component(c);
        for (std::size_t p = 0; p < domain.size(); ++p) {
            domain.point(p, x);
            dst[p] = fn(std::span<const double>(x), c);
        }
    }
    return out;
}

//---------------------------------------------------------------------------//
// Differential operators and norms
//---------------------------------------------------------------------------//

/// d/dx_axis (order 1) or d^2/dx_axis^2 (order 2), applied per component.
/// Spectral on the torus; fourth-order centred stencil on the box interior
/// with second-order stencils in the two outermost layers.
Field derivative(const Field& f, int axis, int order);

/// Mixed derivative D^alpha, alpha a multi-index with one entry per axis.
Field derivative(const Field& f, std::span<const int> alpha);

Field divergence(const Field& v);
Field gradient(const Field& scalar);

enum class NormKind { L2, Linf, Hm, weighted_Linf };

struct Norm {
    NormKind kind = NormKind::L2;
    int m = 0;      // Sobolev order for Hm
    double q = 0.0; // weight exponent for weighted_Linf

    static Norm l2() { return {NormKind::L2, 0, 0.0}; }
    static Norm linf() { return {NormKind::Linf, 0, 0.0}; }
    static Norm hm(int m) { return {NormKind::Hm, m, 0.0}; }
    static Norm weighted_linf(double q) { return {NormKind::weighted_Linf, 0, q}; }
};

/// Norm over all components (Euclidean combination for integral norms,
/// maximum for sup norms).
double norm(const Field& f, Norm kind);

/// max_i |f_i| in the given norm (the per-component maximum).
double max_component_norm(const Field& f, Norm kind);

/// All multi-indices alpha of length n with |alpha| <= m, in graded order.
std::vector<std::vector<int>> multi_indices(int n, int m);

/// Multi-indices with |alpha| == order exactly.
std::vector<std::vector<int>> multi_indices_of_order(int n, int order);

} // namespace nslab
