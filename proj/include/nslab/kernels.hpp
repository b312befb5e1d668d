#pragma once

#include "nslab/grid.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace nslab {

/// Surface area of the unit sphere in R^n (2 pi for n = 2, 4 pi for n = 3).
double unit_sphere_area(int n);

/// Fundamental solution of the Laplacian: ln|x|/(2 pi) for n = 2,
/// |x|^(2-n)/((2-n) w_n) for n >= 3. Throws at x = 0.
double poisson_kernel(std::span<const double> x);

/// Gradient of the Poisson kernel, x_i / (w_n |x|^n).
void poisson_kernel_gradient(std::span<const double> x, std::span<double> grad);

/// Integral of a function homogeneous of degree `degree` (> -n) over the
/// grid cell [-h/2, h/2]^n centred at the origin, by pyramid decomposition
/// onto the cell faces.
double homogeneous_cell_integral(const std::function<double(std::span<const double>)>& f,
                                 std::span<const double> spacing, double degree);

/// A kernel with |K(x)| <= c |x|^(2-n) and |grad K(x)| <= c |x|^(1-n).
/// The value is homogeneous of degree 2-n (logarithmic for n = 2) and the
/// gradient of degree 1-n; singular grid cells use exact cell averages.
class EllipticKernel {
public:
    using Value = std::function<double(std::span<const double>)>;
    using Gradient = std::function<void(std::span<const double>, std::span<double>)>;

    static EllipticKernel poisson(int n);

    /// `value` must be homogeneous of degree 2-n (n >= 3) and `gradient` of
    /// degree 1-n; `bound_radius` is the radius up to which c is measured.
    EllipticKernel(int n, Value value, Gradient gradient, bool logarithmic = false,
                   double bound_radius = 8.0);

    int dim() const { return n_; }
    double evaluate(std::span<const double> x) const;
    void gradient(std::span<const double> x, std::span<double> grad) const;
    std::pair<int, int> singularity_orders() const { return {2 - n_, 1 - n_}; }
    /// Measured constant c of the growth bounds.
    double bound_constant() const { return bound_; }

    EllipticKernel scaled(double factor) const;

    /// Average of the kernel over the centred cell of the given spacing.
    double cell_average(std::span<const double> spacing) const;
    /// Average of the i-th gradient component over the centred cell.
    double cell_average_gradient(int i, std::span<const double> spacing) const;
    /// Average of |d_i K| over the centred cell.
    double cell_average_abs_gradient(int i, std::span<const double> spacing) const;

private:
    int n_ = 0;
    Value value_;
    Gradient gradient_;
    bool logarithmic_ = false;
    double bound_ = 0.0;
};

/// Heat semigroup exp(kappa tau Delta). Spectral multiplier on the torus;
/// truncated (8 sigma), mass-normalised sampled Gaussian with zero padding
/// on the box.
Field heat_convolve(const Field& f, double kappa, double tau);

/// Constant coupling data of the Leray term.
struct Couplings {
    Eigen::MatrixXd c; ///< n x n
    Eigen::VectorXd d; ///< length n, usually zero

    /// c_jk = 1 for all j, k: sum_jk v_k,j v_j,k, the Navier-Stokes term.
    static Couplings classical(int n)
    {
        return {Eigen::MatrixXd::Ones(n, n), Eigen::VectorXd::Zero(n)};
    }
};

/// Spatially varying couplings sampled on the grid (c_jk(x), d_j(x)).
struct CouplingFields {
    std::vector<std::vector<Field>> c; ///< c[j][k], scalar fields
    std::vector<Field> d;              ///< d[j], scalar fields (may be empty)
};

/// Component i = int d_i K(x - y) [sum_jk c_jk v_k,j v_j,k + sum_k d_k v_i,k](y) dy.
Field leray_source(const Field& v, const Couplings& couplings);
Field leray_source(const Field& v, const CouplingFields& couplings);
/// Same with an explicit kernel (box backend only uses the kernel).
Field leray_source(const Field& v, const Couplings& couplings, const EllipticKernel& kernel);

/// Component i = int d_i K(x - y) s_i(y) dy for per-component scalar
/// integrands s_i (Poisson kernel).
Field kernel_gradient_convolve(const std::vector<Field>& s);

/// p = -int K(x - y) sum_jk v_k,j v_j,k (y) dy, with zero mean on the torus.
Field recover_pressure(const Field& v);

/// Divergence-free part of v.
Field leray_project(const Field& v);

/// Zeroes torus Fourier modes with |k_a| >= shape_a / 3 on any axis.
/// No-op on the box.
Field dealias(const Field& f);

struct CKEstimate {
    double value = 0.0; ///< max over probe points and components
    double tail = 0.0;  ///< bound on the part of the integral outside the box
    std::vector<double> per_point;
};

/// max_i int |d_i K(x - y)| / (1 + |y|^n) dy over the box, at x = 0 and at
/// eight random points of the inner half of the box. The box is partitioned
/// into cells of the domain spacing aligned with x; cells with a vertex at x
/// use a pyramid (Duffy) map that removes the singularity, the rest tensor
/// Gauss rules.
CKEstimate estimate_CK(const Domain& box, const EllipticKernel& kernel, std::uint64_t seed = 7);

struct CsEstimate {
    double raw = 0.0;   ///< largest observed |u| / (|v| |w|)
    double value = 1.0; ///< max(raw, 1)
};

/// Empirical lower estimate of the weighted product constant C_s from
/// `trials` non-negative random pairs plus a centred spike pair.
CsEstimate estimate_Cs(int n, double s, int trials, std::uint64_t seed = 11, int points_per_axis = 32,
                       double half_width = 8.0);

/// |u| / (|v| |w|) for one pair on a box domain.
double weighted_product_ratio(const Field& v, const Field& w, double s);

} // namespace nslab
