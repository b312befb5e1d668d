#pragma once

#include "nslab/grid.hpp"
#include "nslab/hoermander.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nslab {

enum class Backend { spectral, fd_substep };

std::string to_string(Backend b);
Backend backend_from_string(const std::string& s);

/// exp(t L) with L = (1/2) sum_j V_j^2 + V_0 on a fixed grid.
///
/// spectral: heat multiplier with kappa = nu (heat systems only).
/// fd_substep: explicit RK4 sub-steps of L u = (1/2) sum_j V_j (V_j u) + V_0 u
/// with spectral derivatives on the torus and fourth-order centred stencils
/// with zero ghost layers on the box. The sub-step obeys dt * lambda <= 2
/// where lambda bounds the spectral radius of the discrete operator.
class Semigroup {
public:
    Semigroup(const HormanderSystem& sys, const Domain& domain, Backend backend);

    Backend backend() const { return backend_; }
    const Domain& domain() const { return domain_; }
    const HormanderSystem& system() const { return sys_; }

    /// L f with the fd discretization (both backends).
    Field generator(const Field& f) const;
    Field apply(const Field& f, double t) const;
    /// Solves u' = rate L u + forcing(s) on [0, duration] from u(0) = u0.
    Field evolve(const Field& u0, double duration, double rate,
                 const std::function<Field(double)>& forcing) const;

    /// Largest stable sub-step for rate 1.
    double max_substep() const { return 2.0 / lambda_; }
    int substeps(double t) const;

private:
    struct Coef {
        bool zero = true;
        bool constant = true;
        double value = 0.0;
        Field field;
    };

    Field directional(const std::vector<Coef>& v, const Field& u) const;
    Field rk4(const Field& u, double dt, double rate, const std::function<Field(double)>* forcing,
              double s) const;

    HormanderSystem sys_;
    Domain domain_;
    Backend backend_;
    std::vector<std::vector<Coef>> coef_; // coef_[j][a] = v_{a j}
    double lambda_ = 1.0;
};

Field apply_semigroup(const HormanderSystem& sys, const Field& f, double tau, Backend backend);

//---------------------------------------------------------------------------//
// Monte Carlo
//---------------------------------------------------------------------------//

struct SampleSet {
    std::vector<double> x0;
    double tau = 0.0;
    Eigen::MatrixXd points; ///< N x n
};

/// Endpoints of the Euler-Maruyama chain of
/// dX = (V_0 + (1/2) sum_j (DV_j) V_j) dt + sum_j V_j dW_j,
/// whose generator is L. Sample i draws its noise from the counter stream
/// (seed, i), so results do not depend on the thread budget.
SampleSet euler_maruyama_sample(const HormanderSystem& sys, const std::vector<double>& x0, double tau,
                                int steps, int N, std::uint64_t seed);

struct DensityEstimate {
    std::vector<double> x0;
    double tau = 0.0;
    std::vector<double> origin; ///< physical point = origin + grid coordinate
    Field density;
    std::size_t N = 0;
    std::vector<double> bandwidth;
    double noise_floor = 0.0; ///< peak height of a single kernel / N

    double mass() const;
    DensityEstimate scaled(double factor) const;
};

/// Gaussian KDE evaluated on `grid` (a box) shifted by `origin`. Without a
/// bandwidth the per-axis rule N^(-1/(n+4)) * std is used.
DensityEstimate estimate_density(const SampleSet& samples, const Domain& grid,
                                 std::optional<double> bandwidth = std::nullopt,
                                 std::vector<double> origin = {});

struct KSEnvelope {
    double A = 0.0;
    double B = 0.0;
    double m_exp = 0.0;
    double n_exp = 0.0;
    int j = 0;
    int alpha = 0;
    double residual = 0.0;
    std::size_t points_used = 0;
};

/// Least-squares fit of log p = log A + m log(1 + |x0|) - n log t - B |x0 - y|^2 / t
/// over density values above 10x the noise floor.
KSEnvelope fit_envelope(const std::vector<DensityEstimate>& densities);

struct EnvelopeProbe {
    int steps = 256;
    int grid_points = 64;  ///< per axis
    double grid_sigmas = 5.0;
};

/// Samples, estimates and fits over every (tau, base point) pair.
KSEnvelope fit_ks_envelope(const HormanderSystem& sys, const std::vector<double>& taus,
                           const std::vector<std::vector<double>>& base_points, int N, std::uint64_t seed,
                           const EnvelopeProbe& probe = {});

/// Closed-form transition density of the Kolmogorov diffusion
/// dX = dW, dY = X dt (kolmogorov built-in with nu = 1/2).
double kolmogorov_density(double t, std::span<const double> x0, std::span<const double> y);

} // namespace nslab
