#pragma once

#include "nslab/grid.hpp"
#include "nslab/hoermander.hpp"
#include "nslab/semigroup.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace nslab {

/// rho = 1 / (c_n (2 C_B C_G + C_K c_sum) 2 (C_prev + 1)).
double step_size_bound(double C_prev, double C_B, double C_G, double C_K, double c_sum, double c_n);

/// One time step [l-1, l] in local time s = tau - (l-1) in [0, 1]. Every
/// iterate and increment is kept at the sample nodes (both ends included).
struct LocalState {
    int l = 1;
    double rho = 0.0;
    double bound_rho = 0.0; ///< 0 when unknown
    Field data;
    std::vector<double> nodes;
    std::vector<std::vector<Field>> iterates;   ///< [k][node]; k = 0 holds the data
    std::vector<std::vector<Field>> increments; ///< [k][node]; slot 0 is empty
    std::vector<double> norms_h2;               ///< max over nodes, slot 0 unused
    std::vector<double> norms_h4;
    bool converged = false;

    int k() const { return static_cast<int>(iterates.size()) - 1; }
    const Field& solution() const { return iterates.back().back(); }
    const std::vector<Field>& trajectory() const { return iterates.back(); }
    /// max over nodes and k of |iterates[k] - data - sum increments| (Linf).
    double reconstruction_error() const;
};

/// 7 equispaced nodes unless `samples` says otherwise (>= 3).
LocalState make_local_state(int l, double rho, Field data, int samples = 7);

struct ContractionRecord {
    int l = 0;
    double rho = 0.0;
    double bound_rho = 0.0;
    int k_max = 0;
    bool converged = false;
    std::vector<double> increment_norms; ///< H2, k = 1..k_max
    std::vector<double> increment_norms_h4;
    std::vector<double> ratios; ///< k = 2..k_max
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

/// Operators of the local step equation
///   dv/dtau - rho L v = rho (-B-convection(v, v) + Leray(v)),
/// integrated with the Duhamel formula over the sample nodes.
class LocalSolver {
public:
    LocalSolver(const HormanderSystem& sys, const Domain& domain, Backend backend, int gauss_points = 4);

    const HormanderSystem& system() const { return sys_; }
    const Domain& domain() const { return domain_; }
    const Semigroup& semigroup() const { return semigroup_; }

    /// -sum_j B_j v_j d_j v + Leray term of v. On the torus with the classical
    /// system the result is dealiased and projected onto divergence-free fields.
    Field nonlinear_source(const Field& v) const;
    /// The increment source, linear in delta for fixed (v_prev, v_cur):
    /// -(B v_prev . grad) delta - (B delta . grad) v_cur
    /// + grad K * [sum_jm d_m delta_j (c_jm d_j v_cur_m + c_mj d_j v_prev_m) + sum_m d_m d_m delta_i].
    Field increment_source(const Field& v_prev, const Field& v_cur, const Field& delta) const;

    /// S(rho s_i) f at every node.
    std::vector<Field> propagate(const Field& f, double rho, const std::vector<double>& nodes) const;
    /// w(s_i) for w' = rho L w + rho g(s), w(0) = 0, with g the Lagrange
    /// interpolant of `g` through the nodes (a single entry means frozen).
    std::vector<Field> duhamel(const std::vector<Field>& g, double rho, const std::vector<double>& nodes) const;

    /// The left-minus-right defect of the local equation at each interior
    /// sample, tau-derivatives from the Lagrange interpolant; max L2 norm.
    double momentum_residual(const std::vector<Field>& samples, const std::vector<double>& nodes,
                             double rho) const;

private:
    Field finish_source(Field s) const;

    HormanderSystem sys_;
    Domain domain_;
    Backend backend_;
    Semigroup semigroup_;
    int gauss_points_;
    bool constant_couplings_;
    Couplings couplings_;
    CouplingFields coupling_fields_;
    bool project_;
};

/// Computes v^1 and delta v^1 at every node; resets later iterates.
Field first_iterate(const LocalSolver& solver, LocalState& state);
/// Computes delta v^{k+1} from (v^{k-1}, v^k, delta v^k); requires state.k() == k >= 1.
Field increment_step(const LocalSolver& solver, LocalState& state, int k);
/// first_iterate then increments until |delta v^k|_{H2} < tol or k = kmax.
/// Throws std::domain_error (message carries the record) on NaN.
ContractionRecord iterate_to_tolerance(const LocalSolver& solver, LocalState& state, double tol, int kmax);

double momentum_residual(const LocalSolver& solver, const std::vector<Field>& samples,
                         const std::vector<double>& nodes, double rho);

} // namespace nslab
