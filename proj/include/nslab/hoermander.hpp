#pragma once

#include "nslab/grid.hpp"
#include "nslab/kernels.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nslab {

/// Highest derivative order any coefficient has to supply.
inline constexpr int derivative_budget = 4;

struct Monomial {
    std::vector<int> exp;
    double coef = 0.0;
};

/// Scalar coefficient with analytic partial derivatives up to order 4,
/// either a polynomial table or a closed-form evaluator f(x, alpha).
class ScalarFunction {
public:
    using Evaluator = std::function<double(std::span<const double>, std::span<const int>)>;

    ScalarFunction() = default;
    static ScalarFunction constant(int n, double value);
    static ScalarFunction polynomial(int n, std::vector<Monomial> terms);
    static ScalarFunction closed_form(int n, Evaluator eval);

    int dim() const { return n_; }
    double operator()(std::span<const double> x) const;
    double derivative(std::span<const double> x, std::span<const int> alpha) const;

    bool is_polynomial() const { return !eval_; }
    /// True for polynomials without non-constant terms.
    bool is_constant() const;
    const std::vector<Monomial>& terms() const { return terms_; }

    ScalarFunction scaled(double factor) const;

private:
    int n_ = 0;
    std::vector<Monomial> terms_;
    Evaluator eval_;
};

/// Coefficients v_j(x), j = 1..n, of a vector field sum_j v_j d/dx_j.
using VectorField = std::vector<ScalarFunction>;

VectorField constant_field(std::vector<double> values);

/// Generators V_0 (drift) .. V_m (diffusion), the convection weights B_j,
/// couplings c_jk, d_j and the viscosity nu.
class HormanderSystem {
public:
    HormanderSystem(int n, std::vector<VectorField> fields, VectorField B,
                    std::vector<std::vector<ScalarFunction>> c, VectorField d, double nu,
                    std::string name = "custom");

    /// laplacian (any n), classical (any n), heisenberg (n = 3), kolmogorov
    /// (n = 2), grushin (n = 2). Diffusion fields carry the factor sqrt(2 nu).
    /// n = 0 picks the natural dimension (2 for laplacian).
    static HormanderSystem builtin(const std::string& name, int n = 0, double nu = 0.5);
    /// Classical Navier-Stokes specialization: V_i = sqrt(2 nu) e_i, V_0 = 0,
    /// B = 1, c_jk = 1, d = 0.
    static HormanderSystem classical(int n, double nu);

    int dim() const { return n_; }
    int diffusion_count() const { return static_cast<int>(fields_.size()) - 1; }
    const std::string& name() const { return name_; }
    double nu() const { return nu_; }
    const std::vector<VectorField>& fields() const { return fields_; }
    const VectorField& field(int i) const { return fields_.at(i); }
    const VectorField& B() const { return B_; }
    const std::vector<std::vector<ScalarFunction>>& c() const { return c_; }
    const VectorField& d() const { return d_; }

    /// Constant diffusion fields with (1/2) sum_j V_j V_j^T = nu I and V_0 = 0.
    bool is_heat() const;
    /// is_heat with B = 1, c_jk = 1 and d = 0.
    bool is_classical() const;
    /// True when c and d are constant.
    bool has_constant_couplings() const;
    Couplings constant_couplings() const;
    CouplingFields sample_couplings(const Domain& domain) const;
    double coupling_sum() const;

    /// Checks finiteness and analytic derivatives against central differences
    /// at `points` random points of [-2, 2]^n. Throws on mismatch.
    void validate(int points = 100, std::uint64_t seed = 1) const;

private:
    int n_;
    std::vector<VectorField> fields_;
    VectorField B_;
    std::vector<std::vector<ScalarFunction>> c_;
    VectorField d_;
    double nu_;
    std::string name_;
};

/// Parses a system definition (JSON text). Throws std::runtime_error with a
/// field path on malformed input.
HormanderSystem parse_system(const std::string& text);
HormanderSystem load_system(const std::string& path);

//---------------------------------------------------------------------------//
// Brackets
//---------------------------------------------------------------------------//

class BracketNode {
public:
    static BracketNode generator(int index);

    int depth() const;
    bool is_generator() const { return !left_; }
    int index() const { return index_; }
    std::string str() const;

    /// Coefficient vector of the field at x.
    std::vector<double> evaluate(const HormanderSystem& sys, std::span<const double> x) const;

    /// Coefficients and all partial derivatives up to `order` at x, laid out
    /// as jet[j * stride + flat(alpha)] with flat() base (order + 1).
    std::vector<double> jet(const HormanderSystem& sys, std::span<const double> x, int order) const;

    friend BracketNode lie_bracket(const BracketNode& V, const BracketNode& W);

private:
    int index_ = -1;
    std::shared_ptr<const BracketNode> left_, right_;
};

/// [V, W]; throws std::invalid_argument beyond the derivative budget.
BracketNode lie_bracket(const BracketNode& V, const BracketNode& W);

struct RankResult {
    int rank = 0;
    int depth = 0; ///< first depth with full rank, max_depth + 1 if never
    std::vector<BracketNode> basis;
};

RankResult hormander_rank(const HormanderSystem& sys, std::span<const double> x, int max_depth);

struct ConditionReport {
    bool pass = true;
    int points = 0;
    int worst_rank = 0;
    int max_depth_used = 0;
    std::vector<int> depth_histogram; ///< index depth, last slot = failures
    std::vector<std::vector<double>> witnesses;
};

/// Quasi-random (Halton) samples in the domain, all corners and the centre.
ConditionReport check_condition(const HormanderSystem& sys, const Domain& domain, int samples,
                                int max_depth);

//---------------------------------------------------------------------------//
// Grid operations
//---------------------------------------------------------------------------//

Field sample_function(const ScalarFunction& f, const Domain& domain);

/// sum_j B_j v_j d(target)/dx_j, per target component.
Field convection_apply(const HormanderSystem& sys, const Field& v, const Field& target);

struct CBEstimate {
    double C_B = 0.0;
    Eigen::MatrixXd C_ij;
};

/// sum_{|alpha| <= m} max_i sup |D^alpha B_i| over grid points, and the same
/// sums per coupling c_ij.
CBEstimate estimate_CB(const HormanderSystem& sys, const Domain& domain, int m_order);

} // namespace nslab
