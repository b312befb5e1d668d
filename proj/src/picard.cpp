#include "nslab/picard.hpp"

#include "nslab/kernels.hpp"
#include "nslab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nslab {

double step_size_bound(double C_prev, double C_B, double C_G, double C_K, double c_sum, double c_n)
{
    for (double v : {C_prev, C_B, C_G, C_K, c_sum, c_n})
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("step_size_bound: all constants must be positive and finite");
    return 1.0 / (c_n * (2.0 * C_B * C_G + C_K * c_sum) * 2.0 * (C_prev + 1.0));
}

double LocalState::reconstruction_error() const
{
    double worst = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        Field acc = data;
        for (std::size_t k = 1; k < iterates.size(); ++k) {
            acc += increments[k][i];
            const auto& a = acc.data();
            const auto& b = iterates[k][i].data();
            for (std::size_t p = 0; p < a.size(); ++p)
                worst = std::max(worst, std::abs(a[p] - b[p]));
        }
    }
    return worst;
}

LocalState make_local_state(int l, double rho, Field data, int samples)
{
    if (l < 1)
        throw std::invalid_argument("LocalState: step index must be >= 1");
    if (!(rho > 0.0))
        throw std::invalid_argument("LocalState: rho must be positive");
    if (samples < 3)
        throw std::invalid_argument("LocalState: need at least 3 samples per step");
    data.require_finite("LocalState data");
    LocalState s;
    s.l = l;
    s.rho = rho;
    s.data = std::move(data);
    for (int i = 0; i < samples; ++i)
        s.nodes.push_back(static_cast<double>(i) / (samples - 1));
    return s;
}

nlohmann::json ContractionRecord::to_json() const
{
    return {{"l", l},
            {"rho", rho},
            {"bound_rho", bound_rho},
            {"k_max", k_max},
            {"converged", converged},
            {"increment_norms", increment_norms},
            {"increment_norms_h4", increment_norms_h4},
            {"ratios", ratios},
            {"warnings", warnings}};
}

//---------------------------------------------------------------------------//

LocalSolver::LocalSolver(const HormanderSystem& sys, const Domain& domain, Backend backend, int gauss_points)
    : sys_(sys),
      domain_(domain),
      backend_(backend),
      semigroup_(sys, domain, backend),
      gauss_points_(gauss_points),
      constant_couplings_(sys.has_constant_couplings()),
      project_(domain.is_torus() && sys.is_classical())
{
    if (gauss_points < 1)
        throw std::invalid_argument("LocalSolver: need at least one Gauss point");
    if (constant_couplings_)
        couplings_ = sys.constant_couplings();
    else
        coupling_fields_ = sys.sample_couplings(domain);
}

Field LocalSolver::finish_source(Field s) const
{
    if (!domain_.is_torus())
        return s;
    s = dealias(s);
    return project_ ? leray_project(s) : s;
}

Field LocalSolver::nonlinear_source(const Field& v) const
{
    Field s = constant_couplings_ ? leray_source(v, couplings_) : leray_source(v, coupling_fields_);
    s -= convection_apply(sys_, v, v);
    return finish_source(std::move(s));
}

Field LocalSolver::increment_source(const Field& v_prev, const Field& v_cur, const Field& delta) const
{
    const int n = domain_.dim();
    const std::size_t P = domain_.size();
    auto c_at = [&](int j, int m, std::size_t p) {
        return constant_couplings_ ? couplings_.c(j, m) : coupling_fields_.c[j][m].data()[p];
    };
    auto d_at = [&](int m, std::size_t p) {
        if (constant_couplings_)
            return couplings_.d(m);
        return coupling_fields_.d.empty() ? 0.0 : coupling_fields_.d[m].data()[p];
    };
    // grad[m][j] = d_j (.)_m
    auto gradient_of = [&](const Field& v) {
        std::vector<std::vector<Field>> g(n);
        for (int m = 0; m < n; ++m) {
            const Field vm = v.extract(m);
            for (int j = 0; j < n; ++j)
                g[m].push_back(derivative(vm, j, 1));
        }
        return g;
    };
    const auto gd = gradient_of(delta), gc = gradient_of(v_cur), gp = gradient_of(v_prev);

    Field base = Field::scalar(domain_);
    auto b = base.component(0);
    for (int j = 0; j < n; ++j)
        for (int m = 0; m < n; ++m) {
            const auto dmj = gd[j][m].component(0); // d_m delta_j
            const auto cur = gc[m][j].component(0); // d_j v_cur_m
            const auto prev = gp[m][j].component(0);
            for (std::size_t p = 0; p < P; ++p)
                b[p] += dmj[p] * (c_at(j, m, p) * cur[p] + c_at(m, j, p) * prev[p]);
        }
    std::vector<Field> s(n, base);
    bool has_d = !constant_couplings_ ? !coupling_fields_.d.empty() : couplings_.d.cwiseAbs().maxCoeff() != 0.0;
    if (has_d)
        for (int i = 0; i < n; ++i) {
            auto si = s[i].component(0);
            for (int m = 0; m < n; ++m) {
                const auto dim = gd[i][m].component(0);
                for (std::size_t p = 0; p < P; ++p)
                    si[p] += d_at(m, p) * dim[p];
            }
        }
    Field out = kernel_gradient_convolve(s);
    out -= convection_apply(sys_, v_prev, delta);
    out -= convection_apply(sys_, delta, v_cur);
    return finish_source(std::move(out));
}

std::vector<Field> LocalSolver::propagate(const Field& f, double rho, const std::vector<double>& nodes) const
{
    std::vector<Field> out{f};
    for (std::size_t i = 1; i < nodes.size(); ++i)
        out.push_back(semigroup_.apply(out.back(), rho * (nodes[i] - nodes[i - 1])));
    return out;
}

std::vector<Field> LocalSolver::duhamel(const std::vector<Field>& g, double rho,
                                        const std::vector<double>& nodes) const
{
    if (g.size() != 1 && g.size() != nodes.size())
        throw std::invalid_argument("duhamel: sources must be frozen or given at every node");
    auto source_at = [&](double s) {
        if (g.size() == 1) {
            Field out = g[0];
            out *= rho;
            return out;
        }
        const auto w = lagrange_weights(nodes, s);
        Field out(g[0].domain(), g[0].components());
        for (std::size_t j = 0; j < g.size(); ++j)
            out.axpy(rho * w[j], g[j]);
        return out;
    };
    std::vector<Field> w{Field(g[0].domain(), g[0].components())};
    const auto rule = gauss_legendre(gauss_points_);
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        const double a = nodes[i - 1], b = nodes[i], h = b - a;
        if (backend_ == Backend::fd_substep) {
            w.push_back(semigroup_.evolve(w.back(), h, rho, [&](double s) { return source_at(a + s); }));
            continue;
        }
        Field next = semigroup_.apply(w.back(), rho * h);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double s = a + 0.5 * h * (rule.nodes[q] + 1.0);
            next.axpy(0.5 * h * rule.weights[q], semigroup_.apply(source_at(s), rho * (b - s)));
        }
        w.push_back(std::move(next));
    }
    return w;
}

double LocalSolver::momentum_residual(const std::vector<Field>& samples, const std::vector<double>& nodes,
                                      double rho) const
{
    const std::size_t N = samples.size();
    if (N < 3 || nodes.size() != N)
        throw std::invalid_argument("momentum_residual: need at least 3 time samples with matching nodes");
    // barycentric differentiation matrix rows
    std::vector<double> bw(N, 1.0);
    for (std::size_t j = 0; j < N; ++j)
        for (std::size_t k = 0; k < N; ++k)
            if (k != j)
                bw[j] /= nodes[j] - nodes[k];
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < N; ++i) {
        Field defect(samples[i].domain(), samples[i].components());
        double diag = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i)
                continue;
            const double Dij = bw[j] / bw[i] / (nodes[i] - nodes[j]);
            diag -= Dij;
            defect.axpy(Dij, samples[j]);
        }
        defect.axpy(diag, samples[i]);
        Field rhs = semigroup_.generator(samples[i]);
        rhs += nonlinear_source(samples[i]);
        defect.axpy(-rho, rhs);
        worst = std::max(worst, norm(defect, Norm::l2()));
    }
    return worst;
}

//---------------------------------------------------------------------------//

namespace {

void record_norms(LocalState& state, const std::vector<Field>& inc)
{
    double h2 = 0.0, h4 = 0.0;
    for (const auto& f : inc) {
        h2 = std::max(h2, norm(f, Norm::hm(2)));
        h4 = std::max(h4, norm(f, Norm::hm(4)));
    }
    state.norms_h2.push_back(h2);
    state.norms_h4.push_back(h4);
}

} // namespace

Field first_iterate(const LocalSolver& solver, LocalState& state)
{
    if (state.data.domain() != solver.domain())
        throw std::invalid_argument("first_iterate: data lives on a different grid");
    const Field g = solver.nonlinear_source(state.data);
    auto v1 = solver.propagate(state.data, state.rho, state.nodes);
    const auto w = solver.duhamel({g}, state.rho, state.nodes);
    std::vector<Field> d1;
    for (std::size_t i = 0; i < v1.size(); ++i) {
        v1[i] += w[i];
        d1.push_back(v1[i] - state.data);
    }
    state.iterates.assign(1, std::vector<Field>(state.nodes.size(), state.data));
    state.increments.assign(1, {});
    state.norms_h2.assign(1, 0.0);
    state.norms_h4.assign(1, 0.0);
    state.iterates.push_back(std::move(v1));
    record_norms(state, d1);
    state.increments.push_back(std::move(d1));
    state.converged = false;
    return state.solution();
}

Field increment_step(const LocalSolver& solver, LocalState& state, int k)
{
    if (k < 1 || state.k() != k || static_cast<int>(state.increments.size()) <= k)
        throw std::invalid_argument("increment_step: increment " + std::to_string(k) + " is not available");
    const auto& prev = state.iterates[k - 1];
    const auto& cur = state.iterates[k];
    const auto& delta = state.increments[k];
    std::vector<Field> g;
    for (std::size_t i = 0; i < state.nodes.size(); ++i)
        g.push_back(solver.increment_source(prev[i], cur[i], delta[i]));
    auto next = solver.duhamel(g, state.rho, state.nodes);
    std::vector<Field> it;
    for (std::size_t i = 0; i < next.size(); ++i)
        it.push_back(cur[i] + next[i]);
    state.iterates.push_back(std::move(it));
    record_norms(state, next);
    state.increments.push_back(std::move(next));
    return state.solution();
}

ContractionRecord iterate_to_tolerance(const LocalSolver& solver, LocalState& state, double tol, int kmax)
{
    if (!(tol > 0.0))
        throw std::invalid_argument("iterate_to_tolerance: tol must be positive");
    if (kmax < 1)
        throw std::invalid_argument("iterate_to_tolerance: kmax must be >= 1");
    ContractionRecord rec;
    rec.l = state.l;
    rec.rho = state.rho;
    rec.bound_rho = state.bound_rho;

    auto fill = [&]() {
        rec.k_max = state.k();
        rec.increment_norms.assign(state.norms_h2.begin() + 1, state.norms_h2.end());
        rec.increment_norms_h4.assign(state.norms_h4.begin() + 1, state.norms_h4.end());
        rec.ratios.clear();
        for (std::size_t k = 1; k < rec.increment_norms.size(); ++k)
            rec.ratios.push_back(rec.increment_norms[k - 1] > 0.0
                                     ? rec.increment_norms[k] / rec.increment_norms[k - 1]
                                     : 0.0);
    };
    auto check = [&]() {
        for (const auto& f : state.iterates.back())
            if (!f.all_finite()) {
                fill();
                rec.warnings.push_back("nan");
                throw std::domain_error("Picard iteration produced a non-finite iterate at step " +
                                        std::to_string(state.l) + ": " + rec.to_json().dump());
            }
    };

    first_iterate(solver, state);
    check();
    while (true) {
        if (state.norms_h2.back() < tol) {
            state.converged = true;
            break;
        }
        if (state.k() >= kmax)
            break;
        increment_step(solver, state, state.k());
        check();
    }
    fill();
    if (state.bound_rho > 0.0 && state.rho > state.bound_rho * (1.0 + 1e-12))
        rec.warnings.push_back("rho_exceeds_bound");
    if (std::any_of(rec.ratios.begin(), rec.ratios.end(), [](double r) { return r >= 1.0; }))
        rec.warnings.push_back("non_contraction");
    if (!state.converged)
        rec.warnings.push_back("not_converged");
    rec.converged = state.converged;
    return rec;
}

double momentum_residual(const LocalSolver& solver, const std::vector<Field>& samples,
                         const std::vector<double>& nodes, double rho)
{
    return solver.momentum_residual(samples, nodes, rho);
}

} // namespace nslab
