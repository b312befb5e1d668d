#include "nslab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nslab {

nlohmann::json DensityCheck::to_json() const
{
    return {{"oracle", oracle}, {"sup_rel_error", sup_rel_error}, {"points", points}, {"region", region}};
}

namespace {

template <class Exact, class Inside>
DensityCheck compare(const DensityEstimate& est, Exact exact, Inside inside)
{
    DensityCheck c;
    const Domain& g = est.density.domain();
    std::vector<double> y(g.dim());
    const auto p = est.density.component(0);
    for (std::size_t k = 0; k < g.size(); ++k) {
        g.point(k, y);
        for (int a = 0; a < g.dim(); ++a)
            y[a] += est.origin[a];
        if (!inside(y))
            continue;
        const double e = exact(y);
        c.sup_rel_error = std::max(c.sup_rel_error, std::abs(p[k] - e) / e);
        ++c.points;
    }
    if (c.points == 0)
        throw std::invalid_argument("density check: no grid point inside the region");
    return c;
}

} // namespace

DensityCheck gaussian_density_check(const DensityEstimate& est, double variance, double sigmas)
{
    if (!(variance > 0.0) || !(sigmas > 0.0))
        throw std::invalid_argument("gaussian_density_check: variance and radius must be positive");
    const int n = est.density.domain().dim();
    const double norm = std::pow(2.0 * std::numbers::pi * variance, -0.5 * n);
    auto r2 = [&](const std::vector<double>& y) {
        double s = 0.0;
        for (int a = 0; a < n; ++a)
            s += (y[a] - est.x0[a]) * (y[a] - est.x0[a]);
        return s;
    };
    auto c = compare(
        est, [&](const std::vector<double>& y) { return norm * std::exp(-0.5 * r2(y) / variance); },
        [&](const std::vector<double>& y) { return r2(y) <= sigmas * sigmas * variance; });
    c.oracle = "gaussian";
    c.region = sigmas;
    return c;
}

DensityCheck kolmogorov_density_check(const DensityEstimate& est, double mahalanobis)
{
    if (est.density.domain().dim() != 2)
        throw std::invalid_argument("kolmogorov_density_check: needs n = 2");
    const double t = est.tau;
    const double a = t, b = t * t / 2.0, c3 = t * t * t / 3.0, det = a * c3 - b * b;
    auto q = [&](const std::vector<double>& y) {
        const double d0 = y[0] - est.x0[0], d1 = y[1] - est.x0[1] - est.x0[0] * t;
        return (c3 * d0 * d0 - 2.0 * b * d0 * d1 + a * d1 * d1) / det;
    };
    auto c = compare(
        est, [&](const std::vector<double>& y) { return kolmogorov_density(t, est.x0, y); },
        [&](const std::vector<double>& y) { return q(y) <= mahalanobis * mahalanobis; });
    c.oracle = "kolmogorov";
    c.region = mahalanobis;
    return c;
}

//---------------------------------------------------------------------------//

namespace {

IncrementDecay fit_one(int k, const Field& f, const std::vector<int>& orders)
{
    IncrementDecay d;
    d.k = k;
    if (norm(f, Norm::linf()) == 0.0) {
        d.zero = true;
        return d;
    }
    try {
        d.fit = decay_order(f, orders);
    } catch (const std::runtime_error& e) {
        d.error = e.what();
    }
    return d;
}

nlohmann::json to_json(const IncrementDecay& d)
{
    nlohmann::json j{{"k", d.k}, {"zero", d.zero}};
    if (d.fit) {
        j["q_hat"] = d.fit->q_hat;
        j["saturated"] = d.fit->saturated;
        j["r2"] = d.fit->r2;
        j["shells"] = d.fit->radii.size();
    }
    if (!d.error.empty())
        j["error"] = d.error;
    return j;
}

} // namespace

nlohmann::json DecayAudit::to_json() const
{
    auto inc = nlohmann::json::array();
    for (const auto& d : increments)
        inc.push_back(nslab::to_json(d));
    return {{"q", q},
            {"tolerance", tolerance},
            {"threshold", threshold},
            {"data", nslab::to_json(data)},
            {"increments", inc},
            {"contraction", contraction.to_json()},
            {"pass", pass}};
}

DecayAudit decay_audit(const SchemeConfig& cfg, const std::vector<int>& orders, double tolerance)
{
    if (cfg.domain.is_torus())
        throw std::invalid_argument("decay_audit: needs a box domain");
    if (!(tolerance >= 0.0))
        throw std::invalid_argument("decay_audit: tolerance must be non-negative");
    SchemeConfig one = cfg;
    one.steps = 1;
    one.strategy = Strategy::none;
    DecayAudit audit;
    audit.q = cfg.q;
    audit.tolerance = tolerance;
    audit.data = fit_one(0, prepare_initial(one), orders);
    audit.threshold = cfg.q - tolerance;
    if (audit.data.fit)
        audit.threshold = std::min(cfg.q, audit.data.fit->q_hat) - tolerance;

    const Trajectory traj = run_global(one, [&](const LocalState& state, const StepReport& rep) {
        audit.contraction = rep.contraction;
        for (int k = 1; k < static_cast<int>(state.increments.size()); ++k)
            audit.increments.push_back(fit_one(k, state.increments[k].back(), orders));
    });
    if (traj.aborted)
        throw std::runtime_error("decay_audit: " + traj.abort_reason);

    audit.pass = audit.data.zero || audit.data.fit.has_value();
    for (const auto& d : audit.increments) {
        if (d.k < 2 || d.zero)
            continue;
        if (!d.fit || d.fit->q_hat < audit.threshold)
            audit.pass = false;
    }
    return audit;
}

} // namespace nslab
