#include "nslab/scheme.hpp"

#include "nslab/kernels.hpp"
#include "nslab/snapshot.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace nslab {

std::string to_string(RhoMode m)
{
    switch (m) {
    case RhoMode::bound:
        return "bound";
    case RhoMode::one_over_l:
        return "one_over_l";
    case RhoMode::fixed:
        return "fixed";
    }
    return "?";
}

RhoMode rho_mode_from_string(const std::string& s)
{
    for (RhoMode m : {RhoMode::bound, RhoMode::one_over_l, RhoMode::fixed})
        if (to_string(m) == s)
            return m;
    throw std::invalid_argument("unknown rho schedule '" + s + "'");
}

void SchemeConfig::validate() const
{
    if (steps < 1)
        throw std::invalid_argument("scheme: steps must be >= 1");
    if (sys.dim() != domain.dim())
        throw std::invalid_argument("scheme: system and domain dimensions differ");
    if (initial.domain() != domain || initial.components() != domain.dim())
        throw std::invalid_argument("scheme: initial data must be a vector field on the domain");
    if (!(rho.value > 0.0) || !std::isfinite(rho.value))
        throw std::invalid_argument("scheme: rho schedule value must be positive");
    if (rho.mode != RhoMode::bound && rho.value > 1.0)
        throw std::invalid_argument("scheme: rho must lie in (0, 1]");
    if (!(C > 1.0))
        throw std::invalid_argument("scheme: control constant C must exceed 1");
    if (!(tol > 0.0) || kmax < 1)
        throw std::invalid_argument("scheme: Picard tolerance must be positive and kmax >= 1");
    if (!(q >= 0.0))
        throw std::invalid_argument("scheme: decay order q must be non-negative");
    if (backend == Backend::spectral && !sys.is_heat())
        throw std::invalid_argument("scheme: the spectral backend needs a heat system; use fd_substep");
    if (!sys.is_heat() && domain.is_torus())
        throw std::invalid_argument("scheme: degenerate systems run on a box domain");
    for (double c : {constants.C_B, constants.C_G, constants.C_K, constants.c_n})
        if (c < 0.0 || !std::isfinite(c))
            throw std::invalid_argument("scheme: constants must be non-negative");
    if (!(constants.C_G > 0.0) || !(constants.c_n > 0.0))
        throw std::invalid_argument("scheme: C_G and c_n must be positive");
    initial.require_finite("scheme initial data");
}

nlohmann::json StepReport::to_json() const
{
    nlohmann::json j{{"l", l},
                     {"rho", rho},
                     {"bound_rho", bound_rho},
                     {"C_prev", C_prev},
                     {"t", t},
                     {"contraction", contraction.to_json()}};
    if (divergence_linf >= 0.0)
        j["divergence_linf"] = divergence_linf;
    return j;
}

double Trajectory::reconstruction_error() const
{
    double worst = 0.0;
    for (std::size_t l = 0; l < v.size(); ++l) {
        const Field d = v[l] - (v_controlled[l] - r[l]);
        worst = std::max(worst, norm(d, Norm::linf()));
    }
    return worst;
}

nlohmann::json Trajectory::report() const
{
    auto steps = nlohmann::json::array();
    for (const auto& s : reports)
        steps.push_back(s.to_json());
    return {{"steps", steps},
            {"times", t},
            {"ledger", ledger_json(ledger)},
            {"warnings", warnings},
            {"aborted", aborted},
            {"abort_reason", abort_reason},
            {"constants", {{"C_B", C_B}, {"C_K", C_K}, {"c_sum", c_sum}}}};
}

Field prepare_initial(const SchemeConfig& cfg)
{
    // the box has no exact projection; box data are taken as given
    return cfg.domain.is_torus() ? leray_project(cfg.initial) : cfg.initial;
}

double decay_constant_proxy(const Field& data, double q)
{
    double c = norm(data, Norm::hm(2));
    if (!data.domain().is_torus())
        c *= norm(data, Norm::weighted_linf(q));
    return std::max(1.0, c);
}

namespace {

// compensated running sum so that t_L = L rho for a fixed schedule
class KahanSum {
public:
    KahanSum& operator+=(double x)
    {
        const double y = x - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
        return *this;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0, c_ = 0.0;
};

} // namespace

Trajectory run_global(const SchemeConfig& cfg, const StepObserver& observer)
{
    cfg.validate();
    Trajectory traj;
    const LocalSolver solver(cfg.sys, cfg.domain, cfg.backend);

    {
        traj.C_B = cfg.constants.C_B > 0.0 ? cfg.constants.C_B : estimate_CB(cfg.sys, cfg.domain, 2).C_B;
        if (cfg.constants.C_K > 0.0)
            traj.C_K = cfg.constants.C_K;
        else
            traj.C_K = cfg.domain.is_torus()
                           ? 1.0
                           : estimate_CK(cfg.domain, EllipticKernel::poisson(cfg.domain.dim()), cfg.seed + 7).value;
        traj.c_sum = cfg.sys.coupling_sum();
        // a vanishing B field leaves only the Leray part of the bound
        traj.C_B = std::max(traj.C_B, 1e-300);
        traj.c_sum = std::max(traj.c_sum, 1e-300);
    }

    Field data = prepare_initial(cfg);
    ControlState ctrl = make_control_state(cfg.strategy, cfg.C, data, cfg.r0);
    KahanSum t;

    for (int l = 1; l <= cfg.steps; ++l) {
        StepReport rep;
        rep.l = l;
        rep.C_prev = decay_constant_proxy(data, cfg.q);
        rep.bound_rho =
            step_size_bound(rep.C_prev, traj.C_B, cfg.constants.C_G, traj.C_K, traj.c_sum, cfg.constants.c_n);
        switch (cfg.rho.mode) {
        case RhoMode::bound:
            rep.rho = std::min(1.0, cfg.rho.value * rep.bound_rho);
            break;
        case RhoMode::one_over_l:
            rep.rho = cfg.rho.value / l;
            break;
        case RhoMode::fixed:
            rep.rho = cfg.rho.value;
            break;
        }

        LocalState state = make_local_state(l, rep.rho, data, cfg.samples);
        // only bound-mode runs are audited against the bound
        if (cfg.rho.mode == RhoMode::bound)
            state.bound_rho = rep.bound_rho;
        try {
            rep.contraction = iterate_to_tolerance(solver, state, cfg.tol, cfg.kmax);
        } catch (const std::domain_error& e) {
            traj.aborted = true;
            traj.abort_reason = e.what();
            traj.warnings.push_back("l=" + std::to_string(l) + ": nan");
            return traj;
        }
        for (const auto& w : rep.contraction.warnings)
            traj.warnings.push_back("l=" + std::to_string(l) + ": " + w);

        ControlContext ctx;
        ctx.solver = &solver;
        ctx.state = &state;
        ctx.r_prev = ctrl.r;
        ctx.C = cfg.C;
        ctx.q = cfg.q;
        ctx.decay_constant = cfg.decay_constant;
        const Field dr = control_increment(cfg.strategy, ctx);
        ControlledStep step = apply_control(state, ctrl, dr);

        t += rep.rho;
        rep.t = t.value();
        Field v = step.v_controlled - step.r_new;
        if (cfg.domain.is_torus())
            rep.divergence_linf = norm(divergence(v), Norm::linf());
        if (cfg.store_samples)
            for (std::size_t i = 1; i + 1 < state.nodes.size(); ++i)
                rep.samples.push_back(state.trajectory()[i]);
        if (observer)
            observer(state, rep);

        traj.t.push_back(rep.t);
        traj.v.push_back(std::move(v));
        traj.r.push_back(step.r_new);
        traj.v_controlled.push_back(step.v_controlled);
        traj.reports.push_back(std::move(rep));
        data = std::move(step.v_controlled);
    }
    traj.ledger = ctrl.ledger;
    return traj;
}

nlohmann::json BudgetCheck::to_json() const
{
    return {{"n", n},
            {"q", q},
            {"m_exp", m_exp},
            {"n_exp", n_exp},
            {"theorem", {{"threshold", theorem_threshold}, {"margin", theorem_margin}, {"pass", theorem_pass}}},
            {"lemma", {{"threshold", lemma_threshold}, {"margin", lemma_margin}, {"pass", lemma_pass}}}};
}

BudgetCheck decay_budget_check(int n, double q, double m_exp, double n_exp)
{
    BudgetCheck b;
    b.n = n;
    b.q = q;
    b.m_exp = m_exp;
    b.n_exp = n_exp;
    b.theorem_threshold = std::max(n_exp, 3.0 * m_exp) + 2.0 * n + 2.0;
    b.lemma_threshold = std::max(n_exp, m_exp) + n + 1.0;
    b.theorem_margin = q - b.theorem_threshold;
    b.lemma_margin = q - b.lemma_threshold;
    b.theorem_pass = b.theorem_margin >= 0.0;
    b.lemma_pass = b.lemma_margin >= 0.0;
    return b;
}

BudgetCheck decay_budget_check(const SchemeConfig& cfg, const KSEnvelope& envelope)
{
    return decay_budget_check(cfg.domain.dim(), cfg.q, envelope.m_exp, envelope.n_exp);
}

std::vector<TimeSample> export_original_time(const Trajectory& traj)
{
    if (traj.v.empty())
        throw std::invalid_argument("export_original_time: empty trajectory");
    std::vector<TimeSample> out;
    KahanSum t;
    for (std::size_t l = 0; l < traj.v.size(); ++l) {
        t += traj.reports[l].rho;
        out.push_back({t.value(), traj.v_controlled[l] - traj.r[l]});
    }
    return out;
}

namespace {

std::string series_name(std::size_t i)
{
    std::ostringstream s;
    s << "v_" << std::setw(4) << std::setfill('0') << i;
    return s.str();
}

} // namespace

void write_time_series(const std::filesystem::path& dir, const std::vector<TimeSample>& series)
{
    std::filesystem::create_directories(dir);
    std::ofstream times(dir / "times.txt");
    if (!times)
        throw std::runtime_error("cannot write " + (dir / "times.txt").string());
    times << std::setprecision(17);
    for (std::size_t i = 0; i < series.size(); ++i) {
        times << series[i].t << '\n';
        write_snapshot(dir / series_name(i + 1), series[i].v);
    }
}

std::vector<TimeSample> import_time_series(const std::filesystem::path& dir)
{
    std::ifstream times(dir / "times.txt");
    if (!times)
        throw std::runtime_error("cannot read " + (dir / "times.txt").string());
    std::vector<TimeSample> out;
    double t;
    while (times >> t)
        out.push_back({t, read_snapshot(dir / series_name(out.size() + 1))});
    return out;
}

} // namespace nslab
