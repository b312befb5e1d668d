// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--cli PATH] [--only N ...] [--known-failure N ...]
//
// Exit status is 0 when every criterion passes or is listed as a known
// failure, 1 otherwise.

#include "nslab/config.hpp"
#include "nslab/diagnostics.hpp"
#include "nslab/fixtures.hpp"
#include "nslab/hoermander.hpp"
#include "nslab/parallel.hpp"
#include "nslab/picard.hpp"
#include "nslab/probes.hpp"
#include "nslab/scheme.hpp"
#include "nslab/semigroup.hpp"
#include "nslab/snapshot.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace nslab;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x)
{
    std::ostringstream s;
    s << std::setprecision(3) << x;
    return s.str();
}

Domain torus64() { return Domain::torus({64, 64}, {2 * pi, 2 * pi}); }

double linf(const Field& f) { return norm(f, Norm::linf()); }

double l1(const Field& f)
{
    double s = 0.0;
    for (double v : f.data())
        s += std::abs(v);
    return s * f.domain().cell_volume();
}

double rel_l2(const Field& a, const Field& b)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        num += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
        den += b.data()[i] * b.data()[i];
    }
    return std::sqrt(num / den);
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// Every torus run feeds its per-step divergence into criterion 4.
double worst_divergence = 0.0;
int torus_steps_seen = 0;

void record_divergence(const Trajectory& traj)
{
    for (const auto& r : traj.reports)
        if (r.divergence_linf >= 0.0) {
            worst_divergence = std::max(worst_divergence, r.divergence_linf);
            ++torus_steps_seen;
        }
}

SchemeConfig taylor_green_config()
{
    SchemeConfig cfg;
    cfg.sys = HormanderSystem::classical(2, 0.1);
    cfg.domain = torus64();
    cfg.initial = taylor_green(cfg.domain, 0.1, 0.0);
    cfg.steps = 10;
    cfg.rho = {RhoMode::fixed, 0.05};
    cfg.backend = Backend::spectral;
    return cfg;
}

SchemeConfig random_config(Strategy s, int steps)
{
    SchemeConfig cfg;
    cfg.sys = HormanderSystem::classical(2, 0.1);
    cfg.domain = torus64();
    cfg.initial = random_divfree(cfg.domain, 1.0, 4, 7);
    cfg.steps = steps;
    cfg.rho = {RhoMode::bound, 1.0};
    cfg.strategy = s;
    cfg.backend = Backend::spectral;
    return cfg;
}

//---------------------------------------------------------------------------//

Outcome taylor_green_oracle()
{
    const SchemeConfig cfg = taylor_green_config();
    const Trajectory traj = run_global(cfg);
    record_divergence(traj);
    const double t = traj.t.back();
    const double ev = linf(traj.v.back() - taylor_green(cfg.domain, 0.1, t));
    const double ep = linf(recover_pressure(traj.v.back()) - taylor_green_pressure(cfg.domain, 0.1, t));
    const bool pass = std::abs(t - 0.5) < 1e-14 && ev <= 1e-3 && ep <= 1e-3 && !traj.aborted;
    return {pass, "t = " + fmt(t) + ", velocity error " + fmt(ev) + ", pressure error " + fmt(ep)};
}

Outcome contraction_at_bound()
{
    std::string detail;
    bool pass = true;
    for (const char* name : {"taylor_green", "random"}) {
        SchemeConfig cfg = random_config(Strategy::none, 5);
        if (std::string(name) == "taylor_green")
            cfg.initial = taylor_green(cfg.domain, 0.1, 0.0);
        cfg.tol = 1e-11;
        const Trajectory traj = run_global(cfg);
        record_divergence(traj);
        std::vector<ContractionRecord> recs;
        double worst_ratio = 0.0, worst_first = 0.0;
        for (const auto& r : traj.reports) {
            recs.push_back(r.contraction);
            for (double q : r.contraction.ratios)
                worst_ratio = std::max(worst_ratio, q);
            worst_first = std::max(worst_first, r.contraction.increment_norms.front());
        }
        const auto sum = contraction_table(recs).summary;
        pass = pass && sum.ratios_le_half && sum.first_increment_le_quarter && !traj.aborted;
        detail += std::string(detail.empty() ? "" : "; ") + name + ": max ratio " + fmt(worst_ratio) +
                  ", max |dv1| " + fmt(worst_first);
    }
    return {pass, detail};
}

Outcome l_trend()
{
    SchemeConfig cfg = random_config(Strategy::none, 25);
    cfg.rho = {RhoMode::one_over_l, 0.05};
    const Trajectory traj = run_global(cfg);
    record_divergence(traj);
    std::vector<ContractionRecord> recs;
    for (const auto& r : traj.reports)
        recs.push_back(r.contraction);
    const auto sum = contraction_table(recs).summary;
    const bool pass = sum.has_trend && sum.l_trend_slope <= -0.4 && sum.l_trend_r2 >= 0.9;
    return {pass, "slope " + fmt(sum.l_trend_slope) + ", R^2 " + fmt(sum.l_trend_r2)};
}

// Criterion 5 and 6 share the strategy ii run.
struct GrowthRuns {
    GrowthReport ii, iii;
    double cancellation = 0.0;
    bool aborted = false;
};

const GrowthRuns& growth_runs()
{
    static const GrowthRuns runs = [] {
        GrowthRuns g;
        std::vector<Field> expected;
        const Trajectory ii = run_global(random_config(Strategy::ii, 25), [&](const LocalState& s, const StepReport&) {
            Field e = s.data;
            for (std::size_t k = 2; k < s.increments.size(); ++k)
                e += s.increments[k].back();
            expected.push_back(std::move(e));
        });
        record_divergence(ii);
        for (std::size_t l = 0; l < ii.steps(); ++l)
            g.cancellation = std::max(g.cancellation, linf(ii.v_controlled[l] - expected[l]));
        g.ii = growth_ledger_check(ii.ledger, Strategy::ii);

        const Trajectory iii = run_global(random_config(Strategy::iii, 50));
        record_divergence(iii);
        g.iii = growth_ledger_check(iii.ledger, Strategy::iii);
        g.aborted = ii.aborted || iii.aborted;
        return g;
    }();
    return runs;
}

Outcome growth_laws()
{
    const GrowthRuns& g = growth_runs();
    const bool pass = !g.aborted && g.ii.r_pass && g.ii.vr_pass && g.iii.vr_pass;
    return {pass, "ii: r linear R^2 " + fmt(g.ii.r_fit.r2) + ", v^r sqrt R^2 " + fmt(g.ii.vr_fit.r2) +
                      "; iii: max v^r " + fmt(g.iii.vr_max) + " vs 1.25 x " + fmt(g.iii.vr_reference)};
}

Outcome exact_cancellation()
{
    const GrowthRuns& g = growth_runs();
    return {!g.aborted && g.cancellation <= 1e-12, "max Linf defect " + fmt(g.cancellation) + " over 25 steps"};
}

Outcome incompressibility()
{
    const bool pass = torus_steps_seen > 0 && worst_divergence <= 1e-8;
    return {pass, "max Linf divergence " + fmt(worst_divergence) + " over " + std::to_string(torus_steps_seen) +
                      " torus steps"};
}

HormanderSystem random_cubic_system(unsigned seed)
{
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto alphas = multi_indices(3, 3);
    std::vector<VectorField> fields;
    for (int f = 0; f < 4; ++f) {
        VectorField v;
        for (int j = 0; j < 3; ++j) {
            std::vector<Monomial> terms;
            for (int t = 0; t < 4; ++t)
                terms.push_back({alphas[gen() % alphas.size()], u(gen)});
            v.push_back(ScalarFunction::polynomial(3, terms));
        }
        fields.push_back(v);
    }
    std::vector<VectorField> c(3, constant_field({1, 1, 1}));
    return HormanderSystem(3, fields, constant_field({1, 1, 1}), c, constant_field({0, 0, 0}), 0.5);
}

Outcome hormander_checker()
{
    const Domain sq = Domain::box({8, 8}, {1.0, 1.0}), cube = Domain::box({8, 8, 8}, {1.0, 1.0, 1.0});
    const auto lap = check_condition(HormanderSystem::builtin("laplacian", 2), sq, 100, 3);
    const auto heis = check_condition(HormanderSystem::builtin("heisenberg"), cube, 100, 3);
    const auto kol = check_condition(HormanderSystem::builtin("kolmogorov"), sq, 100, 3);
    const auto deg = check_condition(parse_system(R"({"n": 2, "fields": [[0, 0], [1, 0]]})"), sq, 100, 3);

    const auto sys = random_cubic_system(11);
    const auto V = BracketNode::generator(1), W = BracketNode::generator(2), U = BracketNode::generator(3);
    const auto J1 = lie_bracket(lie_bracket(V, W), U), J2 = lie_bracket(lie_bracket(W, U), V),
               J3 = lie_bracket(lie_bracket(U, V), W);
    std::mt19937 gen(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double jacobi = 0.0;
    for (int p = 0; p < 100; ++p) {
        const double x[3] = {u(gen), u(gen), u(gen)};
        const auto a = J1.evaluate(sys, x), b = J2.evaluate(sys, x), c = J3.evaluate(sys, x);
        for (int j = 0; j < 3; ++j)
            jacobi = std::max(jacobi, std::abs(a[j] + b[j] + c[j]));
    }
    const bool pass = lap.pass && lap.max_depth_used == 0 && heis.pass && heis.max_depth_used == 1 && kol.pass &&
                      kol.max_depth_used == 1 && !deg.pass && !deg.witnesses.empty() && jacobi <= 1e-8;
    return {pass, "depths laplacian " + std::to_string(lap.max_depth_used) + ", heisenberg " +
                      std::to_string(heis.max_depth_used) + ", kolmogorov " + std::to_string(kol.max_depth_used) +
                      "; {d_x} " + (deg.pass ? "passes" : "fails") + " with " +
                      std::to_string(deg.witnesses.size()) + " witnesses; Jacobi residual " + fmt(jacobi)};
}

Outcome density_oracles()
{
    const std::uint64_t seed = 1;
    const int N = 1000000;
    const Domain grid = Domain::box({64, 64}, {4.0, 4.0});
    const std::vector<double> x0{0.0, 0.0};

    const auto lap = HormanderSystem::builtin("laplacian", 2, 0.5);
    const auto gs = euler_maruyama_sample(lap, x0, 1.0, 16, N, seed);
    const auto gc = gaussian_density_check(estimate_density(gs, grid, std::nullopt, x0), 1.0, 2.0);

    const auto kol = HormanderSystem::builtin("kolmogorov");
    const auto ks = euler_maruyama_sample(kol, x0, 1.0, 256, N, seed);
    const auto kc = kolmogorov_density_check(estimate_density(ks, grid, std::nullopt, x0), 1.5);

    const std::vector<double> taus{0.25, 0.5, 1.0};
    const std::vector<std::vector<double>> bases{{0, 0}, {1, 0}, {2, 0}, {3, 0}};
    const auto ge = fit_ks_envelope(lap, taus, bases, 50000, seed);
    const auto ke = fit_ks_envelope(kol, taus, bases, 50000, seed);

    const bool pass = gc.sup_rel_error <= 0.05 && kc.sup_rel_error <= 0.05 && std::abs(ge.m_exp) <= 0.5 &&
                      ke.m_exp > 0.5;
    return {pass, "sup rel error gaussian " + fmt(gc.sup_rel_error) + ", kolmogorov " + fmt(kc.sup_rel_error) +
                      "; m_exp gaussian " + fmt(ge.m_exp) + ", kolmogorov " + fmt(ke.m_exp)};
}

Outcome semigroup_cross_validation()
{
    const Domain d = torus64();
    const auto heat = HormanderSystem::builtin("laplacian", 2, 0.3);
    const Field f = sample(d, 1, [](std::span<const double> x, int) {
        return std::sin(x[0]) * std::cos(2.0 * x[1]) + 0.5 * std::cos(3.0 * x[0] + x[1]) + 0.2;
    });
    const double e_heat =
        rel_l2(apply_semigroup(heat, f, 0.4, Backend::fd_substep), apply_semigroup(heat, f, 0.4, Backend::spectral));

    const Domain box = Domain::box({128, 128}, {4.0, 4.0});
    const double s = 0.4, t = 0.5;
    const Field g = sample(box, 1, [&](std::span<const double> x, int) {
        return std::exp(-0.5 * (x[0] * x[0] + x[1] * x[1]) / (s * s)) / (2.0 * pi * s * s);
    });
    const Field got = apply_semigroup(HormanderSystem::builtin("kolmogorov"), g, t, Backend::fd_substep);
    // the exact convolution is the Gaussian of the mean map with covariance Sigma_t + s^2 I
    const double a = t + s * s, b = t * t / 2, c = t * t * t / 3 + s * s, det = a * c - b * b;
    const Field exact = sample(box, 1, [&](std::span<const double> x, int) {
        const double m0 = x[0], m1 = x[1] + x[0] * t;
        return std::exp(-0.5 * (c * m0 * m0 - 2 * b * m0 * m1 + a * m1 * m1) / det) / (2 * pi * std::sqrt(det));
    });
    const double e_kol = l1(got - exact) / l1(exact);
    return {e_heat <= 1e-4 && e_kol <= 0.02,
            "heat relative L2 " + fmt(e_heat) + ", kolmogorov relative L1 " + fmt(e_kol)};
}

Outcome decay_inheritance(const fs::path& source_dir)
{
    const RunConfig cfg = load_config(source_dir / "configs" / "decay-audit.json");
    const DecayAudit audit = decay_audit(cfg.scheme, cfg.decay.orders, 0.5);
    double worst = 1e300;
    bool all_fitted = true;
    for (const auto& d : audit.increments)
        if (d.k >= 2) {
            if (d.fit)
                worst = std::min(worst, d.fit->q_hat);
            else if (!d.zero)
                all_fitted = false;
        }

    // hand-fed exponents: n = 2, m = 1, n_exp = 1 gives max{1, 3} + 6 = 9
    const BudgetCheck at = decay_budget_check(2, 9.0, 1.0, 1.0);
    const BudgetCheck below = decay_budget_check(2, std::nextafter(9.0, 0.0), 1.0, 1.0);
    const BudgetCheck wide = decay_budget_check(3, 20.0, 0.5, 4.0);
    const bool budget = at.theorem_threshold == 9.0 && at.theorem_pass && !below.theorem_pass &&
                        wide.theorem_threshold == 12.0 && wide.lemma_threshold == 8.0;
    const bool pass = all_fitted && worst >= 5.5 && budget;
    return {pass, "q_hat data " + (audit.data.fit ? fmt(audit.data.fit->q_hat) : std::string("n/a")) +
                      ", min q_hat dv^{k>=2} " + fmt(worst) + "; budget arithmetic " + (budget ? "exact" : "wrong")};
}

Outcome momentum_residual_floor()
{
    const Domain d = torus64();
    const auto sys = HormanderSystem::classical(2, 0.1);
    const LocalSolver solver(sys, d, Backend::spectral);

    const Field h = random_divfree(d, 1.0, 4, 7);
    const double rho = step_size_bound(std::max(1.0, norm(h, Norm::hm(2))), estimate_CB(sys, d, 2).C_B, 1.0, 1.0,
                                       sys.coupling_sum(), 1.0);
    std::vector<double> nodes = make_local_state(1, rho, h).nodes;

    std::vector<Field> exact;
    for (double s : nodes)
        exact.push_back(taylor_green(d, 0.1, rho * s));
    const double floor = momentum_residual(solver, exact, nodes, rho);

    double worst = 0.0;
    for (const Field& data : {taylor_green(d, 0.1, 0.0), h}) {
        auto state = make_local_state(1, rho, data);
        iterate_to_tolerance(solver, state, 1e-12, 20);
        if (!state.converged)
            return {false, "Picard did not converge"};
        worst = std::max(worst, momentum_residual(solver, state.trajectory(), state.nodes, rho));
    }
    return {worst <= 10.0 * floor, "rho " + fmt(rho) + ", residual " + fmt(worst) + " vs floor " + fmt(floor)};
}

std::string dump_run(const Trajectory& traj, const fs::path& dir)
{
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string bytes = traj.report().dump();
    for (std::size_t l = 0; l < traj.steps(); ++l) {
        const fs::path base = dir / ("v_" + std::to_string(l));
        write_snapshot(base, traj.v_controlled[l]);
        bytes += slurp(base.string() + ".json") + slurp(base.string() + ".bin");
    }
    return bytes;
}

int run_cli(const std::string& cli, const std::string& args)
{
    const int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism(const std::string& cli, const fs::path& source_dir)
{
    const fs::path tmp = fs::temp_directory_path() / ("nslab_acceptance_" + std::to_string(::getpid()));
    const int saved = thread_budget();
    std::string bytes[2];
    std::vector<double> samples[2];
    int i = 0;
    for (int threads : {1, 4}) {
        set_thread_budget(threads);
        SchemeConfig cfg = random_config(Strategy::iii, 5);
        bytes[i] = dump_run(run_global(cfg), tmp / ("t" + std::to_string(threads)));
        const auto s = euler_maruyama_sample(HormanderSystem::builtin("kolmogorov"), {0.0, 0.0}, 1.0, 64, 20000, 3);
        samples[i].assign(s.points.data(), s.points.data() + s.points.size());
        ++i;
    }
    set_thread_budget(saved);
    bool pass = bytes[0] == bytes[1] &&
                std::memcmp(samples[0].data(), samples[1].data(), samples[0].size() * sizeof(double)) == 0;
    std::string detail = std::string("in-process scheme and sampler ") + (pass ? "identical" : "differ");

    if (!cli.empty()) {
        bool same = true;
        const std::string cfg = (source_dir / "configs" / "growth-ii.json").string();
        for (int threads : {1, 4}) {
            const int code = run_cli(cli, "run --config " + cfg + " --seed 11 --threads " + std::to_string(threads) +
                                              " --out " + (tmp / ("cli" + std::to_string(threads))).string());
            same = same && (code == 0 || code == 2);
        }
        int files = 0;
        for (const auto& e : fs::recursive_directory_iterator(tmp / "cli1")) {
            if (!e.is_regular_file() || e.path().filename() == "manifest.json")
                continue;
            same = same && slurp(e.path()) == slurp(tmp / "cli4" / fs::relative(e.path(), tmp / "cli1"));
            ++files;
        }
        same = same && files > 0;
        pass = pass && same;
        detail += "; CLI run outputs (" + std::to_string(files) + " files) " + (same ? "identical" : "differ");
    }
    fs::remove_all(tmp);
    return {pass, detail};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"nslab acceptance suite"};
    std::string cli;
    std::string source = NSLAB_SOURCE_DIR;
    std::vector<int> only, known;
    app.add_option("--cli", cli, "path of the nslab executable");
    app.add_option("--source", source, "source tree holding configs/");
    app.add_option("--only", only, "run only these criteria");
    app.add_option("--known-failure", known, "criteria expected to fail");
    CLI11_PARSE(app, argc, argv);

    const fs::path src = source;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"Taylor-Green oracle", taylor_green_oracle},
        {"contraction at the admissible step", contraction_at_bound},
        {"l-trend of the k = 2 ratio", l_trend},
        {"incompressibility inheritance", incompressibility},
        {"growth laws ii / iii", growth_laws},
        {"strategy ii exact cancellation", exact_cancellation},
        {"Hormander checker", hormander_checker},
        {"density oracles and envelope", density_oracles},
        {"semigroup cross-validation", semigroup_cross_validation},
        {"decay inheritance and budget", [&] { return decay_inheritance(src); }},
        {"momentum residual", momentum_residual_floor},
        {"determinism across thread budgets", [&] { return determinism(cli, src); }},
    };
    // criterion 4 collects divergences from every other torus run, so it goes last
    std::vector<int> order{1, 2, 3, 5, 6, 7, 8, 9, 10, 11, 12, 4};
    const std::set<int> wanted(only.begin(), only.end()), expected(known.begin(), known.end());

    std::vector<std::string> lines(criteria.size());
    int failures = 0, passed = 0;
    for (int c : order) {
        if (!wanted.empty() && !wanted.count(c))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[c - 1].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream line;
        line << "criterion " << std::setw(2) << c << ' ' << (o.pass ? "PASS" : "FAIL") << "  "
             << criteria[c - 1].first << ": " << o.detail << " [" << std::fixed << std::setprecision(1) << secs
             << " s]";
        if (!o.pass && expected.count(c))
            line << " (known failure)";
        std::cout << line.str() << std::endl;
        lines[c - 1] = line.str();
        if (o.pass)
            ++passed;
        else if (!expected.count(c))
            ++failures;
    }
    std::cout << "\nsummary (criterion order):\n";
    for (const auto& l : lines)
        if (!l.empty())
            std::cout << "  " << l << '\n';
    std::cout << passed << " passed, " << failures << " unexpected failures\n";
    return failures == 0 ? 0 : 1;
}
