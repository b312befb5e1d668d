#include "nslab/cli.hpp"

#include "nslab/config.hpp"
#include "nslab/diagnostics.hpp"
#include "nslab/fixtures.hpp"
#include "nslab/kernels.hpp"
#include "nslab/parallel.hpp"
#include "nslab/probes.hpp"
#include "nslab/snapshot.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace nslab {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string timestamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Two numeric columns, one pair per line.
void write_columns(const fs::path& path, const std::vector<double>& x, const std::vector<double>& y)
{
    std::ostringstream s;
    s << std::setprecision(17);
    for (std::size_t i = 0; i < x.size(); ++i)
        s << x[i] << ' ' << y[i] << '\n';
    write_text(path, s.str());
}

// Results are assembled in <out>.partial and renamed into place at the end,
// so a crashed run never leaves a half-written output directory behind.
class OutputDir {
public:
    OutputDir(fs::path target, const CliOptions& opt, int threads) : target_(std::move(target))
    {
        if (target_.empty())
            throw std::invalid_argument("--out is required for " + opt.command);
        if (fs::exists(target_) && !fs::is_empty(target_) && !fs::exists(target_ / "manifest.json"))
            throw std::runtime_error("output directory " + target_.string() +
                                     " exists and was not written by nslab");
        staging_ = target_;
        staging_ += ".partial";
        fs::remove_all(staging_);
        fs::create_directories(staging_);
        manifest_ = {{"tool", "nslab"},
                     {"version", tool_version},
                     {"subcommand", opt.command},
                     {"config", opt.config.string()},
                     {"out", target_.string()},
                     {"seed", opt.seed ? json(*opt.seed) : json(nullptr)},
                     {"threads", threads},
                     {"started", timestamp()}};
        write_json(staging_ / "manifest.json", manifest_);
    }

    const fs::path& path() const { return staging_; }

    void commit(int exit_code)
    {
        manifest_["finished"] = timestamp();
        manifest_["exit_code"] = exit_code;
        write_json(staging_ / "manifest.json", manifest_);
        if (fs::exists(target_)) {
            fs::path old = target_;
            old += ".old";
            fs::remove_all(old);
            fs::rename(target_, old);
            fs::rename(staging_, target_);
            fs::remove_all(old);
        } else {
            if (target_.has_parent_path())
                fs::create_directories(target_.parent_path());
            fs::rename(staging_, target_);
        }
    }

private:
    fs::path target_, staging_;
    json manifest_;
};

RunConfig load_with_overrides(const CliOptions& opt)
{
    if (opt.config.empty())
        throw ConfigError("--config", "a configuration file is required");
    RunConfig cfg = load_config(opt.config);
    if (opt.seed)
        override_seed(cfg, *opt.seed);
    if (opt.strategy)
        override_strategy(cfg, *opt.strategy);
    return cfg;
}

void require_scheme(const RunConfig& cfg, const std::string& cmd)
{
    if (cfg.scheme.domain.size() == 0)
        throw ConfigError("$.domain", "missing (required by " + cmd + ")");
}

std::vector<ContractionRecord> records_of(const Trajectory& traj)
{
    std::vector<ContractionRecord> out;
    for (const auto& r : traj.reports)
        out.push_back(r.contraction);
    return out;
}

std::string snapshot_name(const char* stem, std::size_t l)
{
    std::ostringstream s;
    s << stem << '_' << std::setw(4) << std::setfill('0') << l;
    return s.str();
}

} // namespace

int resolve_threads(std::optional<int> flag)
{
    if (flag) {
        if (*flag < 1)
            throw std::invalid_argument("--threads must be at least 1");
        return *flag;
    }
    if (const char* env = std::getenv("SOLVER_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw std::invalid_argument(std::string("SOLVER_THREADS must be a positive integer, got '") + env + "'");
        return static_cast<int>(v);
    }
    return 1;
}

int cmd_run(const CliOptions& opt, std::ostream& log)
{
    const RunConfig cfg = load_with_overrides(opt);
    require_scheme(cfg, "run");
    OutputDir out(opt.out, opt, thread_budget());
    const SchemeConfig& sc = cfg.scheme;
    const Trajectory traj = run_global(sc);

    fs::create_directories(out.path() / "snapshots");
    for (std::size_t l = 0; l < traj.steps(); ++l) {
        write_snapshot(out.path() / "snapshots" / snapshot_name("v", l + 1), traj.v[l]);
        write_snapshot(out.path() / "snapshots" / snapshot_name("vr", l + 1), traj.v_controlled[l]);
        write_snapshot(out.path() / "snapshots" / snapshot_name("r", l + 1), traj.r[l]);
    }
    write_text(out.path() / "ledger.csv", ledger_csv(traj.ledger));
    const ContractionTable table = contraction_table(records_of(traj));
    write_text(out.path() / "contraction.csv", table.csv);

    json rep = traj.report();
    rep["schema_version"] = config_schema_version;
    rep["command"] = "run";
    rep["config"] = cfg.source;
    rep["seed"] = cfg.seed;
    rep["strategy"] = to_string(sc.strategy);
    rep["C"] = sc.C;
    rep["contraction_summary"] = table.summary.to_json();
    rep["reconstruction_error"] = traj.reconstruction_error();
    if (sc.domain.is_torus()) {
        double div = 0.0;
        for (const auto& s : traj.reports)
            div = std::max(div, s.divergence_linf);
        rep["max_divergence"] = div;
    }
    if (traj.ledger.size() >= 10)
        rep["growth"] = growth_ledger_check(traj.ledger, sc.strategy).to_json();
    if (cfg.oracle == "taylor_green" && !traj.v.empty()) {
        const double t = traj.t.back(), nu = sc.sys.nu(), amp = cfg.initial.amplitude;
        rep["oracle_error"] = norm(traj.v.back() - taylor_green(sc.domain, nu, t, amp), Norm::linf());
        rep["pressure_error"] =
            norm(recover_pressure(traj.v.back()) - taylor_green_pressure(sc.domain, nu, t, amp), Norm::linf());
    }
    write_json(out.path() / "report.json", rep);

    fs::create_directories(out.path() / "plots");
    std::vector<double> ls, t, rinf, vr, v;
    for (const auto& e : traj.ledger) {
        ls.push_back(e.l);
        rinf.push_back(e.r_linf);
        vr.push_back(e.vr_h2);
        v.push_back(e.v_h2);
    }
    write_columns(out.path() / "plots" / "r_linf.txt", ls, rinf);
    write_columns(out.path() / "plots" / "vr_h2.txt", ls, vr);
    write_columns(out.path() / "plots" / "v_h2.txt", ls, v);
    write_columns(out.path() / "plots" / "time.txt", ls, traj.t);

    log << "run: " << traj.steps() << " steps, t = " << (traj.t.empty() ? 0.0 : traj.t.back());
    if (rep.contains("oracle_error"))
        log << ", oracle error " << rep["oracle_error"].get<double>();
    log << ", " << traj.warnings.size() << " warnings\n";
    for (const auto& w : traj.warnings)
        log << "  warning: " << w << '\n';
    int code = exit_ok;
    if (traj.aborted) {
        log << "run aborted: " << traj.abort_reason << '\n';
        code = exit_error;
    } else if (!traj.warnings.empty()) {
        code = exit_warnings;
    }
    out.commit(code);
    return code;
}

int cmd_contraction_audit(const CliOptions& opt, std::ostream& log)
{
    const RunConfig cfg = load_with_overrides(opt);
    require_scheme(cfg, "contraction-audit");
    OutputDir out(opt.out, opt, thread_budget());
    const Trajectory traj = run_global(cfg.scheme);
    const ContractionTable table = contraction_table(records_of(traj));
    write_text(out.path() / "contraction.csv", table.csv);
    json summary = table.summary.to_json();
    summary["warnings"] = traj.warnings;
    summary["aborted"] = traj.aborted;
    auto steps = json::array();
    for (const auto& r : traj.reports)
        steps.push_back({{"l", r.l}, {"rho", r.rho}, {"bound_rho", r.bound_rho}, {"C_prev", r.C_prev}});
    summary["steps"] = steps;
    write_json(out.path() / "summary.json", summary);

    std::vector<double> ls, r2;
    for (const auto& r : traj.reports)
        if (!r.contraction.ratios.empty()) {
            ls.push_back(r.l);
            r2.push_back(r.contraction.ratios[0]);
        }
    fs::create_directories(out.path() / "plots");
    write_columns(out.path() / "plots" / "ratio_k2.txt", ls, r2);

    log << "contraction-audit: " << traj.steps() << " steps, "
        << (table.summary.violations.empty() ? "all bounds hold" : "violations:") << '\n';
    for (const auto& v : table.summary.violations)
        log << "  " << v << '\n';
    const int code = traj.aborted ? exit_error
                     : (!table.summary.violations.empty() || !traj.warnings.empty()) ? exit_warnings
                                                                                      : exit_ok;
    out.commit(code);
    return code;
}

int cmd_density_probe(const CliOptions& opt, std::ostream& log)
{
    const RunConfig cfg = load_with_overrides(opt);
    if (!cfg.density)
        throw ConfigError("$.density", "missing (required by density-probe)");
    const DensitySpec& d = *cfg.density;
    if (d.N < 1)
        throw std::invalid_argument("density-probe: no samples (N = 0)");
    OutputDir out(opt.out, opt, thread_budget());

    const SampleSet s = euler_maruyama_sample(d.sys, d.x0, d.tau, d.steps, d.N, cfg.seed);
    // grid centred on the mean map of the drift-free part: the sample mean
    std::vector<double> centre(d.x0.size());
    for (std::size_t a = 0; a < centre.size(); ++a)
        centre[a] = s.points.col(static_cast<Eigen::Index>(a)).mean();
    const Domain grid = Domain::box(d.grid_shape, d.grid_half_width);
    const DensityEstimate est = estimate_density(s, grid, d.bandwidth, d.oracle == "none" ? centre : d.x0);
    write_snapshot(out.path() / "density", est.density);

    json rep{{"schema_version", config_schema_version},
             {"command", "density-probe"},
             {"config", cfg.source},
             {"seed", cfg.seed},
             {"N", est.N},
             {"tau", est.tau},
             {"x0", est.x0},
             {"origin", est.origin},
             {"bandwidth", est.bandwidth},
             {"noise_floor", est.noise_floor},
             {"mass", est.mass()}};
    int code = exit_ok;
    if (d.oracle != "none") {
        const DensityCheck c = d.oracle == "gaussian"
                                   ? gaussian_density_check(est, 2.0 * d.sys.nu() * d.tau, d.region)
                                   : kolmogorov_density_check(est, d.region);
        json cj = c.to_json();
        cj["tolerance"] = d.tolerance;
        cj["pass"] = c.sup_rel_error <= d.tolerance;
        rep["oracle"] = cj;
        log << "density-probe: sup relative error " << c.sup_rel_error << " over " << c.points << " points ("
            << (c.sup_rel_error <= d.tolerance ? "within" : "above") << " tolerance " << d.tolerance << ")\n";
        if (c.sup_rel_error > d.tolerance)
            code = exit_warnings;
    }
    if (cfg.envelope && cfg.envelope->fit) {
        const EnvelopeSpec& e = *cfg.envelope;
        EnvelopeProbe probe;
        probe.steps = e.steps;
        probe.grid_points = e.grid_points;
        const KSEnvelope env = fit_ks_envelope(d.sys, e.taus, e.base_points, e.N, cfg.seed, probe);
        const json ej{{"A", env.A},         {"B", env.B},       {"m_exp", env.m_exp},
                      {"n_exp", env.n_exp}, {"j", env.j},       {"alpha", env.alpha},
                      {"residual", env.residual}, {"points_used", env.points_used},
                      {"N", e.N},           {"taus", e.taus},   {"base_points", e.base_points},
                      {"seed", cfg.seed}};
        write_json(out.path() / "envelope.json", ej);
        rep["envelope"] = ej;
        log << "density-probe: envelope m_exp = " << env.m_exp << ", n_exp = " << env.n_exp << ", B = " << env.B
            << '\n';
    }
    write_json(out.path() / "report.json", rep);

    // profile through the grid row nearest the centre
    const Domain& g = est.density.domain();
    if (g.dim() >= 1) {
        std::vector<double> xs, ps;
        std::vector<int> idx(g.dim(), 0);
        for (int a = 1; a < g.dim(); ++a)
            idx[a] = g.shape()[a] / 2;
        for (int i = 0; i < g.shape()[0]; ++i) {
            idx[0] = i;
            std::size_t flat = 0;
            for (int a = 0; a < g.dim(); ++a)
                flat += static_cast<std::size_t>(idx[a]) * g.stride(a);
            xs.push_back(est.origin[0] + g.coord(0, i));
            ps.push_back(est.density.component(0)[flat]);
        }
        fs::create_directories(out.path() / "plots");
        write_columns(out.path() / "plots" / "density_x0.txt", xs, ps);
    }
    log << "density-probe: N = " << est.N << ", mass " << est.mass() << '\n';
    out.commit(code);
    return code;
}

int cmd_hormander_check(const CliOptions& opt, std::ostream& log)
{
    if (opt.system.empty() && opt.config.empty())
        throw std::invalid_argument("hormander-check: give a system name or file (or --config)");
    const std::string spec = opt.system.empty() ? opt.config.string() : opt.system;
    HormanderSystem sys = fs::exists(spec) ? load_system(spec) : HormanderSystem::builtin(spec);
    if (opt.depth < 0 || opt.samples < 1 || !(opt.half_width > 0.0))
        throw std::invalid_argument("hormander-check: depth >= 0, samples >= 1 and half width > 0 required");
    const int n = sys.dim();
    const Domain region = Domain::box(std::vector<int>(n, 8), std::vector<double>(n, opt.half_width));
    const ConditionReport rep = check_condition(sys, region, opt.samples, opt.depth);

    log << "system " << sys.name() << " (n = " << n << "): " << (rep.pass ? "PASS" : "FAIL") << '\n';
    log << "  points " << rep.points << ", worst rank " << rep.worst_rank << ", depth used " << rep.max_depth_used
        << '\n';
    log << "  depth histogram:";
    for (std::size_t i = 0; i < rep.depth_histogram.size(); ++i) {
        if (i + 1 == rep.depth_histogram.size())
            log << " fail=" << rep.depth_histogram[i];
        else
            log << " d" << i << '=' << rep.depth_histogram[i];
    }
    log << '\n';
    const std::size_t shown = std::min<std::size_t>(rep.witnesses.size(), 5);
    for (std::size_t w = 0; w < shown; ++w) {
        log << "  witness (";
        for (std::size_t a = 0; a < rep.witnesses[w].size(); ++a)
            log << (a ? ", " : "") << rep.witnesses[w][a];
        log << ")\n";
    }
    const int code = rep.pass ? exit_ok : exit_hormander_fail;
    if (!opt.out.empty()) {
        OutputDir out(opt.out, opt, thread_budget());
        write_json(out.path() / "report.json", {{"system", sys.name()},
                                                {"n", n},
                                                {"pass", rep.pass},
                                                {"points", rep.points},
                                                {"worst_rank", rep.worst_rank},
                                                {"max_depth_used", rep.max_depth_used},
                                                {"depth_histogram", rep.depth_histogram},
                                                {"witnesses", rep.witnesses}});
        out.commit(code);
    }
    return code;
}

int cmd_decay_audit(const CliOptions& opt, std::ostream& log)
{
    const RunConfig cfg = load_with_overrides(opt);
    require_scheme(cfg, "decay-audit");
    if (cfg.scheme.domain.is_torus())
        throw ConfigError("$.domain.kind", "decay-audit needs a box domain");
    OutputDir out(opt.out, opt, thread_budget());
    const DecayAudit audit = decay_audit(cfg.scheme, cfg.decay.orders, cfg.decay.tolerance);
    json rep = audit.to_json();
    rep["schema_version"] = config_schema_version;
    rep["command"] = "decay-audit";
    rep["config"] = cfg.source;
    const bool ok = audit.pass;
    if (cfg.envelope) {
        const EnvelopeSpec& e = *cfg.envelope;
        double m = 0.0, nexp = 0.0;
        if (e.fit) {
            EnvelopeProbe probe;
            probe.steps = e.steps;
            probe.grid_points = e.grid_points;
            const KSEnvelope env = fit_ks_envelope(cfg.scheme.sys, e.taus, e.base_points, e.N, cfg.seed, probe);
            m = env.m_exp;
            nexp = env.n_exp;
            rep["envelope"] = {{"A", env.A}, {"B", env.B}, {"m_exp", m}, {"n_exp", nexp}, {"residual", env.residual}};
        } else {
            m = *e.m_exp;
            nexp = *e.n_exp;
        }
        const BudgetCheck b = decay_budget_check(cfg.scheme.domain.dim(), cfg.scheme.q, m, nexp);
        rep["budget"] = b.to_json();
        log << "decay-audit: theorem budget " << b.theorem_threshold << " (margin " << b.theorem_margin
            << "), lemma budget " << b.lemma_threshold << " (margin " << b.lemma_margin << ")\n";
    }
    write_json(out.path() / "report.json", rep);

    std::vector<double> ks, qs;
    for (const auto& d : audit.increments)
        if (d.fit) {
            ks.push_back(d.k);
            qs.push_back(d.fit->q_hat);
        }
    fs::create_directories(out.path() / "plots");
    write_columns(out.path() / "plots" / "q_hat.txt", ks, qs);

    log << "decay-audit: data q_hat = ";
    if (audit.data.fit)
        log << audit.data.fit->q_hat;
    else
        log << (audit.data.zero ? "zero field" : audit.data.error);
    log << ", threshold " << audit.threshold << '\n';
    for (const auto& d : audit.increments) {
        log << "  k=" << d.k << ": ";
        if (d.zero)
            log << "zero\n";
        else if (d.fit)
            log << "q_hat " << d.fit->q_hat << (d.fit->saturated ? " (saturated)" : "") << '\n';
        else
            log << d.error << '\n';
    }
    log << "decay-audit: " << (ok ? "pass" : "fail") << '\n';
    const int code = ok ? exit_ok : exit_warnings;
    out.commit(code);
    return code;
}

int run_cli(int argc, char** argv)
{
    CLI::App app{"nslab: Picard-Leray scheme experiments for Navier-Stokes with Hormander diffusions"};
    app.require_subcommand(1);
    CliOptions opt;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string strategy;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", opt.config, "configuration file (JSON)");
        if (needs_config)
            c->required();
        sub->add_option("--out", opt.out, "output directory");
        sub->add_option("--seed", seed, "random seed (overrides the config)");
        sub->add_option("--threads", threads, "thread budget (overrides SOLVER_THREADS)");
        sub->add_option("--strategy", strategy, "control strategy (overrides the config)");
    };
    auto* run = app.add_subcommand("run", "run the global scheme");
    common(run, true);
    auto* audit = app.add_subcommand("contraction-audit", "record Picard contraction ratios");
    common(audit, true);
    auto* density = app.add_subcommand("density-probe", "Monte Carlo density and envelope fit");
    common(density, true);
    auto* hoer = app.add_subcommand("hormander-check", "rank test of the bracket-generating condition");
    common(hoer, false);
    hoer->add_option("system", opt.system, "built-in name or system file");
    hoer->add_option("--depth", opt.depth, "maximal bracket depth")->capture_default_str();
    hoer->add_option("--samples", opt.samples, "quasi-random sample points")->capture_default_str();
    hoer->add_option("--half-width", opt.half_width, "half width of the sampled cube")->capture_default_str();
    auto* decay = app.add_subcommand("decay-audit", "decay orders of the Picard increments");
    common(decay, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_error;
    }
    CLI::App* sub = app.get_subcommands().front();
    opt.command = sub->get_name();
    if (sub->count("--seed"))
        opt.seed = seed;
    if (sub->count("--threads"))
        opt.threads = threads;
    if (sub->count("--strategy"))
        opt.strategy = strategy;

    try {
        set_thread_budget(resolve_threads(opt.threads));
        if (opt.command == "run")
            return cmd_run(opt, std::cout);
        if (opt.command == "contraction-audit")
            return cmd_contraction_audit(opt, std::cout);
        if (opt.command == "density-probe")
            return cmd_density_probe(opt, std::cout);
        if (opt.command == "hormander-check")
            return cmd_hormander_check(opt, std::cout);
        if (opt.command == "decay-audit")
            return cmd_decay_audit(opt, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "nslab: configuration error at " << e.what() << '\n';
        return exit_error;
    } catch (const std::exception& e) {
        std::cerr << "nslab: " << e.what() << '\n';
        return exit_error;
    }
    return exit_error;
}

} // namespace nslab
