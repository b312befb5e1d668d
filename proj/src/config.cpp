#include "nslab/config.hpp"

#include "nslab/fixtures.hpp"
#include "nslab/snapshot.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace nslab {
namespace {

using json = nlohmann::json;

// Walks one JSON object, remembering its path and rejecting unknown keys.
class Section {
public:
    Section(const json& j, std::string path, std::set<std::string> known) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError(path_, "expected an object");
        for (const auto& [key, _] : j_.items())
            if (!known.count(key))
                throw ConfigError(child(key), "unknown key");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    const json& at(const std::string& key) const
    {
        if (!has(key))
            throw ConfigError(child(key), "missing");
        return j_.at(key);
    }
    std::string child(const std::string& key) const { return path_ + "." + key; }

    double number(const std::string& key, double fallback) const
    {
        return has(key) ? number(key) : fallback;
    }
    double number(const std::string& key) const
    {
        const json& v = at(key);
        if (!v.is_number())
            throw ConfigError(child(key), "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x))
            throw ConfigError(child(key), "must be finite");
        return x;
    }
    double positive(const std::string& key, double fallback) const
    {
        const double x = number(key, fallback);
        if (!(x > 0.0))
            throw ConfigError(child(key), "must be positive");
        return x;
    }
    long long integer(const std::string& key, long long fallback, long long lo) const
    {
        if (!has(key))
            return fallback;
        const json& v = at(key);
        // 1e6 style literals are accepted when integral
        if (!v.is_number() || (v.is_number_float() && std::floor(v.get<double>()) != v.get<double>()))
            throw ConfigError(child(key), "expected an integer");
        const long long x = v.is_number_float() ? static_cast<long long>(v.get<double>()) : v.get<long long>();
        if (x < lo)
            throw ConfigError(child(key), "must be at least " + std::to_string(lo));
        return x;
    }
    std::string string(const std::string& key, const std::string& fallback) const
    {
        if (!has(key))
            return fallback;
        if (!at(key).is_string())
            throw ConfigError(child(key), "expected a string");
        return at(key).get<std::string>();
    }
    bool boolean(const std::string& key, bool fallback) const
    {
        if (!has(key))
            return fallback;
        if (!at(key).is_boolean())
            throw ConfigError(child(key), "expected true or false");
        return at(key).get<bool>();
    }
    std::vector<double> numbers(const std::string& key) const
    {
        const json& v = at(key);
        if (!v.is_array() || v.empty())
            throw ConfigError(child(key), "expected a non-empty list of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number())
                throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected a number");
            out.push_back(v[i].get<double>());
        }
        return out;
    }
    std::vector<int> integers(const std::string& key) const
    {
        const json& v = at(key);
        if (!v.is_array() || v.empty())
            throw ConfigError(child(key), "expected a non-empty list of integers");
        std::vector<int> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number_integer())
                throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected an integer");
            out.push_back(v[i].get<int>());
        }
        return out;
    }

private:
    const json& j_;
    std::string path_;
};

HormanderSystem parse_system_entry(const json& j, const std::string& path, const std::filesystem::path& base)
{
    try {
        if (j.is_string()) {
            const std::string name = j.get<std::string>();
            const std::filesystem::path file = base / name;
            if (std::filesystem::exists(file))
                return load_system(file.string());
            return HormanderSystem::builtin(name);
        }
        if (j.is_object())
            return parse_system(j.dump());
    } catch (const std::exception& e) {
        throw ConfigError(path, e.what());
    }
    throw ConfigError(path, "expected a built-in name, a system file or a system object");
}

Domain parse_domain(const Section& root)
{
    const Section s(root.at("domain"), root.child("domain"), {"kind", "shape", "extent"});
    const std::string kind = s.string("kind", "torus");
    if (kind != "torus" && kind != "box")
        throw ConfigError(s.child("kind"), "expected torus or box");
    const std::vector<int> shape = s.integers("shape");
    std::vector<double> extent;
    if (s.has("extent")) {
        extent = s.numbers("extent");
    } else if (kind == "torus") {
        extent.assign(shape.size(), 2.0 * std::numbers::pi);
    } else {
        throw ConfigError(s.child("extent"), "missing (half widths of the box)");
    }
    try {
        if (kind == "torus")
            return Domain::torus(shape, extent);
        return Domain::box(shape, extent);
    } catch (const std::exception& e) {
        throw ConfigError(root.child("domain"), e.what());
    }
}

InitialSpec parse_initial(const Section& root, std::uint64_t seed)
{
    InitialSpec spec;
    spec.seed = seed;
    if (!root.has("initial"))
        return spec;
    const Section s(root.at("initial"), root.child("initial"),
                    {"type", "amplitude", "kmax", "seed", "q", "radius", "path"});
    spec.type = s.string("type", "zero");
    static const std::set<std::string> types{"zero", "taylor_green", "random_divfree", "swirl_ring", "snapshot"};
    if (!types.count(spec.type))
        throw ConfigError(s.child("type"), "unknown initial data '" + spec.type + "'");
    spec.amplitude = s.number("amplitude", 1.0);
    spec.kmax = static_cast<int>(s.integer("kmax", 4, 1));
    spec.seed = static_cast<std::uint64_t>(s.integer("seed", static_cast<long long>(seed), 0));
    spec.q = s.positive("q", 6.0);
    spec.radius = s.positive("radius", 1.5);
    if (spec.type == "snapshot")
        spec.path = s.string("path", "");
    return spec;
}

DensitySpec parse_density(const Section& root, const std::filesystem::path& base)
{
    const Section s(root.at("density"), root.child("density"),
                    {"system", "x0", "tau", "N", "steps", "grid", "bandwidth", "oracle", "region", "tolerance"});
    DensitySpec d;
    if (s.has("system"))
        d.sys = parse_system_entry(s.at("system"), s.child("system"), base);
    const int n = d.sys.dim();
    d.x0 = s.has("x0") ? s.numbers("x0") : std::vector<double>(n, 0.0);
    if (static_cast<int>(d.x0.size()) != n)
        throw ConfigError(s.child("x0"), "expected " + std::to_string(n) + " coordinates");
    d.tau = s.positive("tau", 1.0);
    d.N = static_cast<int>(s.integer("N", 100000, 0));
    d.steps = static_cast<int>(s.integer("steps", 256, 16));
    if (s.has("grid")) {
        const Section g(s.at("grid"), s.child("grid"), {"shape", "half_width"});
        d.grid_shape = g.integers("shape");
        d.grid_half_width = g.numbers("half_width");
    } else {
        d.grid_shape.assign(n, 64);
        d.grid_half_width.assign(n, 4.0);
    }
    if (static_cast<int>(d.grid_shape.size()) != n || static_cast<int>(d.grid_half_width.size()) != n)
        throw ConfigError(s.child("grid"), "grid dimension differs from the system");
    if (s.has("bandwidth")) {
        const json& b = s.at("bandwidth");
        if (b.is_string() && b.get<std::string>() == "auto")
            d.bandwidth.reset();
        else
            d.bandwidth = s.positive("bandwidth", 1.0);
    }
    d.oracle = s.string("oracle", "none");
    if (d.oracle != "none" && d.oracle != "gaussian" && d.oracle != "kolmogorov")
        throw ConfigError(s.child("oracle"), "expected none, gaussian or kolmogorov");
    if (d.oracle == "gaussian" && !d.sys.is_heat())
        throw ConfigError(s.child("oracle"), "the Gaussian oracle needs a constant-coefficient heat system");
    if (d.oracle == "kolmogorov" && (d.sys.name() != "kolmogorov" || std::abs(d.sys.nu() - 0.5) > 1e-15))
        throw ConfigError(s.child("oracle"), "the Kolmogorov oracle needs the kolmogorov built-in with nu = 1/2");
    d.region = s.positive("region", d.oracle == "kolmogorov" ? 1.5 : 2.0);
    d.tolerance = s.positive("tolerance", 0.05);
    return d;
}

EnvelopeSpec parse_envelope(const Section& root)
{
    const Section s(root.at("envelope"), root.child("envelope"),
                    {"taus", "base_points", "N", "steps", "grid_points", "m_exp", "n_exp"});
    EnvelopeSpec e;
    if (s.has("m_exp") || s.has("n_exp")) {
        e.m_exp = s.number("m_exp");
        e.n_exp = s.number("n_exp");
        if (s.has("taus") || s.has("base_points"))
            throw ConfigError(root.child("envelope"), "give either fitted-probe settings or hand-fed exponents");
        return e;
    }
    e.fit = true;
    e.taus = s.numbers("taus");
    const json& bp = s.at("base_points");
    if (!bp.is_array())
        throw ConfigError(s.child("base_points"), "expected a list of points");
    for (std::size_t i = 0; i < bp.size(); ++i) {
        std::vector<double> p;
        if (!bp[i].is_array())
            throw ConfigError(s.child("base_points") + "[" + std::to_string(i) + "]", "expected a point");
        for (const auto& v : bp[i]) {
            if (!v.is_number())
                throw ConfigError(s.child("base_points") + "[" + std::to_string(i) + "]", "expected numbers");
            p.push_back(v.get<double>());
        }
        e.base_points.push_back(std::move(p));
    }
    e.N = static_cast<int>(s.integer("N", 100000, 1));
    e.steps = static_cast<int>(s.integer("steps", 256, 16));
    e.grid_points = static_cast<int>(s.integer("grid_points", 64, 8));
    return e;
}

} // namespace

Field build_initial(const InitialSpec& spec, const Domain& domain, double nu)
{
    if (spec.type == "zero")
        return Field::vector(domain);
    if (spec.type == "taylor_green")
        return taylor_green(domain, nu, 0.0, spec.amplitude);
    if (spec.type == "random_divfree")
        return random_divfree(domain, spec.amplitude, spec.kmax, spec.seed);
    if (spec.type == "swirl_ring")
        return swirl_ring(domain, spec.q, spec.radius, spec.amplitude);
    if (spec.type == "snapshot") {
        Field f = read_snapshot(spec.path);
        if (f.domain() != domain || f.components() != domain.dim())
            throw ConfigError("$.initial.path", "snapshot grid differs from the configured domain");
        return f;
    }
    throw ConfigError("$.initial.type", "unknown initial data '" + spec.type + "'");
}

RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir)
{
    const Section root(doc, "$",
                       {"schema_version", "description", "system", "domain", "initial", "steps", "rho_schedule",
                        "control", "picard", "backend", "decay_q", "constants", "seed", "oracle", "store_samples",
                        "density", "envelope", "decay"});
    if (!root.has("schema_version"))
        throw ConfigError("$.schema_version", "missing");
    if (!root.at("schema_version").is_number_integer() ||
        root.at("schema_version").get<int>() != config_schema_version)
        throw ConfigError("$.schema_version", "unsupported version (expected " +
                                                  std::to_string(config_schema_version) + ")");
    if (root.has("description") && !root.at("description").is_string())
        throw ConfigError("$.description", "expected a string");

    RunConfig cfg;
    cfg.source = doc;
    cfg.base_dir = base_dir;
    cfg.seed = static_cast<std::uint64_t>(root.integer("seed", 0, 0));
    SchemeConfig& sc = cfg.scheme;
    sc.seed = cfg.seed;

    const bool has_scheme = root.has("domain");
    if (root.has("system"))
        sc.sys = parse_system_entry(root.at("system"), "$.system", base_dir);
    if (has_scheme) {
        sc.domain = parse_domain(root);
        if (!root.has("system"))
            sc.sys = HormanderSystem::classical(sc.domain.dim(), 0.1);
        if (sc.sys.dim() != sc.domain.dim())
            throw ConfigError("$.system", "dimension differs from the domain");
        cfg.initial = parse_initial(root, cfg.seed);
        if (!cfg.initial.path.empty() && cfg.initial.path.is_relative())
            cfg.initial.path = base_dir / cfg.initial.path;
        try {
            sc.initial = build_initial(cfg.initial, sc.domain, sc.sys.nu());
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("$.initial", e.what());
        }
    }
    sc.steps = static_cast<int>(root.integer("steps", 1, 1));

    if (root.has("rho_schedule")) {
        const Section s(root.at("rho_schedule"), "$.rho_schedule", {"mode", "value"});
        try {
            sc.rho.mode = rho_mode_from_string(s.string("mode", "bound"));
        } catch (const std::exception& e) {
            throw ConfigError(s.child("mode"), e.what());
        }
        sc.rho.value = s.positive("value", 1.0);
    }
    if (root.has("control")) {
        const Section s(root.at("control"), "$.control", {"strategy", "C", "r0", "decay_constant"});
        try {
            sc.strategy = strategy_from_string(s.string("strategy", "none"));
        } catch (const std::exception& e) {
            throw ConfigError(s.child("strategy"), e.what());
        }
        sc.C = s.number("C", 4.0);
        if (!(sc.C > 1.0))
            throw ConfigError(s.child("C"), "must exceed 1");
        const std::string r0 = s.string("r0", "zero");
        if (r0 == "zero")
            sc.r0 = InitialControl::zero;
        else if (r0 == "h_over_C")
            sc.r0 = InitialControl::h_over_C;
        else
            throw ConfigError(s.child("r0"), "expected zero or h_over_C");
        sc.decay_constant = s.positive("decay_constant", 1.0);
    }
    if (root.has("picard")) {
        const Section s(root.at("picard"), "$.picard", {"tol", "kmax", "samples"});
        sc.tol = s.positive("tol", 1e-10);
        sc.kmax = static_cast<int>(s.integer("kmax", 20, 1));
        sc.samples = static_cast<int>(s.integer("samples", 7, 3));
    }
    if (root.has("backend")) {
        try {
            sc.backend = backend_from_string(root.string("backend", "spectral"));
        } catch (const std::exception& e) {
            throw ConfigError("$.backend", e.what());
        }
    } else {
        sc.backend = sc.sys.is_heat() && (!has_scheme || sc.domain.is_torus()) ? Backend::spectral
                                                                                 : Backend::fd_substep;
    }
    sc.q = root.number("decay_q", 6.0);
    if (root.has("constants")) {
        const Section s(root.at("constants"), "$.constants", {"C_B", "C_G", "C_K", "c_n"});
        sc.constants.C_B = s.number("C_B", 0.0);
        sc.constants.C_G = s.positive("C_G", 1.0);
        sc.constants.C_K = s.number("C_K", 0.0);
        sc.constants.c_n = s.positive("c_n", 1.0);
    }
    sc.store_samples = root.boolean("store_samples", false);
    cfg.oracle = root.string("oracle", "none");
    if (cfg.oracle != "none" && cfg.oracle != "taylor_green")
        throw ConfigError("$.oracle", "expected none or taylor_green");
    if (cfg.oracle == "taylor_green" && (!has_scheme || cfg.initial.type != "taylor_green"))
        throw ConfigError("$.oracle", "the Taylor-Green oracle needs taylor_green initial data");

    if (root.has("density"))
        cfg.density = parse_density(root, base_dir);
    if (root.has("envelope"))
        cfg.envelope = parse_envelope(root);
    if (root.has("decay")) {
        const Section s(root.at("decay"), "$.decay", {"orders", "tolerance"});
        if (s.has("orders"))
            cfg.decay.orders = s.integers("orders");
        cfg.decay.tolerance = s.positive("tolerance", 0.5);
    }

    if (has_scheme) {
        try {
            sc.validate();
        } catch (const std::exception& e) {
            throw ConfigError("$", e.what());
        }
    }
    return cfg;
}

RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("$", std::string("malformed JSON: ") + e.what());
    }
    return parse_config(doc, base_dir);
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(path.string(), "cannot open configuration file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.parent_path());
}

void override_seed(RunConfig& cfg, std::uint64_t seed)
{
    cfg.source["seed"] = seed;
    cfg = parse_config(cfg.source, cfg.base_dir);
}

void override_strategy(RunConfig& cfg, const std::string& strategy)
{
    cfg.source["control"]["strategy"] = strategy;
    cfg = parse_config(cfg.source, cfg.base_dir);
}

} // namespace nslab
