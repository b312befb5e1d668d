#include "nslab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nslab {

namespace {
GrowthFit least_squares(const std::vector<double>& xs, const std::vector<double>& ys, GrowthModel model);
}

DecayFit decay_order(const Field& f, const std::vector<int>& derivative_orders, const DecayOptions& opt)
{
    const Domain& d = f.domain();
    const int n = d.dim();
    if (d.is_torus())
        throw std::invalid_argument("decay_order: needs a box domain");
    if (derivative_orders.empty())
        throw std::invalid_argument("decay_order: no derivative orders");
    if (!(opt.shell_factor > 1.0))
        throw std::invalid_argument("decay_order: shell factor must exceed 1");

    // pointwise max over components and requested derivatives
    std::vector<double> mag(d.size(), 0.0);
    for (int order : derivative_orders) {
        if (order < 0 || order > 4)
            throw std::invalid_argument("decay_order: derivative orders must lie in 0..4");
        for (const auto& alpha : multi_indices_of_order(n, order)) {
            const Field g = order == 0 ? f : derivative(f, alpha);
            for (int c = 0; c < g.components(); ++c) {
                const auto src = g.component(c);
                for (std::size_t p = 0; p < mag.size(); ++p)
                    mag[p] = std::max(mag[p], std::abs(src[p]));
            }
        }
    }
    const double global = *std::max_element(mag.begin(), mag.end());

    double r_out = d.extent()[0];
    for (double a : d.extent())
        r_out = std::min(r_out, a);
    double h = 0.0;
    for (double s : d.spacing())
        h = std::max(h, s);
    const double r0 = opt.r_min > 0.0 ? opt.r_min : 4.0 * h;

    std::vector<double> radii;
    for (double r = r0; r * opt.shell_factor <= r_out * (1.0 + 1e-12); r *= opt.shell_factor)
        radii.push_back(r);
    std::vector<double> sups(radii.size(), 0.0);
    std::vector<double> x(n);
    const double log_f = std::log(opt.shell_factor);
    for (std::size_t p = 0; p < d.size(); ++p) {
        d.point(p, x);
        double r = 0.0;
        for (double v : x)
            r += v * v;
        r = std::sqrt(r);
        if (r < r0)
            continue;
        const auto s = static_cast<std::size_t>(std::floor(std::log(r / r0) / log_f + 1e-12));
        if (s < sups.size())
            sups[s] = std::max(sups[s], mag[p]);
    }

    DecayFit fit;
    const double floor = 1e3 * std::numeric_limits<double>::epsilon() * global;
    bool dropped_outer = false;
    for (std::size_t s = 0; s < radii.size(); ++s) {
        if (sups[s] > floor && sups[s] > 0.0) {
            if (dropped_outer)
                continue; // resurfacing after a gap is boundary noise
            fit.radii.push_back(radii[s]);
            fit.sups.push_back(sups[s]);
        } else if (!fit.radii.empty()) {
            dropped_outer = true;
        }
    }
    if (fit.radii.empty())
        throw std::runtime_error("decay_order: insufficient shells (field vanishes)");
    if (fit.radii.size() < 4) {
        if (dropped_outer) {
            fit.q_hat = opt.q_max;
            fit.saturated = true;
            return fit;
        }
        throw std::runtime_error("decay_order: insufficient shells");
    }
    std::vector<double> lr, ls;
    const std::size_t start = fit.radii.size() / 2;
    for (std::size_t s = start; s < fit.radii.size(); ++s) {
        lr.push_back(std::log(fit.radii[s]));
        ls.push_back(std::log(fit.sups[s]));
    }
    fit.fitted_shells = lr.size();
    const GrowthFit g = least_squares(lr, ls, GrowthModel::linear);
    fit.r2 = g.r2;
    // the field drops below round-off inside the box: faster than any power
    if (dropped_outer || -g.a >= opt.q_max) {
        fit.q_hat = opt.q_max;
        fit.saturated = true;
    } else {
        fit.q_hat = -g.a;
    }
    return fit;
}

nlohmann::json ContractionSummary::to_json() const
{
    nlohmann::json j{{"ratios_le_half", ratios_le_half},
                     {"first_increment_le_quarter", first_increment_le_quarter},
                     {"violations", violations}};
    if (has_trend) {
        j["l_trend_slope"] = l_trend_slope;
        j["l_trend_r2"] = l_trend_r2;
    } else {
        j["l_trend_slope"] = nullptr;
        j["l_trend_r2"] = nullptr;
    }
    return j;
}

ContractionTable contraction_table(const std::vector<ContractionRecord>& records)
{
    ContractionTable t;
    std::ostringstream csv;
    csv.precision(17);
    csv << "l,k,rho,bound_rho,norm_h2,norm_h4,ratio\n";
    std::vector<double> ls, r2s;
    for (const auto& rec : records) {
        for (std::size_t k = 0; k < rec.increment_norms.size(); ++k) {
            csv << rec.l << ',' << k + 1 << ',' << rec.rho << ',' << rec.bound_rho << ',' << rec.increment_norms[k]
                << ',' << (k < rec.increment_norms_h4.size() ? rec.increment_norms_h4[k] : 0.0) << ',';
            if (k >= 1)
                csv << rec.ratios[k - 1];
            csv << '\n';
        }
        if (!rec.increment_norms.empty() && rec.increment_norms[0] > 0.25) {
            t.summary.first_increment_le_quarter = false;
            t.summary.violations.push_back("l=" + std::to_string(rec.l) + ": first increment above 1/4");
        }
        for (std::size_t k = 0; k < rec.ratios.size(); ++k)
            if (rec.ratios[k] > 0.5) {
                t.summary.ratios_le_half = false;
                t.summary.violations.push_back("l=" + std::to_string(rec.l) + " k=" + std::to_string(k + 2) +
                                               ": ratio above 1/2");
            }
        if (!rec.ratios.empty() && rec.ratios[0] > 0.0) {
            ls.push_back(std::log(static_cast<double>(rec.l)));
            r2s.push_back(std::log(rec.ratios[0]));
        }
    }
    // a trend needs distinct l values
    if (ls.size() >= 3 && *std::max_element(ls.begin(), ls.end()) > *std::min_element(ls.begin(), ls.end())) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < ls.size(); ++i) {
            mx += ls[i];
            my += r2s[i];
        }
        mx /= ls.size();
        my /= ls.size();
        double sxx = 0, sxy = 0, syy = 0;
        for (std::size_t i = 0; i < ls.size(); ++i) {
            sxx += (ls[i] - mx) * (ls[i] - mx);
            sxy += (ls[i] - mx) * (r2s[i] - my);
            syy += (r2s[i] - my) * (r2s[i] - my);
        }
        t.summary.has_trend = true;
        t.summary.l_trend_slope = sxy / sxx;
        t.summary.l_trend_r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    }
    t.csv = csv.str();
    return t;
}

std::string to_string(GrowthModel m)
{
    switch (m) {
    case GrowthModel::linear:
        return "linear";
    case GrowthModel::sqrt:
        return "sqrt";
    case GrowthModel::constant:
        return "constant";
    }
    return "?";
}

nlohmann::json GrowthFit::to_json() const
{
    return {{"model", to_string(model)}, {"a", a}, {"b", b}, {"r2", r2}, {"ci", {ci_low, ci_high}}};
}

double student_t975(int dof)
{
    if (dof < 1)
        throw std::invalid_argument("student_t975: need at least one degree of freedom");
    const double z = 1.959963984540054;
    const double v = dof;
    const double z3 = z * z * z, z5 = z3 * z * z, z7 = z5 * z * z;
    return z + (z3 + z) / (4 * v) + (5 * z5 + 16 * z3 + 3 * z) / (96 * v * v) +
           (3 * z7 + 19 * z5 + 17 * z3 - 15 * z) / (384 * v * v * v);
}

namespace {

GrowthFit least_squares(const std::vector<double>& xs, const std::vector<double>& ys, GrowthModel model)
{
    if (xs.size() != ys.size())
        throw std::invalid_argument("growth_regression: xs and ys differ in length");
    const std::size_t N = xs.size();
    if (N < 2)
        throw std::invalid_argument("growth_regression: too few points");
    GrowthFit fit;
    fit.model = model;
    double my = 0.0;
    for (double y : ys)
        my += y;
    my /= N;
    double syy = 0.0;
    for (double y : ys)
        syy += (y - my) * (y - my);

    if (model == GrowthModel::constant) {
        fit.a = my;
        fit.r2 = 0.0;
        const double sd = std::sqrt(syy / (N - 1));
        const double half = student_t975(static_cast<int>(N) - 1) * sd / std::sqrt(static_cast<double>(N));
        fit.ci_low = my - half;
        fit.ci_high = my + half;
        return fit;
    }
    std::vector<double> g(N);
    for (std::size_t i = 0; i < N; ++i) {
        if (model == GrowthModel::sqrt && xs[i] < 0.0)
            throw std::invalid_argument("growth_regression: sqrt model needs non-negative x");
        g[i] = model == GrowthModel::linear ? xs[i] : std::sqrt(xs[i]);
    }
    double mg = 0.0;
    for (double v : g)
        mg += v;
    mg /= N;
    double sgg = 0.0, sgy = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        sgg += (g[i] - mg) * (g[i] - mg);
        sgy += (g[i] - mg) * (ys[i] - my);
    }
    if (!(sgg > 1e-300 * (1.0 + mg * mg)) || sgg <= 1e-14 * N * (1.0 + mg * mg))
        throw std::invalid_argument("growth_regression: degenerate design matrix");
    fit.a = sgy / sgg;
    fit.b = my - fit.a * mg;
    double sse = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double e = ys[i] - fit.a * g[i] - fit.b;
        sse += e * e;
    }
    fit.r2 = syy > 0.0 ? std::max(0.0, 1.0 - sse / syy) : 1.0;
    if (N > 2) {
        const double se = std::sqrt(sse / (N - 2) / sgg);
        const double half = student_t975(static_cast<int>(N) - 2) * se;
        fit.ci_low = fit.a - half;
        fit.ci_high = fit.a + half;
    } else {
        fit.ci_low = -std::numeric_limits<double>::infinity();
        fit.ci_high = std::numeric_limits<double>::infinity();
    }
    return fit;
}

} // namespace

GrowthFit growth_regression(const std::vector<double>& xs, const std::vector<double>& ys, GrowthModel model)
{
    if (xs.size() < 10)
        throw std::invalid_argument("growth_regression: needs at least 10 points");
    return least_squares(xs, ys, model);
}

} // namespace nslab
