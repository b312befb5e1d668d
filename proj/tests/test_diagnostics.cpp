#include "nslab/diagnostics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace nslab;

namespace {

Field radial(const Domain& d, double scale, double (*profile)(double))
{
    return sample(d, 1, [&](std::span<const double> x, int) {
        double r2 = 0.0;
        for (double v : x)
            r2 += v * v;
        return profile(scale * std::sqrt(r2));
    });
}

double algebraic4(double r) { return 1.0 / (1.0 + std::pow(r, 4)); }
double gaussian(double r) { return std::exp(-r * r); }

ContractionRecord record(int l, std::vector<double> norms)
{
    ContractionRecord rec;
    rec.l = l;
    rec.rho = 0.01;
    rec.bound_rho = 0.01;
    rec.k_max = static_cast<int>(norms.size());
    rec.increment_norms = norms;
    rec.increment_norms_h4 = norms;
    for (std::size_t k = 1; k < norms.size(); ++k)
        rec.ratios.push_back(norms[k] / norms[k - 1]);
    return rec;
}

} // namespace

TEST_CASE("decay order of an algebraic profile")
{
    const Domain d = Domain::box({128, 128}, {16.0, 16.0});
    const auto fit = decay_order(radial(d, 1.0, algebraic4), {0});
    CHECK(fit.q_hat == doctest::Approx(4.0).epsilon(0.075));
    CHECK_FALSE(fit.saturated);
    CHECK(fit.r2 >= 0.0);
    CHECK(fit.r2 <= 1.0);
    CHECK(fit.radii.size() >= 4);
    CHECK(fit.radii.size() == fit.sups.size());

    // derivatives of the same profile decay one order faster
    const auto fd = decay_order(radial(d, 1.0, algebraic4), {1});
    CHECK(fd.q_hat == doctest::Approx(5.0).epsilon(0.1));
}

TEST_CASE("decay order is scale invariant")
{
    const Domain d = Domain::box({128, 128}, {16.0, 16.0});
    const double q1 = decay_order(radial(d, 1.0, algebraic4), {0}).q_hat;
    const double q2 = decay_order(radial(d, 1.5, algebraic4), {0}).q_hat;
    CHECK(std::abs(q1 - q2) < 0.3);
}

TEST_CASE("decay order rejects degenerate inputs")
{
    const Domain d = Domain::box({64, 64}, {16.0, 16.0});
    CHECK_THROWS_WITH_AS(decay_order(Field::scalar(d), {0}), doctest::Contains("insufficient shells"),
                         std::runtime_error);
    CHECK_THROWS_AS(decay_order(Field::scalar(Domain::torus({16, 16}, {1.0, 1.0})), {0}), std::invalid_argument);
    CHECK_THROWS_AS(decay_order(radial(d, 1.0, algebraic4), {}), std::invalid_argument);
}

TEST_CASE("Gaussian decay saturates")
{
    const Domain d = Domain::box({128, 128}, {16.0, 16.0});
    const auto fit = decay_order(radial(d, 1.0, gaussian), {0, 1});
    CHECK(fit.saturated);
    CHECK(fit.q_hat >= 50.0);
}

TEST_CASE("contraction table of a geometric sequence")
{
    const auto t = contraction_table({record(1, {0.2, 0.1, 0.05, 0.025})});
    CHECK(t.summary.ratios_le_half);
    CHECK(t.summary.first_increment_le_quarter);
    CHECK(t.summary.violations.empty());
    CHECK_FALSE(t.summary.has_trend);
    CHECK(std::count(t.csv.begin(), t.csv.end(), '\n') == 5);
    CHECK(t.csv.rfind("l,k,rho,bound_rho,norm_h2,norm_h4,ratio\n", 0) == 0);

    const auto g = contraction_table({record(1, {1, 0.5, 0.25, 0.125})});
    CHECK(g.summary.ratios_le_half);
    CHECK_FALSE(g.summary.first_increment_le_quarter);
}

TEST_CASE("contraction table records violations and l-trend")
{
    std::vector<ContractionRecord> recs;
    for (int l = 1; l <= 8; ++l)
        recs.push_back(record(l, {0.1, 0.04 / std::sqrt(l), 0.012 / std::sqrt(l)}));
    recs.push_back(record(9, {0.3, 0.27}));
    const auto t = contraction_table(recs);
    CHECK_FALSE(t.summary.ratios_le_half);
    CHECK_FALSE(t.summary.first_increment_le_quarter);
    CHECK(t.summary.violations.size() == 2);
    CHECK(t.summary.has_trend);
    const auto j = t.summary.to_json();
    CHECK(j.at("violations").size() == 2);

    recs.pop_back();
    const auto clean = contraction_table(recs);
    CHECK(clean.summary.l_trend_slope == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(clean.summary.l_trend_r2 == doctest::Approx(1.0));
    // pure function of the records
    CHECK(contraction_table(recs).csv == clean.csv);
}

TEST_CASE("growth regression recovers exact laws")
{
    std::vector<double> xs, lin, sq;
    for (int i = 1; i <= 12; ++i) {
        xs.push_back(i);
        lin.push_back(3.0 * i + 1.0);
        sq.push_back(2.0 * std::sqrt(i));
    }
    const auto a = growth_regression(xs, lin, GrowthModel::linear);
    CHECK(a.a == doctest::Approx(3.0));
    CHECK(a.b == doctest::Approx(1.0));
    CHECK(a.r2 == doctest::Approx(1.0));
    CHECK(a.ci_low <= 3.0 + 1e-9);
    CHECK(a.ci_high >= 3.0 - 1e-9);
    const auto s = growth_regression(xs, sq, GrowthModel::sqrt);
    CHECK(s.a == doctest::Approx(2.0));
    CHECK(std::abs(s.b) < 1e-12);
    CHECK(s.r2 == doctest::Approx(1.0));
    const auto c = growth_regression(xs, std::vector<double>(12, 4.0), GrowthModel::constant);
    CHECK(c.a == doctest::Approx(4.0));
    CHECK(c.to_json().at("model") == "constant");
}

TEST_CASE("growth regression preconditions")
{
    std::vector<double> xs(10, 2.0), ys(10, 1.0);
    CHECK_THROWS_AS(growth_regression(xs, ys, GrowthModel::linear), std::invalid_argument);
    CHECK_THROWS_AS(growth_regression({1, 2, 3}, {1, 2, 3}, GrowthModel::linear), std::invalid_argument);
    CHECK_THROWS_AS(growth_regression(std::vector<double>(11, 1.0), ys, GrowthModel::linear),
                    std::invalid_argument);
}

TEST_CASE("growth regression is invariant under reordering")
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::vector<std::pair<double, double>> pts;
    for (int i = 1; i <= 30; ++i)
        pts.emplace_back(i, 0.7 * i + noise(rng));
    auto split = [](const std::vector<std::pair<double, double>>& p) {
        std::vector<double> x, y;
        for (const auto& [a, b] : p) {
            x.push_back(a);
            y.push_back(b);
        }
        return growth_regression(x, y, GrowthModel::linear);
    };
    const auto f1 = split(pts);
    std::shuffle(pts.begin(), pts.end(), rng);
    const auto f2 = split(pts);
    CHECK(f1.a == doctest::Approx(f2.a).epsilon(1e-12));
    CHECK(f1.r2 == doctest::Approx(f2.r2).epsilon(1e-12));
    CHECK(f1.ci_low < 0.7);
    CHECK(f1.ci_high > 0.7);
}

TEST_CASE("Student t quantile")
{
    CHECK(student_t975(10) == doctest::Approx(2.228).epsilon(2e-3));
    CHECK(student_t975(30) == doctest::Approx(2.042).epsilon(1e-3));
    CHECK(student_t975(1000) == doctest::Approx(1.962).epsilon(1e-3));
}
