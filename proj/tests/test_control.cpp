#include "nslab/control.hpp"

#include "nslab/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace nslab;

namespace {

constexpr double pi = std::numbers::pi;

double linf_diff(const Field& a, const Field& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

struct Step {
    LocalSolver solver;
    LocalState state;
};

Step converged_step(const Field& h, double rho, double nu = 0.1)
{
    Step s{LocalSolver(HormanderSystem::classical(2, nu), h.domain(), Backend::spectral),
           make_local_state(1, rho, h)};
    iterate_to_tolerance(s.solver, s.state, 1e-12, 12);
    return s;
}

ControlContext context(const Step& s, const Field& r_prev, double C = 4.0)
{
    ControlContext ctx;
    ctx.solver = &s.solver;
    ctx.state = &s.state;
    ctx.r_prev = r_prev;
    ctx.C = C;
    return ctx;
}

} // namespace

TEST_CASE("strategy names round-trip")
{
    for (auto s : {Strategy::none, Strategy::i, Strategy::ia, Strategy::ii, Strategy::iii, Strategy::iv, Strategy::v})
        CHECK(strategy_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(strategy_from_string("vi"), std::invalid_argument);
    CHECK(expected_law(Strategy::ii) == GrowthLaw::sqrt);
    CHECK(expected_law(Strategy::iii) == GrowthLaw::uniform);
}

TEST_CASE("control state construction")
{
    const Domain d = Domain::torus({16, 16}, {2 * pi, 2 * pi});
    const Field h = random_divfree(d, 1.0, 2, 1);
    CHECK_THROWS_AS(make_control_state(Strategy::ii, 1.0, h), std::invalid_argument);
    CHECK(norm(make_control_state(Strategy::ii, 4.0, h).r, Norm::linf()) == 0.0);
    const auto st = make_control_state(Strategy::iii, 4.0, h, InitialControl::h_over_C);
    CHECK(linf_diff(st.r, 0.25 * h) == 0.0);
}

TEST_CASE("strategy ii cancels the first increment exactly")
{
    const Domain d = Domain::torus({32, 32}, {2 * pi, 2 * pi});
    const Field h = random_divfree(d, 1.0, 3, 2);
    const auto s = converged_step(h, 0.05);
    auto ctrl = make_control_state(Strategy::ii, 4.0, h);
    const Field dr = control_increment(Strategy::ii, context(s, ctrl.r));
    CHECK(linf_diff(dr, -1.0 * s.state.increments[1].back()) == 0.0);
    CHECK(norm(dr, Norm::hm(2)) == norm(s.state.increments[1].back(), Norm::hm(2)));

    const auto out = apply_control(s.state, ctrl, dr);
    Field expect = h;
    for (std::size_t k = 2; k < s.state.increments.size(); ++k)
        expect += s.state.increments[k].back();
    CHECK(linf_diff(out.v_controlled, expect) < 1e-14);
    // physical solution recovered at step one with r0 = 0
    CHECK(linf_diff(out.v_controlled - out.r_new, s.state.solution()) < 1e-14);
    CHECK(linf_diff((out.v_controlled - out.r_new) + out.r_new, out.v_controlled) < 1e-14);
    REQUIRE(ctrl.ledger.size() == 1);
    CHECK(ctrl.ledger[0].r_linf == norm(out.r_new, Norm::linf()));
}

TEST_CASE("strategy none leaves the solution alone")
{
    const Domain d = Domain::torus({16, 16}, {2 * pi, 2 * pi});
    const Field h = random_divfree(d, 1.0, 2, 3);
    const auto s = converged_step(h, 0.05);
    auto ctrl = make_control_state(Strategy::none, 4.0, h);
    const Field dr = control_increment(Strategy::none, context(s, ctrl.r));
    const auto out = apply_control(s.state, ctrl, dr);
    CHECK(linf_diff(out.v_controlled, s.state.solution()) == 0.0);
    CHECK(norm(out.r_new, Norm::linf()) == 0.0);
    // ledger rows must increase in l
    CHECK_THROWS_AS(apply_control(s.state, ctrl, dr), std::invalid_argument);
}

TEST_CASE("strategy v vanishes on constants")
{
    const Domain d = Domain::torus({16, 16}, {2 * pi, 2 * pi});
    Field c = Field::vector(d);
    for (auto& x : c.data())
        x = 0.7;
    const auto s = converged_step(c, 0.05);
    const Field dr = control_increment(Strategy::v, context(s, Field::vector(d)));
    CHECK(norm(dr, Norm::linf()) < 1e-14);
}

TEST_CASE("strategy ia with a dominant source")
{
    const Domain d = Domain::torus({16, 16}, {2 * pi, 2 * pi});
    const double C = 4.0;
    Field c = Field::vector(d);
    for (auto& x : c.data())
        x = C;
    Step s{LocalSolver(HormanderSystem::classical(2, 0.1), d, Backend::spectral), make_local_state(1, 1e-6, c)};
    first_iterate(s.solver, s.state);
    const Field dr = control_increment(Strategy::ia, context(s, Field::vector(d), C));
    for (double x : dr.data())
        CHECK(x == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("damping strategies combine their sources")
{
    const Domain d = Domain::torus({16, 16}, {2 * pi, 2 * pi});
    const Field h = random_divfree(d, 1.0, 2, 4);
    const Field r = random_divfree(d, 0.5, 2, 5);
    const auto s = converged_step(h, 0.05);
    const auto ctx = context(s, r);
    const Field dv1 = s.state.increments[1].back();
    const Field a = control_duhamel(ctx, (-1.0 / 4.0) * h);
    const Field b = control_duhamel(ctx, (-1.0 / 16.0) * r);
    CHECK(linf_diff(control_increment(Strategy::i, ctx), a - dv1) < 1e-14);
    CHECK(linf_diff(control_increment(Strategy::ia, ctx), a) < 1e-14);
    CHECK(linf_diff(control_increment(Strategy::iii, ctx), a + b - dv1) < 1e-13);
    const Field c = control_duhamel(ctx, (-1.0 / 16.0) * h);
    const Field e = control_duhamel(ctx, (-1.0 / 4.0) * r);
    CHECK(linf_diff(control_increment(Strategy::iv, ctx), c + e - dv1) < 1e-13);

    // the first increment is required
    LocalState bare = make_local_state(1, 0.05, h);
    ControlContext missing = ctx;
    missing.state = &bare;
    CHECK_THROWS_AS(control_increment(Strategy::ii, missing), std::invalid_argument);
    CHECK_NOTHROW(control_increment(Strategy::ia, ControlContext{ctx}));
    missing.delta_v1 = dv1;
    CHECK_NOTHROW(control_increment(Strategy::ii, missing));
}

TEST_CASE("degenerate weight keeps the sign of the source")
{
    const Domain box = Domain::box({24, 24}, {4.0, 4.0});
    const auto sys = HormanderSystem::builtin("kolmogorov");
    LocalSolver solver(sys, box, Backend::fd_substep);
    Field h = Field::vector(box);
    h.data().assign(h.data().size(), 1.0);
    auto state = make_local_state(1, 1e-4, h);
    ControlContext ctx;
    ctx.solver = &solver;
    ctx.state = &state;
    ctx.q = 4.0;
    ctx.decay_constant = 2.0;
    const Field w = control_duhamel(ctx, (-1.0) * h);
    std::vector<double> x(2);
    for (std::size_t p = 0; p < box.size(); ++p) {
        box.point(p, x);
        const double weight = 4.0 / (1.0 + std::pow(std::hypot(x[0], x[1]), 4.0));
        CHECK(w.component(0)[p] < 0.0);
        CHECK(w.component(0)[p] == doctest::Approx(-weight).epsilon(1e-3));
    }
}

TEST_CASE("growth ledger check on synthetic ledgers")
{
    std::vector<LedgerEntry> lin, flat;
    for (int l = 1; l <= 12; ++l) {
        lin.push_back({l, 0.01, 0.7 * l, 0.7 * l, 2.0 * std::sqrt(l), 1.0});
        flat.push_back({l, 0.01, 0.3 * l, 0.3 * l, 1.0 + 0.1 / l, 1.0});
    }
    const auto a = growth_ledger_check(lin, Strategy::ii);
    CHECK(a.r_fit.a == doctest::Approx(0.7));
    CHECK(a.r_fit.r2 == doctest::Approx(1.0));
    CHECK(a.pass);
    const auto b = growth_ledger_check(flat, Strategy::iii);
    CHECK(b.vr_pass);
    CHECK(b.pass);
    // unbounded growth fails the uniform law
    CHECK_FALSE(growth_ledger_check(lin, Strategy::iii).vr_pass);
    CHECK_THROWS_AS(growth_ledger_check(std::vector<LedgerEntry>(lin.begin(), lin.begin() + 9), Strategy::ii),
                    std::invalid_argument);
    CHECK(ledger_csv(lin).rfind("l,rho_l,r_Linf,r_H2,vr_H2,v_H2\n", 0) == 0);
    CHECK(ledger_json(lin).size() == 12);
}
