#include <doctest.h>

#include "nslab/hoermander.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace nslab;

namespace {

constexpr double pi = std::numbers::pi;

HormanderSystem single_axis()
{
    return parse_system(R"({"n": 2, "fields": [[0, 0], [1, 0]]})");
}

// V_0 = 0, V_1 = d_x, V_2 = x d_y in R^2 with unit scaling
HormanderSystem dx_and_xdy()
{
    return parse_system(R"({"n": 2, "fields": [[0, 0], [1, 0], [0, [{"exp": [1, 0], "coef": 1}]]]})");
}

// random cubic polynomial fields in R^3
HormanderSystem random_poly_system(unsigned seed)
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

double max_abs(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    return m;
}

} // namespace

TEST_CASE("polynomial coefficients and derivatives")
{
    // f = 3 x^2 y - y^3 + 2
    auto f = ScalarFunction::polynomial(2, {{{2, 1}, 3.0}, {{0, 3}, -1.0}, {{0, 0}, 2.0}});
    const double x[2] = {1.5, -0.5};
    CHECK(f(x) == doctest::Approx(3 * 2.25 * -0.5 + 0.125 + 2));
    const int ax[2] = {1, 0}, ay2[2] = {0, 2}, axy[2] = {1, 1}, a5[2] = {3, 2};
    CHECK(f.derivative(x, ax) == doctest::Approx(6 * 1.5 * -0.5));
    CHECK(f.derivative(x, ay2) == doctest::Approx(-6 * -0.5));
    CHECK(f.derivative(x, axy) == doctest::Approx(6 * 1.5));
    CHECK_THROWS_AS(f.derivative(x, a5), std::invalid_argument);
    CHECK(ScalarFunction::constant(2, 4.0).is_constant());
    CHECK(!f.is_constant());
    CHECK_THROWS_AS(ScalarFunction::polynomial(2, {{{1}, 1.0}}), std::invalid_argument);
}

TEST_CASE("validation catches wrong analytic derivatives")
{
    auto good = ScalarFunction::closed_form(2, [](std::span<const double> x, std::span<const int> a) {
        // sin(x) e^y
        const int k = a[0] % 4;
        const double s = k == 0 ? std::sin(x[0]) : k == 1 ? std::cos(x[0]) : k == 2 ? -std::sin(x[0]) : -std::cos(x[0]);
        return s * std::exp(x[1]);
    });
    auto bad = ScalarFunction::closed_form(2, [](std::span<const double> x, std::span<const int> a) {
        return a[0] + a[1] == 0 ? std::sin(x[0]) : std::cos(x[0]);
    });
    auto make = [](const ScalarFunction& f) {
        std::vector<VectorField> fields{constant_field({0, 0}), {f, ScalarFunction::constant(2, 0)}};
        return HormanderSystem(2, fields, constant_field({1, 1}), {constant_field({1, 1}), constant_field({1, 1})},
                               constant_field({0, 0}), 0.5);
    };
    CHECK_NOTHROW(make(good).validate());
    CHECK_THROWS_AS(make(bad).validate(), std::domain_error);
}

TEST_CASE("lie brackets against symbolic oracles")
{
    const auto sys = dx_and_xdy();
    const auto V1 = BracketNode::generator(1), V2 = BracketNode::generator(2);
    const double x[2] = {0.7, -1.3};
    CHECK(max_abs(lie_bracket(V1, V1).evaluate(sys, x)) == 0.0);
    const auto b = lie_bracket(V1, V2).evaluate(sys, x);
    CHECK(b[0] == doctest::Approx(0.0));
    CHECK(b[1] == doctest::Approx(1.0));
    const auto ba = lie_bracket(V2, V1).evaluate(sys, x);
    CHECK(ba[1] == -b[1]);

    const auto h = HormanderSystem::builtin("heisenberg");
    const double y[3] = {0.3, 2.0, -1.0};
    const auto xy = lie_bracket(V1, V2).evaluate(h, y);
    CHECK(xy[0] == doctest::Approx(0.0));
    CHECK(xy[1] == doctest::Approx(0.0));
    CHECK(xy[2] == doctest::Approx(1.0));
    CHECK(lie_bracket(V1, V2).depth() == 1);
    CHECK(lie_bracket(V1, V2).str() == "[V1,V2]");

    auto deep = V1;
    for (int i = 0; i < 4; ++i)
        deep = lie_bracket(deep, V2);
    CHECK(deep.depth() == 4);
    CHECK_THROWS_AS(lie_bracket(deep, V1), std::invalid_argument);
}

TEST_CASE("jets of a bracket match finite differences of its values")
{
    const auto sys = random_poly_system(3);
    const auto node = lie_bracket(BracketNode::generator(1), BracketNode::generator(2));
    const double x[3] = {0.2, -0.4, 0.9};
    const auto jet = node.jet(sys, x, 1);
    const int stride = 8; // (order + 1)^n
    for (int a = 0; a < 3; ++a) {
        double xp[3] = {x[0], x[1], x[2]}, xm[3] = {x[0], x[1], x[2]};
        xp[a] += 1e-5;
        xm[a] -= 1e-5;
        const auto vp = node.evaluate(sys, xp), vm = node.evaluate(sys, xm);
        const int flat = 1 << a;
        for (int j = 0; j < 3; ++j)
            CHECK(jet[j * stride + flat] == doctest::Approx((vp[j] - vm[j]) / 2e-5).epsilon(1e-6));
    }
}

TEST_CASE("Jacobi identity on polynomial systems")
{
    const auto sys = random_poly_system(11);
    const auto V = BracketNode::generator(1), W = BracketNode::generator(2), U = BracketNode::generator(3);
    const auto J1 = lie_bracket(lie_bracket(V, W), U);
    const auto J2 = lie_bracket(lie_bracket(W, U), V);
    const auto J3 = lie_bracket(lie_bracket(U, V), W);
    std::mt19937 gen(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst = 0.0;
    for (int p = 0; p < 100; ++p) {
        const double x[3] = {u(gen), u(gen), u(gen)};
        const auto a = J1.evaluate(sys, x), b = J2.evaluate(sys, x), c = J3.evaluate(sys, x);
        for (int j = 0; j < 3; ++j)
            worst = std::max(worst, std::abs(a[j] + b[j] + c[j]));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("hormander rank")
{
    for (int n = 1; n <= 4; ++n) {
        const auto lap = HormanderSystem::builtin("laplacian", n);
        std::vector<double> x(n, 0.3);
        const auto r = hormander_rank(lap, x, 3);
        CHECK(r.rank == n);
        CHECK(r.depth == 0);
        CHECK(r.basis.size() == static_cast<std::size_t>(n));
        if (n >= 2)
            CHECK(check_condition(lap, Domain::box(std::vector<int>(n, 8), std::vector<double>(n, 1.0)), 20, 0).pass);
    }
    const auto kol = HormanderSystem::builtin("kolmogorov");
    const double x[2] = {0.5, 0.5};
    const auto rk = hormander_rank(kol, x, 3);
    CHECK(rk.rank == 2);
    CHECK(rk.depth == 1);

    const auto deg = single_axis();
    for (int depth = 0; depth <= 3; ++depth) {
        const auto rd = hormander_rank(deg, x, depth);
        CHECK(rd.rank == 1);
        CHECK(rd.depth == depth + 1);
    }
    CHECK_THROWS_AS(hormander_rank(deg, x, 4), std::invalid_argument);
}

TEST_CASE("rank is invariant under reordering of the generators")
{
    const auto a = dx_and_xdy();
    const auto b = parse_system(R"({"n": 2, "fields": [[0, 0], [0, [{"exp": [1, 0], "coef": 1}]], [1, 0]]})");
    std::mt19937 gen(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int p = 0; p < 20; ++p) {
        const double x[2] = {p == 0 ? 0.0 : u(gen), u(gen)};
        const auto ra = hormander_rank(a, x, 2), rb = hormander_rank(b, x, 2);
        CHECK(ra.rank == rb.rank);
        CHECK(ra.depth == rb.depth);
    }
}

TEST_CASE("check_condition on the built-in systems")
{
    const Domain cube = Domain::box({8, 8, 8}, {1.0, 1.0, 1.0});
    const auto heis = check_condition(HormanderSystem::builtin("heisenberg"), cube, 100, 3);
    CHECK(heis.pass);
    CHECK(heis.max_depth_used == 1);
    CHECK(heis.depth_histogram[1] == heis.points);
    CHECK(heis.points == 100 + 8 + 1);

    const Domain sq = Domain::box({8, 8}, {1.0, 1.0});
    const auto gr = check_condition(HormanderSystem::builtin("grushin"), sq, 50, 3);
    CHECK(gr.pass);
    CHECK(gr.max_depth_used == 1);
    CHECK(gr.depth_histogram[1] >= 1); // the centre lies on x = 0
    CHECK(gr.depth_histogram[0] == gr.points - gr.depth_histogram[1]);
    const double on_axis[2] = {0.0, 0.4}, off_axis[2] = {0.3, 0.4};
    CHECK(hormander_rank(HormanderSystem::builtin("grushin"), on_axis, 3).depth == 1);
    CHECK(hormander_rank(HormanderSystem::builtin("grushin"), off_axis, 3).depth == 0);

    const auto deg = check_condition(single_axis(), sq, 10, 3);
    CHECK(!deg.pass);
    CHECK(deg.worst_rank == 1);
    CHECK(deg.witnesses.size() == static_cast<std::size_t>(deg.points));
}

TEST_CASE("convection_apply")
{
    const Domain d = Domain::torus({32, 32}, {2 * pi, 2 * pi});
    const auto sys = HormanderSystem::classical(2, 0.1);
    Field v = sample(d, 2, [](std::span<const double> x, int c) { return c == 0 ? std::sin(x[1]) : std::cos(x[0]); });
    Field t = sample(d, 1, [](std::span<const double> x, int) { return std::sin(x[0] + 2 * x[1]); });
    Field expect = sample(d, 1, [](std::span<const double> x, int) {
        return std::sin(x[1]) * std::cos(x[0] + 2 * x[1]) + std::cos(x[0]) * 2 * std::cos(x[0] + 2 * x[1]);
    });
    Field got = convection_apply(sys, v, t);
    double err = 0.0;
    for (std::size_t i = 0; i < got.points(); ++i)
        err = std::max(err, std::abs(got.data()[i] - expect.data()[i]));
    CHECK(err < 1e-12);

    CHECK(norm(convection_apply(sys, Field::vector(d), t), Norm::linf()) == 0.0);
    Field c = sample(d, 1, [](std::span<const double>, int) { return 3.0; });
    CHECK(norm(convection_apply(sys, v, c), Norm::linf()) < 1e-13);

    Field a = convection_apply(sys, 2.0 * v, 3.0 * t);
    Field b = 6.0 * got;
    CHECK(norm(a - b, Norm::linf()) < 1e-12);
    CHECK_THROWS_AS(convection_apply(sys, t, t), std::invalid_argument);
}

TEST_CASE("estimate_CB")
{
    const Domain d = Domain::torus({32, 32}, {2 * pi, 2 * pi});
    const auto cls = HormanderSystem::classical(2, 0.5);
    const auto one = estimate_CB(cls, d, 2);
    CHECK(one.C_B == doctest::Approx(1.0));
    CHECK(one.C_ij(0, 1) == doctest::Approx(1.0));

    auto sin_b = [](double scale) {
        auto f = ScalarFunction::closed_form(2, [scale](std::span<const double> x, std::span<const int> a) {
            if (a[1] > 0)
                return 0.0;
            const int k = a[0] % 4;
            return scale * (k == 0 ? std::sin(x[0]) : k == 1 ? std::cos(x[0]) : k == 2 ? -std::sin(x[0]) : -std::cos(x[0]));
        });
        std::vector<VectorField> fields{constant_field({0, 0}), constant_field({1, 0}), constant_field({0, 1})};
        return HormanderSystem(2, fields, {f, f}, {constant_field({1, 1}), constant_field({1, 1})},
                               constant_field({0, 0}), 0.5);
    };
    CHECK(estimate_CB(sin_b(1.0), d, 1).C_B == doctest::Approx(2.0));
    CHECK(estimate_CB(sin_b(3.0), d, 1).C_B == doctest::Approx(6.0));
    CHECK_THROWS_AS(estimate_CB(cls, d, 5), std::invalid_argument);
}

TEST_CASE("system files and built-ins")
{
    CHECK(HormanderSystem::classical(3, 0.2).is_classical());
    CHECK(HormanderSystem::builtin("laplacian", 2, 0.3).is_heat());
    CHECK(!HormanderSystem::builtin("kolmogorov").is_heat());
    CHECK(HormanderSystem::builtin("kolmogorov").diffusion_count() == 1);
    CHECK_THROWS_AS(HormanderSystem::builtin("heisenberg", 2), std::invalid_argument);
    CHECK_THROWS_AS(HormanderSystem::builtin("nope"), std::invalid_argument);

    const auto h = parse_system(R"({"schema": "nslab.system/1", "builtin": "heisenberg", "nu": 0.5})");
    CHECK(h.dim() == 3);
    CHECK(h.name() == "heisenberg");
    const auto c = HormanderSystem::classical(2, 0.5);
    CHECK(c.coupling_sum() == 4.0);
    CHECK(c.constant_couplings().c(0, 1) == 1.0);

    CHECK_THROWS_AS(parse_system("{"), std::runtime_error);
    CHECK_THROWS_AS(parse_system(R"({"n": 2, "fields": [[0, 0]], "bogus": 1})"), std::runtime_error);
    CHECK_THROWS_AS(parse_system(R"({"n": 2, "fields": [[0]]})"), std::runtime_error);
    CHECK_THROWS_AS(parse_system(R"({"n": 2, "fields": [[0, [{"exp": [1], "coef": 1}]]]})"), std::runtime_error);
    CHECK_THROWS_AS(parse_system(R"({"n": 2, "nu": -1, "fields": [[0, 0]]})"), std::runtime_error);
    CHECK_THROWS_AS(parse_system(R"({"builtin": "heisenberg", "fields": []})"), std::runtime_error);
    try {
        parse_system(R"({"n": 2, "fields": [[0, 0], [1, [{"exp": [1, -1], "coef": 1}]]]})");
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("fields[1][1]") != std::string::npos);
    }
}
