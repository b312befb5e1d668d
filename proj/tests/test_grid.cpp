#include <doctest.h>

#include "nslab/grid.hpp"
#include "nslab/snapshot.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

using namespace nslab;

namespace {

constexpr double pi = std::numbers::pi;

double max_abs_diff(const Field& a, const Field& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

Field random_field(const Domain& d, int components, unsigned seed)
{
    std::mt19937 gen(seed);
    std::normal_distribution<double> dist;
    Field f(d, components);
    for (auto& x : f.data())
        x = dist(gen);
    return f;
}

// Band-limited random scalar on the torus (smooth enough for stencil checks).
Field smooth_random(const Domain& d, unsigned seed)
{
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double a[4][4], ph[4][4];
    for (auto& row : a)
        for (auto& x : row)
            x = u(gen);
    for (auto& row : ph)
        for (auto& x : row)
            x = pi * u(gen);
    return sample(d, 1, [&](std::span<const double> x, int) {
        double s = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                s += a[i][j] * std::cos(i * x[0] + j * x[1] + ph[i][j]);
        return s;
    });
}

} // namespace

TEST_CASE("domain invariants")
{
    auto t = Domain::torus({16, 32}, {2 * pi, 1.0});
    CHECK(t.spacing(0) == 2 * pi / 16);
    CHECK(t.spacing(1) == 1.0 / 32);
    CHECK(t.size() == 512);

    auto b = Domain::box({10, 12}, {2.0, 3.0});
    CHECK(b.spacing(0) == 4.0 / 10);
    CHECK(b.spacing(1) == 6.0 / 12);
    CHECK(b.coord(0, 0) == doctest::Approx(-1.8));

    CHECK_THROWS_AS(Domain::torus({12, 16}, {1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(Domain::box({4, 16}, {1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(Domain::box({16}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(Domain::box({16, 16}, {1.0}), std::invalid_argument);
}

TEST_CASE("derivative of a constant vanishes")
{
    for (auto d : {Domain::torus({16, 16}, {2 * pi, 2 * pi}), Domain::box({16, 16}, {1.0, 1.0})}) {
        Field f = sample(d, 1, [](auto, int) { return 3.5; });
        for (int axis = 0; axis < 2; ++axis)
            for (int order = 1; order <= 2; ++order)
                CHECK(norm(derivative(f, axis, order), Norm::linf()) < 1e-12);
    }
}

TEST_CASE("spectral derivative of a plane wave")
{
    const double L = 3.0;
    auto d = Domain::torus({32, 16}, {L, 2.0});
    Field f = sample(d, 1, [&](auto x, int) { return std::sin(2 * pi * x[0] / L); });
    Field exact = sample(d, 1, [&](auto x, int) { return (2 * pi / L) * std::cos(2 * pi * x[0] / L); });
    CHECK(max_abs_diff(derivative(f, 0, 1), exact) < 1e-12);
}

TEST_CASE("box stencil is exact on quadratics")
{
    auto d = Domain::box({24, 20}, {2.0, 1.5});
    Field f = sample(d, 1, [](auto x, int) { return x[0] * x[0]; });
    Field d2 = derivative(f, 0, 2);
    for (double v : d2.data())
        CHECK(v == doctest::Approx(2.0).epsilon(1e-10));
    Field d1 = derivative(f, 0, 1);
    Field exact = sample(d, 1, [](auto x, int) { return 2 * x[0]; });
    CHECK(max_abs_diff(d1, exact) < 1e-10);
}

TEST_CASE("box stencil is fourth-order accurate in the interior")
{
    auto err = [](int n) {
        auto d = Domain::box({n, 8}, {1.0, 1.0});
        Field f = sample(d, 1, [](auto x, int) { return std::sin(2.0 * x[0]); });
        Field df = derivative(f, 0, 1);
        double e = 0.0;
        std::vector<int> idx(2);
        for (std::size_t p = 0; p < d.size(); ++p) {
            d.unravel(p, idx);
            if (idx[0] < 2 || idx[0] >= n - 2)
                continue;
            e = std::max(e, std::abs(df.data()[p] - 2.0 * std::cos(2.0 * d.coord(0, idx[0]))));
        }
        return e;
    };
    const double rate = std::log2(err(32) / err(64));
    CHECK(rate > 3.7);
}

TEST_CASE("derivative errors")
{
    auto d = Domain::torus({8, 8}, {1.0, 1.0});
    Field f = Field::scalar(d);
    CHECK_THROWS_AS(derivative(f, 2, 1), std::out_of_range);
    CHECK_THROWS_AS(derivative(f, 0, 3), std::invalid_argument);
    CHECK_THROWS_AS(divergence(f), std::invalid_argument);
}

TEST_CASE("derivative is linear and commutes with grid translation")
{
    auto d = Domain::torus({32, 32}, {2 * pi, 2 * pi});
    Field f = random_field(d, 1, 1), g = random_field(d, 1, 2);
    Field lhs = derivative(2.0 * f + (-3.0) * g, 1, 1);
    Field rhs = 2.0 * derivative(f, 1, 1) + (-3.0) * derivative(g, 1, 1);
    CHECK(max_abs_diff(lhs, rhs) < 1e-11);

    // shift by one cell along axis 0
    Field shifted = Field::scalar(d);
    const std::size_t s0 = d.stride(0);
    for (std::size_t p = 0; p < d.size(); ++p)
        shifted.data()[(p + s0) % d.size()] = f.data()[p];
    Field a = derivative(shifted, 0, 1), b = derivative(f, 0, 1);
    Field b_shift = Field::scalar(d);
    for (std::size_t p = 0; p < d.size(); ++p)
        b_shift.data()[(p + s0) % d.size()] = b.data()[p];
    CHECK(max_abs_diff(a, b_shift) < 1e-11);
}

TEST_CASE("norms")
{
    auto t = Domain::torus({32, 32}, {2 * pi, 2 * pi});
    Field zero = Field::vector(t);
    CHECK(norm(zero, Norm::l2()) == 0.0);
    CHECK(norm(zero, Norm::linf()) == 0.0);
    CHECK(norm(zero, Norm::hm(2)) == 0.0);

    Field s = sample(t, 1, [](auto x, int) { return std::sin(x[0]); });
    CHECK(norm(s, Norm::l2()) == doctest::Approx(std::sqrt(2 * pi * pi)).epsilon(1e-10));
    // |sin x|_{H^2}^2 = (1 + 1 + 1) * |sin x|^2 (alpha = 0, (1,0), (2,0))
    CHECK(norm(s, Norm::hm(2)) == doctest::Approx(std::sqrt(3.0 * 2 * pi * pi)).epsilon(1e-10));
    CHECK_THROWS_AS(norm(s, Norm::weighted_linf(4)), std::invalid_argument);
    CHECK_THROWS_AS(norm(s, Norm::hm(5)), std::invalid_argument);

    for (double a : {4.0, 8.0, 16.0}) {
        auto b = Domain::box({64, 64}, {a, a});
        Field f = sample(b, 1, [](auto x, int) {
            const double r2 = x[0] * x[0] + x[1] * x[1];
            return 1.0 / (1.0 + r2 * r2);
        });
        const double w = norm(f, Norm::weighted_linf(4));
        CHECK(w >= 1.0 - 1e-12);
        CHECK(w <= 2.0);
        CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("box and torus Sobolev norms agree on smooth periodic data")
{
    auto t = Domain::torus({64, 64}, {2 * pi, 2 * pi});
    Field f = sample(t, 1, [](auto x, int) { return std::sin(x[0]) * std::cos(2 * x[1]); });
    // |D^alpha f|^2 = (1^a0 2^a1)^2 * pi^2
    double expect = 0.0;
    for (auto& alpha : multi_indices(2, 2))
        expect += std::pow(1.0, 2 * alpha[0]) * std::pow(2.0, 2 * alpha[1]) * pi * pi;
    CHECK(norm(f, Norm::hm(2)) == doctest::Approx(std::sqrt(expect)).epsilon(1e-10));
}

TEST_CASE("Sobolev norm dominates L2")
{
    for (unsigned seed = 0; seed < 5; ++seed) {
        auto t = Domain::torus({16, 16}, {2 * pi, 2 * pi});
        auto b = Domain::box({16, 16}, {1.0, 1.0});
        Field ft = random_field(t, 2, seed), fb = random_field(b, 1, seed);
        for (int m = 0; m <= 4; ++m) {
            CHECK(norm(ft, Norm::hm(m)) >= norm(ft, Norm::l2()) * (1 - 1e-14));
            CHECK(norm(fb, Norm::hm(m)) >= norm(fb, Norm::l2()) * (1 - 1e-14));
        }
    }
}

TEST_CASE("divergence")
{
    auto t = Domain::torus({32, 32}, {2 * pi, 2 * pi});
    Field v = sample(t, 2, [](auto x, int c) { return c == 0 ? std::sin(x[1]) : std::sin(x[0]); });
    CHECK(norm(divergence(v), Norm::linf()) < 1e-12);

    auto b = Domain::box({16, 16}, {1.0, 1.0});
    Field w = sample(b, 2, [](auto x, int c) { return x[c]; });
    Field div_w = divergence(w);
    for (double x : div_w.data())
        CHECK(x == doctest::Approx(2.0).epsilon(1e-12));

    Field phi = smooth_random(t, 7);
    Field lap = derivative(phi, 0, 2) + derivative(phi, 1, 2);
    CHECK(max_abs_diff(divergence(gradient(phi)), lap) < 1e-10);
}

TEST_CASE("snapshot round trip is bit exact")
{
    auto b = Domain::box({8, 12}, {1.5, 2.5});
    Field f = random_field(b, 2, 42);
    f.data()[3] = -0.0;
    f.data()[4] = 5e-324;
    auto dir = std::filesystem::temp_directory_path() / "nslab_snapshot_test";
    std::filesystem::create_directories(dir);
    write_snapshot(dir / "f", f);
    Field g = read_snapshot(dir / "f");
    CHECK(g.domain() == f.domain());
    CHECK(g.components() == 2);
    REQUIRE(g.data().size() == f.data().size());
    CHECK(std::memcmp(g.data().data(), f.data().data(), f.data().size() * sizeof(double)) == 0);
    CHECK(std::filesystem::file_size(dir / "f.bin") == f.data().size() * 8);
    std::filesystem::remove_all(dir);
}
