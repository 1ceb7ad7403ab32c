#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "rqdyn/numerics.hpp"

using namespace rqdyn;

namespace {

std::vector<double> sample(const TimeGrid& g, double (*f)(double)) {
    std::vector<double> y(g.count);
    for (std::size_t k = 0; k < g.count; ++k) y[k] = f(g.t(k));
    return y;
}

}  // namespace

TEST_CASE("grid construction and validation") {
    CHECK_THROWS_AS(TimeGrid(0.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(0.1, 0), std::invalid_argument);
    TimeGrid g = TimeGrid::from_span(0.1, 1.0);
    CHECK(g.count == 11);
    CHECK(g.span() == doctest::Approx(1.0));
    CHECK_THROWS_AS(GridFunction(g, std::vector<double>(5)), std::invalid_argument);
    CHECK_THROWS_AS(GridFunction(g, std::vector<double>(11), -1.5), std::invalid_argument);
    CHECK_THROWS_AS(GridFunction(g, std::vector<double>(11), 0.5), std::invalid_argument);
    CHECK_NOTHROW(GridFunction(g, std::vector<double>(11), -0.5));
}

TEST_CASE("corrected trapezoid is exact for cubics") {
    const TimeGrid g(0.1, 11);
    auto y = sample(g, +[](double t) { return t * t * t - 2.0 * t * t + 0.5 * t + 1.0; });
    // int_0^1 = 1/4 - 2/3 + 1/4 + 1
    CHECK(integrate_corrected(y, g.step) == doctest::Approx(0.25 - 2.0 / 3.0 + 0.25 + 1.0).epsilon(1e-13));
}

TEST_CASE("corrected trapezoid converges at fourth order") {
    auto err = [](double h) {
        const TimeGrid g = TimeGrid::from_span(h, 2.0);
        auto y = sample(g, +[](double t) { return std::exp(-t) * std::cos(3.0 * t); });
        const double exact = (1.0 - std::exp(-2.0) * (std::cos(6.0) - 3.0 * std::sin(6.0))) / 10.0;
        return std::abs(integrate_corrected(y, h) - exact);
    };
    const double e1 = err(0.02), e2 = err(0.01);
    CHECK(e1 / e2 > 12.0);  // ~16 for O(h^4)
    CHECK(e2 < 1e-7);
}

TEST_CASE("cumulative integral endpoint matches the full integral") {
    const TimeGrid g(0.05, 41);
    auto y = sample(g, +[](double t) { return std::sin(t) + 0.3; });
    auto c = cumulative_integral(y, g.step);
    CHECK(c.front() == 0.0);
    CHECK(c.back() == doctest::Approx(integrate_corrected(y, g.step)).epsilon(1e-10));
    CHECK(c[20] == doctest::Approx(1.0 - std::cos(1.0) + 0.3).epsilon(1e-6));
}

TEST_CASE("smooth convolution: exp * exp = t exp(-t)") {
    const TimeGrid g(0.01, 301);
    GridFunction f(g, sample(g, +[](double t) { return std::exp(-t); }));
    auto c = convolve(f, f);
    for (std::size_t k = 0; k < g.count; k += 30) {
        const double t = g.t(k);
        CHECK(c[k] == doctest::Approx(t * std::exp(-t)).epsilon(1e-8));
    }
}

TEST_CASE("singular convolution: t^{-1/2} * 1 = 2 sqrt(t)") {
    const TimeGrid g(0.01, 201);
    std::vector<double> s(g.count, 0.0);
    for (std::size_t k = 1; k < g.count; ++k) s[k] = 1.0 / std::sqrt(g.t(k));
    GridFunction f(g, std::move(s), -0.5);
    GridFunction one(g, std::vector<double>(g.count, 1.0));
    // product integration of the regularized factors is second order
    auto c = convolve(f, one);
    for (std::size_t k = 1; k < g.count; k += 20)
        CHECK(c[k] == doctest::Approx(2.0 * std::sqrt(g.t(k))).epsilon(5e-4));
}

TEST_CASE("doubly singular convolution: t^{-1/2} * t^{-1/2} = pi") {
    const TimeGrid g(0.02, 101);
    std::vector<double> s(g.count, 0.0);
    for (std::size_t k = 1; k < g.count; ++k) s[k] = 1.0 / std::sqrt(g.t(k));
    GridFunction f(g, std::move(s), -0.5);
    auto c = convolve(f, f);
    for (std::size_t k = 10; k < g.count; k += 10)
        CHECK(c[k] == doctest::Approx(M_PI).epsilon(3e-3));
}

TEST_CASE("renewal solve: exponential density gives a flat rate") {
    const TimeGrid g(0.01, 501);
    const double gamma = 1.7;
    GridFunction w(g, sample(g, +[](double t) { return 1.7 * std::exp(-1.7 * t); }));
    auto f = solve_renewal(w);
    for (std::size_t k = 0; k < g.count; k += 50)
        CHECK(f[k] == doctest::Approx(gamma).epsilon(1e-7));
}

TEST_CASE("laplace transform with analytic exponential tail") {
    const TimeGrid g(0.01, 1001);
    GridFunction f(g, sample(g, +[](double t) { return std::exp(-t); }));
    for (double u : {0.5, 1.0, 3.0})
        CHECK(laplace_numeric(f, u, 1.0) == doctest::Approx(1.0 / (1.0 + u)).epsilon(2e-7));
    auto full = laplace_numeric_full(f, 0.1);
    CHECK(full.tail_truncated);  // e^{-10} tail left out without a tail rate
}

TEST_CASE("mittag-leffler reduces to the exponential at alpha = 1") {
    for (double x : {0.0, -0.3, -2.0, -4.5, -9.0})
        CHECK(mittag_leffler(1.0, x) == doctest::Approx(std::exp(x)).epsilon(1e-10));
}

TEST_CASE("mittag-leffler at alpha = 1/2 matches the scaled erfc closed form") {
    // E_{1/2}(-y) = exp(y^2) erfc(y) = erfcx(y)
    for (double y = 0.0; y <= 8.0; y += 0.05)
        CHECK(mittag_leffler(0.5, -y) == doctest::Approx(erfcx(y)).epsilon(2e-9));
}

TEST_CASE("two-parameter mittag-leffler closed form at (1/2, 1/2)") {
    // E_{1/2,1/2}(-y) = 1/sqrt(pi) - y erfcx(y)
    for (double y = 0.0; y <= 6.0; y += 0.1)
        CHECK(mittag_leffler2(0.5, 0.5, -y) ==
              doctest::Approx(1.0 / std::sqrt(M_PI) - y * erfcx(y)).epsilon(1e-8));
}

TEST_CASE("incomplete beta closed forms") {
    CHECK(incomplete_beta(0.3, 1.0, 1.0) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(incomplete_beta(0.25, 0.5, 1.0) == doctest::Approx(2.0 * std::sqrt(0.25)).epsilon(1e-10));
    // beta(x; 2, 3) = x^2/2 - 2x^3/3 + x^4/4
    const double x = 0.7;
    CHECK(incomplete_beta(x, 2.0, 3.0) ==
          doctest::Approx(x * x / 2 - 2 * x * x * x / 3 + x * x * x * x / 4).epsilon(1e-10));
    // full integral equals the beta function
    CHECK(incomplete_beta(1.0, 0.5, 0.5) == doctest::Approx(M_PI).epsilon(1e-9));
}

TEST_CASE("scaled complementary error function") {
    CHECK(erfcx(0.0) == doctest::Approx(1.0));
    for (double x : {0.1, 0.5, 1.0, 2.0})
        CHECK(erfcx(x) == doctest::Approx(std::exp(x * x) * std::erfc(x)).epsilon(1e-12));
    // asymptotic 1/(x sqrt(pi))
    CHECK(erfcx(50.0) == doctest::Approx(1.0 / (50.0 * std::sqrt(M_PI))).epsilon(1e-3));
}

TEST_CASE("product integration against the power weight is exact for linear data") {
    // int_0^T s^{-1/2} (a + b s) ds with p sampled linearly
    const TimeGrid g(0.1, 11);
    const double a = 2.0, b = -0.7, T = 1.0;
    std::vector<double> p(g.count);
    for (std::size_t k = 0; k < g.count; ++k) p[k] = a + b * g.t(k);
    const double got = detail::product_integrate(p, -0.5, g.step);
    const double exact = 2.0 * a * std::sqrt(T) + b * (2.0 / 3.0) * std::pow(T, 1.5);
    CHECK(got == doctest::Approx(exact).epsilon(1e-12));
}
