#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace rqdyn {

/// Uniform time grid t_k = k * step, k = 0 .. count-1.
struct TimeGrid {
    double step = 0.0;
    std::size_t count = 0;

    TimeGrid() = default;
    TimeGrid(double step_, std::size_t count_) : step(step_), count(count_) {
        if (step <= 0.0 || count == 0)
            throw std::invalid_argument("TimeGrid: step must be > 0 and count >= 1");
    }
    static TimeGrid from_span(double step_, double span) {
        return TimeGrid(step_, static_cast<std::size_t>(span / step_ + 0.5) + 1);
    }
    double t(std::size_t k) const { return static_cast<double>(k) * step; }
    double span() const { return t(count - 1); }
    bool operator==(const TimeGrid& o) const = default;
};

/// Real-valued function sampled on a TimeGrid. A function behaving like
/// C * t^sigma near t = 0 (with sigma in (-1, 0]) carries singular_exponent
/// sigma; the k = 0 sample is then ignored by quadrature and the weight is
/// integrated exactly on the first cells.
struct GridFunction {
    TimeGrid grid;
    std::vector<double> samples;
    std::optional<double> singular_exponent;

    GridFunction() = default;
    GridFunction(TimeGrid g, std::vector<double> s,
                 std::optional<double> sing = std::nullopt)
        : grid(g), samples(std::move(s)), singular_exponent(sing) {
        if (samples.size() != grid.count)
            throw std::invalid_argument("GridFunction: sample/grid size mismatch");
        if (singular_exponent &&
            (*singular_exponent <= -1.0 || *singular_exponent > 0.0))
            throw std::invalid_argument("GridFunction: singular_exponent outside (-1, 0]");
    }
    double operator[](std::size_t k) const { return samples[k]; }
    std::size_t size() const { return samples.size(); }
};

/// Composite trapezoid with 3-point endpoint-derivative corrections
/// (Euler-Maclaurin, O(h^4) for smooth integrands). Falls back to plain
/// trapezoid for fewer than 3 samples.
double integrate_corrected(std::span<const double> y, double h);

/// Cumulative version: out[k] = integral over [0, t_k] of the sampled function.
std::vector<double> cumulative_integral(std::span<const double> y, double h);

/// Grid convolution (f*g)(t_k) = int_0^{t_k} f(t_k - s) g(s) ds.
/// Singular factors (weight s^sigma at the origin) are handled by splitting
/// the integral at the midpoint and product-integrating each half against the
/// exact power-weight moments.
GridFunction convolve(const GridFunction& f, const GridFunction& g);

/// Second-kind Volterra equation f = w + w*f solved by trapezoid marching.
/// This is the sprinkling density at age zero for waiting-time density w.
GridFunction solve_renewal(const GridFunction& w);

struct LaplaceResult {
    double value = 0.0;
    bool tail_truncated = false;  // set when the neglected tail exceeds tolerance
};

/// Forward Laplace transform int_0^inf e^{-u t} f(t) dt on the grid. When
/// tail_rate is given, f is continued past the grid span as
/// f(span) * exp(-tail_rate (t - span)) and that tail is integrated analytically.
LaplaceResult laplace_numeric_full(const GridFunction& f, double u,
                                   std::optional<double> tail_rate = std::nullopt,
                                   double tail_tol = 1e-12);
double laplace_numeric(const GridFunction& f, double u,
                       std::optional<double> tail_rate = std::nullopt);

/// Mittag-Leffler E_alpha(x) for 0 < alpha <= 1 and x <= 0.
double mittag_leffler(double alpha, double x);

/// Two-parameter Mittag-Leffler E_{alpha,beta}(x), same domain in x.
double mittag_leffler2(double alpha, double beta, double x);

/// Non-regularized incomplete Beta beta[x; a, b] = int_0^x s^{a-1}(1-s)^{b-1} ds.
double incomplete_beta(double x, double a, double b);

/// Scaled complementary error function exp(x^2) erfc(x), x >= 0.
double erfcx(double x);

namespace detail {

/// Exact moments of the weight s^sigma over [a, b]:
/// m0 = int s^sigma ds, m1 = int s^{sigma+1} ds.
struct CellMoments {
    double m0, m1;
};
CellMoments weight_moments(double sigma, double a, double b);

/// int_0^{(n-1) h} s^sigma p(s) ds with p piecewise linear through the samples.
double product_integrate(std::span<const double> p, double sigma, double h);

/// Samples of f(t) t^{-sigma} with the t = 0 value linearly extrapolated.
std::vector<double> regularize(const GridFunction& f);

/// Gauss-Legendre nodes and weights mapped to [0, 1].
struct GaussRule {
    std::vector<double> nodes, weights;
};
GaussRule gauss_legendre01(int n);

}  // namespace detail

}  // namespace rqdyn
