#include "rqdyn/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rqdyn {

double integrate_corrected(std::span<const double> y, double h) {
    const std::size_t n = y.size();
    if (n < 2) return 0.0;
    double s = 0.5 * (y[0] + y[n - 1]);
    for (std::size_t j = 1; j + 1 < n; ++j) s += y[j];
    s *= h;
    if (n >= 3) {
        // Euler-Maclaurin endpoint correction with one-sided 3-point derivatives.
        // s - (h^2/12) (f'(b) - f'(a)); the 2h factor of the stencils is folded in.
        const double da = -3.0 * y[0] + 4.0 * y[1] - y[2];
        const double db = 3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3];
        s -= h / 24.0 * (db - da);
    }
    return s;
}

std::vector<double> cumulative_integral(std::span<const double> y, double h) {
    std::vector<double> out(y.size(), 0.0);
    double trap = 0.0;
    double da = 0.0;
    if (y.size() >= 3) da = -3.0 * y[0] + 4.0 * y[1] - y[2];
    for (std::size_t k = 1; k < y.size(); ++k) {
        trap += 0.5 * h * (y[k - 1] + y[k]);
        out[k] = trap;
        if (k >= 2) {
            const double db = 3.0 * y[k] - 4.0 * y[k - 1] + y[k - 2];
            out[k] -= h / 24.0 * (db - da);
        }
    }
    return out;
}

namespace detail {

CellMoments weight_moments(double sigma, double a, double b) {
    const double p1 = sigma + 1.0, p2 = sigma + 2.0;
    return {(std::pow(b, p1) - std::pow(a, p1)) / p1,
            (std::pow(b, p2) - std::pow(a, p2)) / p2};
}

double product_integrate(std::span<const double> p, double sigma, double h) {
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < p.size(); ++j) {
        const double a = h * static_cast<double>(j);
        const double b = a + h;
        const auto [m0, m1] = weight_moments(sigma, a, b);
        const double slope = (p[j + 1] - p[j]) / h;
        acc += p[j] * m0 + slope * (m1 - a * m0);
    }
    return acc;
}

// Regularized samples freg_j = f_j * t_j^{-sigma}; the j = 0 value is
// extrapolated since the raw sample there is unusable.
std::vector<double> regularize(const GridFunction& f) {
    const double sigma = *f.singular_exponent;
    std::vector<double> r(f.size());
    for (std::size_t j = 1; j < f.size(); ++j)
        r[j] = f.samples[j] * std::pow(f.grid.t(j), -sigma);
    if (f.size() >= 3)
        r[0] = 2.0 * r[1] - r[2];
    else if (f.size() == 2)
        r[0] = r[1];
    return r;
}

GaussRule gauss_legendre01(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre01: need n >= 1");
    GaussRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            // Legendre recurrence for P_n(x) and its derivative.
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= n; ++j) {
                const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = 0.5 * (1.0 - x);  // descending x -> ascending node
        r.nodes[n - 1 - i] = 0.5 * (1.0 + x);
        r.weights[i] = 0.5 * w;
        r.weights[n - 1 - i] = 0.5 * w;
    }
    return r;
}

}  // namespace detail

using detail::product_integrate;
using detail::regularize;
using detail::weight_moments;

GridFunction convolve(const GridFunction& f, const GridFunction& g) {
    if (!(f.grid == g.grid)) throw std::invalid_argument("convolve: grid mismatch");
    const std::size_t n = f.grid.count;
    const double h = f.grid.step;
    std::vector<double> out(n, 0.0);

    const bool sf = f.singular_exponent.has_value();
    const bool sg = g.singular_exponent.has_value();

    if (!sf && !sg) {
        std::vector<double> y;
        for (std::size_t k = 1; k < n; ++k) {
            y.resize(k + 1);
            for (std::size_t j = 0; j <= k; ++j) y[j] = f.samples[k - j] * g.samples[j];
            out[k] = integrate_corrected(y, h);
        }
        return GridFunction(f.grid, std::move(out));
    }

    // Split at the midpoint so each half carries at most one origin weight.
    const std::vector<double> freg = sf ? regularize(f) : f.samples;
    const std::vector<double> greg = sg ? regularize(g) : g.samples;
    const double sigf = sf ? *f.singular_exponent : 0.0;
    const double sigg = sg ? *g.singular_exponent : 0.0;

    std::vector<double> p;
    for (std::size_t k = 2; k < n; ++k) {
        const std::size_t m = k / 2;
        double acc = 0.0;
        p.resize(m + 1);
        for (std::size_t j = 0; j <= m; ++j) p[j] = f.samples[k - j] * greg[j];
        acc += product_integrate(p, sigg, h);
        const std::size_t m2 = k - m;
        p.resize(m2 + 1);
        for (std::size_t j = 0; j <= m2; ++j) p[j] = g.samples[k - j] * freg[j];
        acc += product_integrate(p, sigf, h);
        out[k] = acc;
    }
    // Single cell [0, h]: put the weight on the singular side; when both sides
    // are singular, integrate the two-ended weight s^sf (h-s)^sg exactly.
    if (n >= 2) {
        if (sf && sg) {
            const double avg = 0.5 * (freg[0] * greg[1] + freg[1] * greg[0]);
            out[1] = avg * std::pow(h, sigf + sigg + 1.0) *
                     incomplete_beta(1.0, sigf + 1.0, sigg + 1.0);
        } else if (sg) {
            const double q[2] = {f.samples[1] * greg[0], f.samples[0] * greg[1]};
            out[1] = product_integrate(std::span<const double>(q, 2), sigg, h);
        } else {
            const double q[2] = {g.samples[1] * freg[0], g.samples[0] * freg[1]};
            out[1] = product_integrate(std::span<const double>(q, 2), sigf, h);
        }
    }
    // When the two origin exponents cancel, the convolution has a finite
    // nonzero limit at t = 0; recover it by extrapolation.
    if (sf && sg && n >= 3 && std::abs(sigf + sigg + 1.0) < 1e-12)
        out[0] = 2.0 * out[1] - out[2];
    return GridFunction(f.grid, std::move(out));
}

GridFunction solve_renewal(const GridFunction& w) {
    const std::size_t n = w.grid.count;
    const double h = w.grid.step;
    for (double v : w.samples)
        if (!(v >= -1e-12)) throw std::invalid_argument("solve_renewal: w must be nonnegative");

    std::vector<double> f(n, 0.0);

    if (!w.singular_exponent) {
        f[0] = w.samples[0];
        std::vector<double> c;
        for (std::size_t k = 1; k < n; ++k) {
            c.assign(k + 1, h);
            c[0] = 0.5 * h;
            c[k] = 0.5 * h;
            if (k >= 2) {
                const double q = h / 24.0;
                c[k] -= 3.0 * q; c[k - 1] += 4.0 * q; c[k - 2] -= q;
                c[0] -= 3.0 * q; c[1] += 4.0 * q; c[2] -= q;
            }
            double rest = 0.0;
            for (std::size_t j = 0; j < k; ++j) rest += c[j] * w.samples[k - j] * f[j];
            const double denom = 1.0 - c[k] * w.samples[0];
            if (denom <= 0.0)
                throw std::runtime_error("solve_renewal: marching unstable, step too coarse");
            f[k] = (w.samples[k] + rest) / denom;
        }
        return GridFunction(w.grid, std::move(f));
    }

    // Weakly singular kernel: product-integrate w's origin weight cell by cell.
    const double sigma = *w.singular_exponent;
    const std::vector<double> wreg = regularize(w);
    f[0] = 0.0;  // placeholder; the solution shares w's origin exponent
    for (std::size_t k = 1; k < n; ++k) {
        auto fidx = [&](std::size_t j) { return j == 0 ? f[1] : f[j]; };
        double rest = 0.0, coef_fk = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const auto [m0, m1] = weight_moments(sigma, h * j, h * (j + 1));
            const double w0 = wreg[j], w1 = wreg[j + 1];
            // p(s) linear between p_j = wreg_j f_{k-j} and p_{j+1} = wreg_{j+1} f_{k-j-1}
            const double c_lo = m0 - (m1 - h * j * m0) / h;  // multiplies p_j
            const double c_hi = (m1 - h * j * m0) / h;       // multiplies p_{j+1}
            if (j == 0) {
                coef_fk += c_lo * w0;
                rest += c_hi * w1 * fidx(k - 1);
            } else {
                rest += c_lo * w0 * fidx(k - j) + c_hi * w1 * fidx(k - j - 1);
            }
        }
        const double denom = 1.0 - coef_fk;
        if (denom <= 0.0)
            throw std::runtime_error("solve_renewal: marching unstable, step too coarse");
        f[k] = (w.samples[k] + rest) / denom;
    }
    f[0] = f[1];
    return GridFunction(w.grid, std::move(f), sigma);
}

LaplaceResult laplace_numeric_full(const GridFunction& f, double u,
                                   std::optional<double> tail_rate, double tail_tol) {
    if (u <= 0.0) throw std::invalid_argument("laplace_numeric: u must be > 0");
    const std::size_t n = f.grid.count;
    const double h = f.grid.step;
    LaplaceResult r;
    if (!f.singular_exponent) {
        std::vector<double> y(n);
        for (std::size_t j = 0; j < n; ++j) y[j] = std::exp(-u * f.grid.t(j)) * f.samples[j];
        r.value = integrate_corrected(y, h);
    } else {
        const std::vector<double> freg = regularize(f);
        std::vector<double> p(n);
        for (std::size_t j = 0; j < n; ++j) p[j] = std::exp(-u * f.grid.t(j)) * freg[j];
        r.value = product_integrate(p, *f.singular_exponent, h);
    }
    const double edge = std::exp(-u * f.grid.span()) * std::abs(f.samples[n - 1]);
    if (tail_rate) {
        r.value += f.samples[n - 1] * std::exp(-u * f.grid.span()) / (u + *tail_rate);
    } else if (edge > tail_tol) {
        r.tail_truncated = true;
    }
    return r;
}

double laplace_numeric(const GridFunction& f, double u, std::optional<double> tail_rate) {
    return laplace_numeric_full(f, u, tail_rate).value;
}

namespace {

// 1/Gamma(x), finite everywhere (zero at the poles).
double rgamma(double x) {
    if (x > 0.5) return 1.0 / std::tgamma(x);
    const double s = std::sin(M_PI * x);
    if (s == 0.0) return 0.0;
    return std::tgamma(1.0 - x) * s / M_PI;
}

struct MlEval {
    double value;
    double err;  // crude absolute error estimate
};

MlEval ml_series(double alpha, double beta, double x) {
    // Power series in extended precision; the returned error estimate tracks
    // the cancellation floor max_term * eps.
    const long double ax = std::abs((long double)x);
    long double sum = 0.0L, comp = 0.0L, max_term = 0.0L;
    const long double lax = ax > 0.0L ? logl(ax) : -1.0e30L;
    for (int k = 0; k < 500; ++k) {
        long double mag = (k == 0) ? 1.0L / tgammal((long double)beta)
                                   : expl(k * lax - lgammal((long double)(alpha * k + beta)));
        long double term = (k % 2 == 0) ? mag : -mag;
        if (x >= 0.0) term = mag;
        const long double t2 = term - comp;
        const long double t3 = sum + t2;
        comp = (t3 - sum) - t2;
        sum = t3;
        max_term = std::max(max_term, fabsl(term));
        if (k > 2 && fabsl(term) < 1e-22L * fabsl(sum) + 1e-30L) break;
    }
    return {(double)sum, (double)(max_term * 1e-18L)};
}

MlEval ml_asymptotic(double alpha, double beta, double x) {
    // E_{a,b}(z) ~ -sum_k z^{-k} / Gamma(b - a k) for z -> -inf, truncated at
    // the smallest term.
    const double y = -x;
    double sum = 0.0, prev = std::numeric_limits<double>::infinity();
    double min_term = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 200; ++k) {
        const double arg = beta - alpha * k;
        if (arg < 0.75 && std::abs(arg - std::round(arg)) < 1e-9)
            continue;  // reciprocal-gamma pole; not a convergence signal
        const double sgn = (k % 2 == 0) ? 1.0 : -1.0;          // (-y)^{-k} sign
        const double term = -sgn * std::pow(y, -k) * rgamma(arg);
        const double at = std::abs(term);
        if (at == 0.0) continue;
        if (at > prev && k > 2) break;
        sum += term;
        prev = at;
        min_term = std::min(min_term, at);
        if (at < 1e-18 * std::abs(sum) + 1e-30) break;
    }
    return {sum, std::isfinite(min_term) ? min_term : 1.0};
}

}  // namespace

double mittag_leffler2(double alpha, double beta, double x) {
    if (alpha <= 0.0 || alpha > 1.0)
        throw std::invalid_argument("mittag_leffler: alpha must be in (0, 1]");
    if (x > 0.0) throw std::invalid_argument("mittag_leffler: x must be <= 0");
    if (alpha == 1.0 && beta == 1.0) return std::exp(x);
    const double ax = -x;
    if (ax <= 4.0) return ml_series(alpha, beta, x).value;
    if (ax >= 5.0) return ml_asymptotic(alpha, beta, x).value;
    // Bridge: cosine blend across [4, 5].
    const double ws = 0.5 * (1.0 + std::cos(M_PI * (ax - 4.0)));
    return ws * ml_series(alpha, beta, x).value +
           (1.0 - ws) * ml_asymptotic(alpha, beta, x).value;
}

double mittag_leffler(double alpha, double x) { return mittag_leffler2(alpha, 1.0, x); }

namespace {

// Continued fraction for the regularized incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16, kFpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpmin) d = kFpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpmin) d = kFpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpmin) c = kFpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpmin) d = kFpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpmin) c = kFpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw std::runtime_error("incomplete_beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double x, double a, double b) {
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete_beta: x outside [0,1]");
    if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("incomplete_beta: a, b must be > 0");
    const double lnB = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    if (x == 0.0) return 0.0;
    if (x == 1.0) return std::exp(lnB);
    const double lnpre = a * std::log(x) + b * std::log1p(-x);
    double reg;
    if (x < (a + 1.0) / (a + b + 2.0)) {
        reg = std::exp(lnpre - lnB) * betacf(a, b, x) / a;
    } else {
        reg = 1.0 - std::exp(lnpre - lnB) * betacf(b, a, 1.0 - x) / b;
    }
    return reg * std::exp(lnB);
}

double erfcx(double x) {
    if (x < 6.0) return std::exp(x * x) * std::erfc(x);
    // asymptotic series; machine precision for x >= 6, and exp(x^2) would
    // overflow past x ~ 26 anyway
    const double inv2 = 1.0 / (2.0 * x * x);
    double term = 1.0, sum = 1.0;
    for (int n = 1; n < 40; ++n) {
        term *= -(2.0 * n - 1.0) * inv2;
        if (std::abs(term) < 1e-18) break;
        sum += term;
    }
    return sum / (x * std::sqrt(M_PI));
}

}  // namespace rqdyn
