#include "rqdyn/renewal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rqdyn {

namespace {

std::size_t snap_index(const TimeGrid& grid, double t, const char* what) {
    const long long k = std::llround(t / grid.step);
    if (k < 0 || static_cast<std::size_t>(k) >= grid.count ||
        std::abs(t - static_cast<double>(k) * grid.step) > 1e-9 * (1.0 + std::abs(t)))
        throw std::invalid_argument(std::string(what) + ": time " + std::to_string(t) +
                                    " is off the grid");
    return static_cast<std::size_t>(k);
}

// E_{1/2,1/2}(-y) = 1/sqrt(pi) - y e^{y^2} erfc(y), used for the half-order
// fractional density where it is exact at all arguments.
double ml_half_half(double y) { return 1.0 / std::sqrt(M_PI) - y * erfcx(y); }

// ---------------------------------------------------------------------------
// High-accuracy counting ladder for densities with an integrable power
// singularity at the origin (fractional variant, order in [1/2, 1)).
// Convolutions against the first-event density use exact per-cell moments
// (survival differences plus the first-moment antiderivative), so the
// singular factor is never interpolated; piecewise-linear interpolation of
// its regularized part would cap the accuracy at O(h). w^{(2)} is evaluated
// pointwise by Gauss quadrature under a singularity-removing substitution.

bool exact_moment_counting(const WaitingTime& w) {
    if (w.kind() != WaitingTime::Kind::MittagLeffler) return false;
    const auto p = w.ml();
    return p.alpha >= 0.5 && p.alpha < 1.0;
}

// Refinement factor that brings the internal step at or below the target.
std::size_t refine_factor(double h, double target = 0.005) {
    return static_cast<std::size_t>(std::max(1.0, std::ceil(h / target - 1e-12)));
}

// w^{(2)}(T) = 2 int_0^{T/2} w(s) w(T-s) ds with s = (T/2) u^{1/alpha};
// the substitution absorbs the s^{alpha-1} divergence.
double second_density_point(const WaitingTime& w, double T, const detail::GaussRule& g) {
    const double alpha = w.ml().alpha;
    const double half = 0.5 * T;
    double acc = 0.0;
    for (std::size_t q = 0; q < g.nodes.size(); ++q) {
        const double u = g.nodes[q];
        const double s = half * std::pow(u, 1.0 / alpha);
        acc += g.weights[q] * std::pow(u, 1.0 / alpha - 1.0) * w.density(s) *
               w.density(T - s);
    }
    return 2.0 * half / alpha * acc;
}

struct CountLadder {
    const WaitingTime* w = nullptr;
    double h = 0.0;
    std::size_t cells = 0;                // samples at 0..cells
    std::vector<double> m0, lin;          // per-cell density moments
    std::vector<std::vector<double>> ws;  // ws[n-2] = samples of w^{(n)}
};

CountLadder make_ladder(const WaitingTime& w, double h, std::size_t cells) {
    CountLadder L;
    L.w = &w;
    L.h = h;
    L.cells = cells;
    L.m0.resize(cells);
    L.lin.resize(cells);
    double pa = 1.0, sa = 0.0;
    for (std::size_t j = 0; j < cells; ++j) {
        const double a = static_cast<double>(j) * h, b = a + h;
        const double pb = w.survival(b);
        const double sb = w.survival_integral(b);
        const double m0 = pa - pb;                   // int_a^b w
        const double m1 = a * pa - b * pb + sb - sa; // int_a^b s w
        L.m0[j] = m0;
        L.lin[j] = (m1 - a * m0) / h;
        pa = pb;
        sa = sb;
    }
    const auto rule = detail::gauss_legendre01(48);
    const auto p = w.ml();
    std::vector<double> w2(cells + 1);
    w2[0] = (p.alpha == 0.5) ? p.amp * p.amp : 0.0;  // limit of w*w at 0
    for (std::size_t k = 1; k <= cells; ++k)
        w2[k] = second_density_point(w, static_cast<double>(k) * h, rule);
    L.ws.push_back(std::move(w2));
    return L;
}

// (w * g)(t_k) with exact density moments and linear interpolation of g.
double ladder_conv_point(const CountLadder& L, std::span<const double> g, std::size_t k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double a = g[k - j], b = g[k - j - 1];
        acc += L.m0[j] * a + L.lin[j] * (b - a);
    }
    return acc;
}

// Make w^{(2)} .. w^{(rung)} available.
void extend_ladder(CountLadder& L, std::size_t rung) {
    while (L.ws.size() + 1 < rung) {
        const auto& prev = L.ws.back();
        std::vector<double> next(L.cells + 1, 0.0);
        for (std::size_t k = 1; k <= L.cells; ++k)
            next[k] = ladder_conv_point(L, prev, k);
        L.ws.push_back(std::move(next));
    }
}

EventCountResult event_count_probs_exact(const WaitingTime& w, const TimeGrid& grid,
                                         std::size_t k, int n_max);
std::vector<GridFunction> count_prob_curves_exact(const WaitingTime& w, const TimeGrid& grid,
                                                  int n_max);

}  // namespace

struct WaitingTime::Table {
    GridFunction density;
    double tail_rate = 1.0;
    std::vector<double> cum;  // mass accumulated up to each grid node
    double grid_mass = 0.0;
    double tail_mass = 0.0;
    double mean = 0.0;
};

WaitingTime WaitingTime::exponential(double gamma) {
    if (gamma <= 0.0) throw std::invalid_argument("WaitingTime: rate must be > 0");
    WaitingTime w;
    w.kind_ = Kind::Exponential;
    w.gamma_ = gamma;
    return w;
}

WaitingTime WaitingTime::bi_exponential(double pa, double gamma_a, double pb, double gamma_b) {
    if (pa < 0.0 || pb < 0.0 || pa + pb <= 0.0)
        throw std::invalid_argument("WaitingTime: weights must be nonnegative, not both zero");
    if (gamma_a <= 0.0 || gamma_b <= 0.0)
        throw std::invalid_argument("WaitingTime: rates must be > 0");
    WaitingTime w;
    w.kind_ = Kind::BiExponential;
    const double norm = pa + pb;
    w.renormalized_ = std::abs(norm - 1.0) > 1e-12;
    w.pa_ = pa / norm;
    w.pb_ = pb / norm;
    w.ga_ = gamma_a;
    w.gb_ = gamma_b;
    return w;
}

WaitingTime WaitingTime::mittag_leffler(double alpha, double amp) {
    if (alpha <= 0.0 || alpha > 1.0)
        throw std::invalid_argument("WaitingTime: order must be in (0, 1]");
    if (amp <= 0.0) throw std::invalid_argument("WaitingTime: amplitude must be > 0");
    WaitingTime w;
    w.kind_ = Kind::MittagLeffler;
    w.alpha_ = alpha;
    w.amp_ = amp;
    return w;
}

WaitingTime WaitingTime::tabulated(GridFunction density, double tail_rate) {
    if (tail_rate <= 0.0) throw std::invalid_argument("WaitingTime: tail rate must be > 0");
    if (density.size() < 3)
        throw std::invalid_argument("WaitingTime: tabulated density needs >= 3 samples");
    for (std::size_t j = density.singular_exponent ? 1 : 0; j < density.size(); ++j)
        if (!(density.samples[j] >= -1e-12))
            throw std::invalid_argument("WaitingTime: tabulated density must be nonnegative");

    auto tbl = std::make_shared<Table>();
    const double h = density.grid.step;
    const std::size_t n = density.size();

    std::vector<double> cum(n, 0.0);
    if (density.singular_exponent) {
        const auto reg = detail::regularize(density);
        const double sigma = *density.singular_exponent;
        cum[1] = detail::product_integrate(std::span<const double>(reg.data(), 2), sigma, h);
        for (std::size_t k = 2; k < n; ++k)
            cum[k] = cum[k - 1] + 0.5 * h * (density.samples[k - 1] + density.samples[k]);
    } else {
        cum = cumulative_integral(density.samples, h);
    }
    const double w_end = density.samples[n - 1];
    const double mass = cum[n - 1] + w_end / tail_rate;
    if (mass <= 0.0) throw std::invalid_argument("WaitingTime: tabulated density has no mass");

    WaitingTime w;
    w.kind_ = Kind::Tabulated;
    w.renormalized_ = std::abs(mass - 1.0) > 1e-8;
    for (auto& v : density.samples) v /= mass;
    for (auto& v : cum) v /= mass;
    tbl->density = std::move(density);
    tbl->tail_rate = tail_rate;
    tbl->grid_mass = cum[n - 1];
    tbl->tail_mass = (w_end / mass) / tail_rate;
    tbl->cum = std::move(cum);
    {
        std::vector<double> ty(n);
        for (std::size_t j = 0; j < n; ++j)
            ty[j] = tbl->density.grid.t(j) * tbl->density.samples[j];
        const double span = tbl->density.grid.span();
        const double we = tbl->density.samples[n - 1];
        tbl->mean = integrate_corrected(ty, h) + we * (span / tail_rate + 1.0 / (tail_rate * tail_rate));
    }
    w.table_ = std::move(tbl);
    return w;
}

double WaitingTime::density(double tau) const {
    if (tau < 0.0) return 0.0;
    switch (kind_) {
        case Kind::Exponential:
            return gamma_ * std::exp(-gamma_ * tau);
        case Kind::BiExponential:
            return pa_ * ga_ * std::exp(-ga_ * tau) + pb_ * gb_ * std::exp(-gb_ * tau);
        case Kind::MittagLeffler: {
            if (alpha_ == 1.0) return amp_ * std::exp(-amp_ * tau);
            if (tau == 0.0) return std::numeric_limits<double>::infinity();
            const double x = amp_ * std::pow(tau, alpha_);
            const double e2 = (alpha_ == 0.5) ? ml_half_half(x)
                                              : mittag_leffler2(alpha_, alpha_, -x);
            return amp_ * std::pow(tau, alpha_ - 1.0) * e2;
        }
        case Kind::Tabulated: {
            const auto& t = *table_;
            const double span = t.density.grid.span();
            if (tau > span)
                return t.density.samples.back() * std::exp(-t.tail_rate * (tau - span));
            const double h = t.density.grid.step;
            const std::size_t j = std::min(static_cast<std::size_t>(tau / h),
                                           t.density.size() - 2);
            const double frac = tau / h - static_cast<double>(j);
            return t.density.samples[j] * (1.0 - frac) + t.density.samples[j + 1] * frac;
        }
    }
    return 0.0;
}

double WaitingTime::survival(double tau) const {
    if (tau <= 0.0) return 1.0;
    switch (kind_) {
        case Kind::Exponential:
            return std::exp(-gamma_ * tau);
        case Kind::BiExponential:
            return pa_ * std::exp(-ga_ * tau) + pb_ * std::exp(-gb_ * tau);
        case Kind::MittagLeffler: {
            if (alpha_ == 1.0) return std::exp(-amp_ * tau);
            if (alpha_ == 0.5) return erfcx(amp_ * std::sqrt(tau));
            return rqdyn::mittag_leffler(alpha_, -amp_ * std::pow(tau, alpha_));
        }
        case Kind::Tabulated: {
            const auto& t = *table_;
            const double span = t.density.grid.span();
            if (tau >= span) return t.tail_mass * std::exp(-t.tail_rate * (tau - span));
            const double h = t.density.grid.step;
            const std::size_t j = static_cast<std::size_t>(tau / h);
            const double frac = tau / h - static_cast<double>(j);
            const double c = t.cum[j] * (1.0 - frac) + t.cum[j + 1] * frac;
            return 1.0 - c;
        }
    }
    return 0.0;
}

double WaitingTime::survival_integral(double tau) const {
    if (tau <= 0.0) return 0.0;
    switch (kind_) {
        case Kind::Exponential:
            return -std::expm1(-gamma_ * tau) / gamma_;
        case Kind::BiExponential:
            return -pa_ * std::expm1(-ga_ * tau) / ga_ - pb_ * std::expm1(-gb_ * tau) / gb_;
        case Kind::MittagLeffler: {
            if (alpha_ == 1.0) return -std::expm1(-amp_ * tau) / amp_;
            const double x = amp_ * std::pow(tau, alpha_);
            if (alpha_ == 0.5) {
                const double y = x;  // amp * sqrt(tau)
                if (y < 0.5) {
                    // tau * E_{1/2,2}(-y): series, avoids cancellation near 0
                    double sum = 0.0, term = 0.0;
                    for (int k = 0; k < 40; ++k) {
                        term = std::pow(-y, k) / std::tgamma(0.5 * k + 2.0);
                        sum += term;
                        if (std::abs(term) < 1e-18) break;
                    }
                    return tau * sum;
                }
                return 2.0 * std::sqrt(tau) / (amp_ * std::sqrt(M_PI)) -
                       (1.0 - erfcx(y)) / (amp_ * amp_);
            }
            return tau * mittag_leffler2(alpha_, 2.0, -x);
        }
        case Kind::Tabulated: {
            // survival = 1 - cum with cum piecewise linear, exponential tail.
            const auto& t = *table_;
            const double span = t.density.grid.span();
            const double h = t.density.grid.step;
            double acc = 0.0;
            const double end = std::min(tau, span);
            const std::size_t full = static_cast<std::size_t>(end / h);
            for (std::size_t j = 0; j < full; ++j)
                acc += h * (1.0 - 0.5 * (t.cum[j] + t.cum[j + 1]));
            const double rem = end - static_cast<double>(full) * h;
            if (rem > 0.0 && full + 1 < t.cum.size()) {
                const double c0 = t.cum[full];
                const double slope = (t.cum[full + 1] - c0) / h;
                acc += rem * (1.0 - c0) - 0.5 * slope * rem * rem;
            }
            if (tau > span)
                acc += t.tail_mass * -std::expm1(-t.tail_rate * (tau - span)) / t.tail_rate;
            return acc;
        }
    }
    return 0.0;
}

double WaitingTime::laplace(double u) const {
    if (u <= 0.0) throw std::invalid_argument("WaitingTime::laplace: u must be > 0");
    switch (kind_) {
        case Kind::Exponential:
            return gamma_ / (gamma_ + u);
        case Kind::BiExponential:
            return pa_ * ga_ / (ga_ + u) + pb_ * gb_ / (gb_ + u);
        case Kind::MittagLeffler:
            return amp_ / (amp_ + std::pow(u, alpha_));
        case Kind::Tabulated:
            return laplace_numeric(table_->density, u, table_->tail_rate);
    }
    return 0.0;
}

double WaitingTime::kernel_laplace(double u) const {
    switch (kind_) {
        case Kind::Exponential:
            return gamma_;
        case Kind::MittagLeffler:
            return amp_ * std::pow(u, 1.0 - alpha_);
        default: {
            const double wl = laplace(u);
            return u * wl / (1.0 - wl);
        }
    }
}

double WaitingTime::mean() const {
    switch (kind_) {
        case Kind::Exponential:
            return 1.0 / gamma_;
        case Kind::BiExponential:
            return pa_ / ga_ + pb_ / gb_;
        case Kind::MittagLeffler:
            return alpha_ == 1.0 ? 1.0 / amp_ : std::numeric_limits<double>::infinity();
        case Kind::Tabulated:
            return table_->mean;
    }
    return 0.0;
}

std::optional<double> WaitingTime::singular_exponent() const {
    if (kind_ == Kind::MittagLeffler && alpha_ < 1.0) return alpha_ - 1.0;
    if (kind_ == Kind::Tabulated) return table_->density.singular_exponent;
    return std::nullopt;
}

double WaitingTime::sample(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unif(std::numeric_limits<double>::min(), 1.0);
    switch (kind_) {
        case Kind::Exponential:
            return -std::log(unif(rng)) / gamma_;
        case Kind::BiExponential: {
            const double g = (unif(rng) <= pa_) ? ga_ : gb_;
            return -std::log(unif(rng)) / g;
        }
        case Kind::MittagLeffler: {
            const double u = unif(rng), v = unif(rng);
            if (alpha_ == 1.0) return -std::log(u) / amp_;
            const double ap = alpha_ * M_PI;
            const double br = std::sin(ap) / std::tan(ap * v) - std::cos(ap);
            return std::pow(amp_, -1.0 / alpha_) * (-std::log(u)) * std::pow(br, 1.0 / alpha_);
        }
        case Kind::Tabulated: {
            const auto& t = *table_;
            const double u = unif(rng);
            if (u >= t.grid_mass) {
                const double r = 1.0 - u;  // remaining tail mass
                return t.density.grid.span() + std::log(t.tail_mass / r) / t.tail_rate;
            }
            const auto it = std::upper_bound(t.cum.begin(), t.cum.end(), u);
            const std::size_t j = static_cast<std::size_t>(it - t.cum.begin()) - 1;
            const double dj = t.cum[j + 1] - t.cum[j];
            const double frac = dj > 0.0 ? (u - t.cum[j]) / dj : 0.0;
            return t.density.grid.t(j) + frac * t.density.grid.step;
        }
    }
    return 0.0;
}

GridFunction WaitingTime::density_on(const TimeGrid& grid) const {
    std::vector<double> s(grid.count);
    const auto sing = singular_exponent();
    for (std::size_t k = 0; k < grid.count; ++k) s[k] = density(grid.t(k));
    if (sing) s[0] = 0.0;  // placeholder, quadrature ignores it
    return GridFunction(grid, std::move(s), sing);
}

GridFunction WaitingTime::survival_on(const TimeGrid& grid) const {
    std::vector<double> s(grid.count);
    for (std::size_t k = 0; k < grid.count; ++k) s[k] = survival(grid.t(k));
    return GridFunction(grid, std::move(s));
}

double WaitingTime::sprinkling0(double tau) const {
    switch (kind_) {
        case Kind::Exponential:
            return gamma_;
        case Kind::BiExponential: {
            const double gbar = pa_ * ga_ + pb_ * gb_;
            const double tbar = pa_ / ga_ + pb_ / gb_;
            const double eta = pa_ * gb_ + pb_ * ga_;
            return gbar - (gbar - 1.0 / tbar) * (1.0 - std::exp(-eta * tau));
        }
        case Kind::MittagLeffler:
            if (alpha_ == 1.0) return amp_;
            if (tau == 0.0) return std::numeric_limits<double>::infinity();
            return amp_ / std::tgamma(alpha_) * std::pow(tau, alpha_ - 1.0);
        case Kind::Tabulated:
            throw std::invalid_argument(
                "WaitingTime::sprinkling0: no closed form for tabulated variant; "
                "use sprinkling0_on");
    }
    return 0.0;
}

GridFunction WaitingTime::sprinkling0_on(const TimeGrid& grid) const {
    if (kind_ == Kind::Tabulated) return solve_renewal(density_on(grid));
    std::vector<double> s(grid.count);
    const auto sing = singular_exponent();
    for (std::size_t k = 0; k < grid.count; ++k) s[k] = sprinkling0(grid.t(k));
    if (sing) s[0] = 0.0;
    return GridFunction(grid, std::move(s), sing);
}

double WaitingTime::exp_rate() const {
    if (kind_ != Kind::Exponential)
        throw std::invalid_argument("WaitingTime::exp_rate: wrong variant");
    return gamma_;
}

WaitingTime::BiExpParams WaitingTime::biexp() const {
    if (kind_ != Kind::BiExponential)
        throw std::invalid_argument("WaitingTime::biexp: wrong variant");
    return {pa_, ga_, pb_, gb_};
}

WaitingTime::MlParams WaitingTime::ml() const {
    if (kind_ != Kind::MittagLeffler)
        throw std::invalid_argument("WaitingTime::ml: wrong variant");
    return {alpha_, amp_};
}

std::pair<double, double> biexp_asymptotic_weights(const WaitingTime& w) {
    const auto p = w.biexp();
    const double tbar = p.pa / p.ga + p.pb / p.gb;
    return {p.pa / (tbar * p.ga), p.pb / (tbar * p.gb)};
}

AgedRenewalTables::AgedRenewalTables(WaitingTime w, TimeGrid grid)
    : w_(std::move(w)), grid_(grid), f0_(w_.sprinkling0_on(grid_)) {}

std::size_t AgedRenewalTables::grid_index(double t) const {
    return snap_index(grid_, t, "AgedRenewalTables");
}

const AgedRenewalTables::SurvivalCurves& AgedRenewalTables::survival_curves(double t) const {
    const std::size_t jt = grid_index(t);
    std::lock_guard<std::mutex> lock(mu_);
    auto it = surv_cache_.find(jt);
    if (it != surv_cache_.end()) return it->second;

    SurvivalCurves sc;
    if (jt == 0) {
        sc.wtilde = w_.density_on(grid_);
        sc.ptilde = w_.survival_on(grid_);
    } else {
        const std::size_t n = grid_.count;
        const double h = grid_.step;
        const double age = grid_.t(jt);
        const bool sing = f0_.singular_exponent.has_value();
        const double sigma = sing ? *f0_.singular_exponent : 0.0;
        const std::vector<double> fsrc =
            sing ? detail::regularize(f0_) : f0_.samples;
        std::vector<double> wt(n), pt(n), pw(jt + 1), pp(jt + 1);
        for (std::size_t k = 0; k < n; ++k) {
            const double tau = grid_.t(k);
            for (std::size_t j = 0; j <= jt; ++j) {
                const double arg = tau + age - grid_.t(j);
                pw[j] = w_.density(arg) * fsrc[j];
                pp[j] = w_.survival(arg) * fsrc[j];
            }
            if (sing) {
                wt[k] = w_.density(tau + age) + detail::product_integrate(pw, sigma, h);
                pt[k] = w_.survival(tau + age) + detail::product_integrate(pp, sigma, h);
            } else {
                wt[k] = w_.density(tau + age) + integrate_corrected(pw, h);
                pt[k] = w_.survival(tau + age) + integrate_corrected(pp, h);
            }
        }
        // Renewal identity at zero delay: w~(0, t) = f(t, 0); replaces the
        // quadrature value, which is contaminated when the density diverges
        // at the origin.
        wt[0] = f0_.samples[jt];
        sc.wtilde = GridFunction(grid_, std::move(wt));
        sc.ptilde = GridFunction(grid_, std::move(pt));
    }
    return surv_cache_.emplace(jt, std::move(sc)).first->second;
}

const AgedRenewalTables::SprinklingCurves& AgedRenewalTables::sprinkling_curves(double t) const {
    const std::size_t jt = grid_index(t);
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = sprink_cache_.find(jt);
        if (it != sprink_cache_.end()) return it->second;
    }
    const SurvivalCurves& sc = survival_curves(t);  // takes/releases the lock itself

    SprinklingCurves out;
    if (jt == 0) {
        out.f = f0_;
        out.delta = GridFunction(grid_, std::vector<double>(grid_.count, 0.0));
    } else {
        const GridFunction conv = convolve(f0_, sc.wtilde);
        std::vector<double> f(grid_.count), d(grid_.count);
        for (std::size_t k = 0; k < grid_.count; ++k) {
            f[k] = sc.wtilde[k] + conv[k];
            d[k] = f[k] - f0_[k];
        }
        if (f0_.singular_exponent) d[0] = 0.0;  // placeholder below the divergence
        out.f = GridFunction(grid_, std::move(f));
        out.delta = GridFunction(grid_, std::move(d), f0_.singular_exponent);
    }
    std::lock_guard<std::mutex> lock(mu_);
    return sprink_cache_.emplace(jt, std::move(out)).first->second;
}

double AgedRenewalTables::aged_waiting(double tau, double t) const {
    return survival_curves(t).wtilde[grid_index(tau)];
}

double AgedRenewalTables::aged_survival(double tau, double t) const {
    return survival_curves(t).ptilde[grid_index(tau)];
}

double AgedRenewalTables::aged_sprinkling(double tau, double t) const {
    return sprinkling_curves(t).f[grid_index(tau)];
}

double AgedRenewalTables::delta(double tau, double t) const {
    return sprinkling_curves(t).delta[grid_index(tau)];
}

double aged_survival_series(double alpha, double amp, double tau, double t) {
    if (alpha <= 0.0 || alpha > 1.0)
        throw std::invalid_argument("aged_survival_series: order must be in (0, 1]");
    if (amp <= 0.0 || tau < 0.0 || t < 0.0)
        throw std::invalid_argument("aged_survival_series: bad arguments");
    const double total = tau + t;
    if (total == 0.0) return 1.0;
    const double x = amp * std::pow(total, alpha);
    if (x > 12.0)
        throw std::domain_error("aged_survival_series: outside the convergence window");
    const double y = t / total;
    const double ga = std::tgamma(alpha);
    long double sum = 0.0L, comp = 0.0L;
    const long double lx = std::log((long double)x);
    for (int k = 0; k < 400; ++k) {
        const double bk = x / ga * incomplete_beta(y, alpha, 1.0 + k * alpha);
        long double mag = (k == 0) ? 1.0L : expl(k * lx - lgammal(alpha * k + 1.0L));
        mag *= (1.0L + (long double)bk);
        const long double term = (k % 2 == 0) ? mag : -mag;
        const long double t2 = term - comp;
        const long double t3 = sum + t2;
        comp = (t3 - sum) - t2;
        sum = t3;
        if (k > 2 && fabsl(term) < 1e-20L * fabsl(sum) + 1e-30L) break;
    }
    return (double)sum;
}

double aged_survival_asymptotic(double alpha, double amp, double tau, double t) {
    if (alpha <= 0.0 || alpha >= 1.0)
        throw std::invalid_argument("aged_survival_asymptotic: order must be in (0, 1)");
    const double total = tau + t;
    return 1.0 / std::tgamma(1.0 - alpha) *
           (1.0 / (amp * std::pow(total, alpha)) +
            std::pow(t, alpha) / (alpha * std::tgamma(alpha) * std::pow(total, alpha)));
}

std::vector<GridFunction> count_prob_curves(const WaitingTime& w, const TimeGrid& grid,
                                            int n_max) {
    if (n_max < 0) throw std::invalid_argument("count_prob_curves: n_max must be >= 0");
    if (exact_moment_counting(w) && grid.count > 1)
        return count_prob_curves_exact(w, grid, n_max);
    const GridFunction wd = w.density_on(grid);
    const GridFunction p0 = w.survival_on(grid);
    std::vector<GridFunction> out;
    out.reserve(static_cast<std::size_t>(n_max) + 1);
    out.push_back(p0);
    GridFunction wn = wd;
    for (int n = 1; n <= n_max; ++n) {
        out.push_back(convolve(p0, wn));
        if (n < n_max) wn = convolve(wd, wn);
    }
    return out;
}

namespace {

EventCountResult event_count_probs_exact(const WaitingTime& w, const TimeGrid& grid,
                                         std::size_t k, int n_max) {
    const std::size_t r = refine_factor(grid.step);
    const double h = grid.step / static_cast<double>(r);
    const std::size_t cells = k * r;
    const double tau = static_cast<double>(k) * grid.step;
    CountLadder L = make_ladder(w, h, cells);

    EventCountResult res;
    res.p.push_back(w.survival(tau));
    double sum = res.p[0];
    const bool autocut = n_max < 0;
    const int limit = autocut ? 200 : n_max;
    // p_n = C_n - C_{n+1} with C_n the CDF of the n-th event time; the first
    // one is a survival complement, the rest integrate the ladder rungs.
    double c_prev = 1.0 - w.survival(tau);
    for (int n = 1; n <= limit; ++n) {
        extend_ladder(L, static_cast<std::size_t>(n) + 1);
        const double c_next = integrate_corrected(L.ws[n - 1], h);
        res.p.push_back(std::max(0.0, c_prev - c_next));
        sum += res.p.back();
        c_prev = c_next;
        if (autocut && sum > 1.0 - 1e-6) break;
    }
    res.truncated = sum < 1.0 - 1e-4;
    return res;
}

std::vector<GridFunction> count_prob_curves_exact(const WaitingTime& w, const TimeGrid& grid,
                                                  int n_max) {
    const std::size_t r = refine_factor(grid.step);
    const double h = grid.step / static_cast<double>(r);
    const std::size_t cells = (grid.count - 1) * r;
    CountLadder L = make_ladder(w, h, cells);

    std::vector<GridFunction> out;
    out.reserve(static_cast<std::size_t>(n_max) + 1);
    out.push_back(w.survival_on(grid));
    std::vector<double> c_prev(cells + 1);
    for (std::size_t i = 0; i <= cells; ++i)
        c_prev[i] = 1.0 - w.survival(static_cast<double>(i) * h);
    for (int n = 1; n <= n_max; ++n) {
        extend_ladder(L, static_cast<std::size_t>(n) + 1);
        const std::vector<double> c_next = cumulative_integral(L.ws[n - 1], h);
        std::vector<double> p(grid.count);
        for (std::size_t kk = 0; kk < grid.count; ++kk)
            p[kk] = std::max(0.0, c_prev[kk * r] - c_next[kk * r]);
        out.emplace_back(grid, std::move(p));
        c_prev = c_next;
    }
    return out;
}

}  // namespace

EventCountResult event_count_probs(const WaitingTime& w, const TimeGrid& grid, double tau,
                                   int n_max) {
    const std::size_t k = snap_index(grid, tau, "event_count_probs");
    if (exact_moment_counting(w) && k > 0)
        return event_count_probs_exact(w, grid, k, n_max);
    const GridFunction wd = w.density_on(grid);
    const GridFunction p0 = w.survival_on(grid);
    EventCountResult r;
    r.p.push_back(p0[k]);
    double sum = r.p[0];
    const bool autocut = n_max < 0;
    const int limit = autocut ? 200 : n_max;
    GridFunction wn = wd;
    for (int n = 1; n <= limit; ++n) {
        const GridFunction pn = convolve(p0, wn);
        r.p.push_back(pn[k]);
        sum += pn[k];
        if (autocut && sum > 1.0 - 1e-6) break;
        if (n < limit) wn = convolve(wd, wn);
    }
    r.truncated = sum < 1.0 - 1e-4;
    return r;
}

int default_count_cutoff(const WaitingTime& w, const TimeGrid& grid, double tau) {
    return static_cast<int>(event_count_probs(w, grid, tau, -1).p.size()) - 1;
}

namespace {

std::vector<GridFunction> aged_count_curves_exact(const AgedRenewalTables& tables,
                                                  std::size_t jt, int m_max) {
    const TimeGrid& grid = tables.grid();
    const WaitingTime& w = tables.waiting();
    const double t = static_cast<double>(jt) * grid.step;
    const std::size_t r = refine_factor(grid.step);
    const double h = grid.step / static_cast<double>(r);
    const std::size_t K = (grid.count - 1) * r, Kt = jt * r;
    CountLadder L = make_ladder(w, h, K);

    // Conditional waiting density on the refined grid: w~(s, t) = w(s + t)
    // plus the sprinkling convolution; the sprinkling density has a constant
    // regularized part, so product integration against its weight is clean.
    const auto mlp = w.ml();
    const double c0 = mlp.amp / std::tgamma(mlp.alpha);
    const double sigma = mlp.alpha - 1.0;
    std::vector<double> wg(K + Kt + 1);
    for (std::size_t x = 0; x <= K + Kt; ++x)
        wg[x] = w.density(static_cast<double>(x) * h);
    wg[0] = 0.0;
    std::vector<double> wt(K + 1), p(Kt + 1);
    wt[0] = w.sprinkling0(t);
    for (std::size_t i = 1; i <= K; ++i) {
        for (std::size_t j = 0; j <= Kt; ++j) p[j] = c0 * wg[i + Kt - j];
        wt[i] = wg[i + Kt] + detail::product_integrate(p, sigma, h);
    }

    std::vector<GridFunction> out;
    out.reserve(static_cast<std::size_t>(m_max) + 1);
    out.push_back(tables.survival_curves(t).ptilde);

    // g_m = P_0 * w^{(m-1)}; q_m(tau) = (g_m * w~)(tau).
    std::vector<double> gcur(K + 1);
    for (std::size_t i = 0; i <= K; ++i) gcur[i] = w.survival(static_cast<double>(i) * h);
    std::vector<double> y(K + 1);
    for (int m = 1; m <= m_max; ++m) {
        if (m >= 2) {
            std::vector<double> next(K + 1, 0.0);
            for (std::size_t k = 1; k <= K; ++k) next[k] = ladder_conv_point(L, gcur, k);
            gcur = std::move(next);
        }
        std::vector<double> q(grid.count, 0.0);
        for (std::size_t kk = 1; kk < grid.count; ++kk) {
            const std::size_t kr = kk * r;
            for (std::size_t j = 0; j <= kr; ++j) y[j] = gcur[kr - j] * wt[j];
            q[kk] = integrate_corrected(std::span<const double>(y.data(), kr + 1), h);
        }
        out.emplace_back(grid, std::move(q));
    }
    return out;
}

}  // namespace

std::vector<GridFunction> aged_count_curves(const AgedRenewalTables& tables, double t,
                                            int m_max) {
    if (m_max < 0) throw std::invalid_argument("aged_count_curves: m_max must be >= 0");
    const TimeGrid& grid = tables.grid();
    if (exact_moment_counting(tables.waiting()) && grid.count > 1) {
        const std::size_t jt = tables.grid_index(t);
        if (jt == 0) return count_prob_curves_exact(tables.waiting(), grid, m_max);
        return aged_count_curves_exact(tables, jt, m_max);
    }
    const auto& sc = tables.survival_curves(t);
    const GridFunction wd = tables.waiting().density_on(grid);
    const GridFunction p0 = tables.waiting().survival_on(grid);
    std::vector<GridFunction> out;
    out.reserve(static_cast<std::size_t>(m_max) + 1);
    out.push_back(sc.ptilde);
    GridFunction kernel = sc.wtilde;  // w^{(m-1)} * w~ as m advances
    for (int m = 1; m <= m_max; ++m) {
        out.push_back(convolve(p0, kernel));
        if (m < m_max) kernel = convolve(wd, kernel);
    }
    return out;
}

namespace {

// Joint counts on a refined internal grid with moment-exact handling of the
// singular first-event density.
TwoTimeCounts two_time_exact(const WaitingTime& w, const TimeGrid& grid, std::size_t ktau,
                             std::size_t kt, int m_max, int n_max) {
    const std::size_t r = refine_factor(grid.step);
    const double h = grid.step / static_cast<double>(r);
    const std::size_t Kt = kt * r, Ktau = ktau * r;
    CountLadder L = make_ladder(w, h, std::max(Kt, Ktau));
    extend_ladder(L, static_cast<std::size_t>(n_max) + 1);

    // Closed-form density/survival samples for arguments up to tau + t.
    const std::size_t span = Ktau + Kt;
    std::vector<double> wg(span + 1), pg(span + 1);
    for (std::size_t x = 0; x <= span; ++x) {
        wg[x] = w.density(static_cast<double>(x) * h);
        pg[x] = w.survival(static_cast<double>(x) * h);
    }
    wg[0] = 0.0;  // placeholder; the quadratures below never touch it

    TwoTimeCounts res;
    res.p.assign(m_max + 1, std::vector<double>(n_max + 1, 0.0));

    // v[n][i]: density of (n events in (0, t), next event at t + s_i).
    std::vector<std::vector<double>> v(n_max + 1, std::vector<double>(Ktau + 1));
    for (std::size_t i = 0; i <= Ktau; ++i) v[0][i] = wg[Kt + i];
    std::vector<double> y(std::max(Kt, Ktau) + 1);
    for (int n = 1; n <= n_max; ++n) {
        v[n][0] = L.ws[n - 1][Kt];  // v_n(0) = w^{(n+1)}(t)
        if (n == 1) {
            for (std::size_t i = 1; i <= Ktau; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < Kt; ++j) {
                    const double a = wg[i + Kt - j], b = wg[i + Kt - j - 1];
                    acc += L.m0[j] * a + L.lin[j] * (b - a);
                }
                v[1][i] = acc;
            }
        } else {
            const auto& wn = L.ws[n - 2];
            for (std::size_t i = 1; i <= Ktau; ++i) {
                for (std::size_t j = 0; j <= Kt; ++j) y[j] = wn[j] * wg[i + Kt - j];
                v[n][i] = integrate_corrected(std::span<const double>(y.data(), Kt + 1), h);
            }
        }
    }

    // Row m = 0: still no event by t + tau.
    res.p[0][0] = pg[span];
    for (int n = 1; n <= n_max; ++n) {
        if (n == 1) {
            double acc = 0.0;
            for (std::size_t j = 0; j < Kt; ++j) {
                const double a = pg[span - j], b = pg[span - j - 1];
                acc += L.m0[j] * a + L.lin[j] * (b - a);
            }
            res.p[0][1] = acc;
        } else {
            const auto& wn = L.ws[n - 2];
            for (std::size_t j = 0; j <= Kt; ++j) y[j] = wn[j] * pg[span - j];
            res.p[0][n] = integrate_corrected(std::span<const double>(y.data(), Kt + 1), h);
        }
    }

    // g_m = P_0 * w^{(m-1)} built by repeated moment-exact convolution.
    std::vector<std::vector<double>> gm;
    gm.emplace_back(pg.begin(), pg.begin() + static_cast<std::ptrdiff_t>(Ktau + 1));
    for (int m = 2; m <= m_max; ++m) {
        const auto& prev = gm.back();
        std::vector<double> cur(Ktau + 1, 0.0);
        for (std::size_t k = 1; k <= Ktau; ++k) cur[k] = ladder_conv_point(L, prev, k);
        gm.push_back(std::move(cur));
    }

    double sum = res.p[0][0];
    for (int n = 1; n <= n_max; ++n) sum += res.p[0][n];
    for (int m = 1; m <= m_max; ++m) {
        const auto& g = gm[m - 1];
        for (int n = 0; n <= n_max; ++n) {
            for (std::size_t j = 0; j <= Ktau; ++j) y[j] = g[Ktau - j] * v[n][j];
            res.p[m][n] = std::max(
                0.0, integrate_corrected(std::span<const double>(y.data(), Ktau + 1), h));
            sum += res.p[m][n];
        }
    }
    res.truncated = sum < 1.0 - 1e-4;
    return res;
}

}  // namespace

TwoTimeCounts two_time_event_probs(const WaitingTime& w, const TimeGrid& grid, double tau,
                                   double t, int m_max, int n_max) {
    const std::size_t ktau = snap_index(grid, tau, "two_time_event_probs");
    const std::size_t kt = snap_index(grid, t, "two_time_event_probs");
    if (m_max < 0) m_max = default_count_cutoff(w, grid, tau);
    if (n_max < 0) n_max = kt == 0 ? 0 : default_count_cutoff(w, grid, t);

    if (exact_moment_counting(w) && kt > 0 && ktau > 0 && n_max >= 1)
        return two_time_exact(w, grid, ktau, kt, m_max, n_max);

    TwoTimeCounts r;
    r.p.assign(m_max + 1, std::vector<double>(n_max + 1, 0.0));

    const GridFunction wd = w.density_on(grid);
    const GridFunction p0 = w.survival_on(grid);
    const double h = grid.step;

    if (kt == 0) {
        const auto curves = count_prob_curves(w, grid, m_max);
        double sum = 0.0;
        for (int m = 0; m <= m_max; ++m) {
            r.p[m][0] = curves[m][ktau];
            sum += r.p[m][0];
        }
        r.truncated = sum < 1.0 - 1e-4;
        return r;
    }

    const double age = grid.t(kt);

    // Event-number densities w^{(n)}; the second-window rows need them up to
    // m_max - 1 as well.
    const int n_conv = std::max(n_max + 1, m_max - 1);
    std::vector<GridFunction> wn;
    wn.push_back(wd);
    for (int n = 2; n <= n_conv; ++n) wn.push_back(convolve(wd, wn.back()));

    // v_n(s) = density of (n events in (0, t), next event at t + s).
    std::vector<std::vector<double>> v(n_max + 1, std::vector<double>(ktau + 1, 0.0));
    for (std::size_t i = 0; i <= ktau; ++i) v[0][i] = w.density(grid.t(i) + age);
    std::vector<double> p(kt + 1);
    for (int n = 1; n <= n_max; ++n) {
        const GridFunction& g = wn[n - 1];
        const bool sing = g.singular_exponent.has_value();
        const std::vector<double> gsrc = sing ? detail::regularize(g) : g.samples;
        for (std::size_t i = 0; i <= ktau; ++i) {
            if (i == 0) {
                v[n][0] = wn[n][kt];  // v_n(0) = w^{(n+1)}(t)
                continue;
            }
            const double s = grid.t(i);
            for (std::size_t j = 0; j <= kt; ++j)
                p[j] = w.density(s + age - grid.t(j)) * gsrc[j];
            v[n][i] = sing ? detail::product_integrate(p, *g.singular_exponent, h)
                           : integrate_corrected(p, h);
        }
    }

    // Row m = 0: still no event by t + tau.
    r.p[0][0] = w.survival(tau + age);
    for (int n = 1; n <= n_max; ++n) {
        const GridFunction& g = wn[n - 1];
        const bool sing = g.singular_exponent.has_value();
        const std::vector<double> gsrc = sing ? detail::regularize(g) : g.samples;
        for (std::size_t j = 0; j <= kt; ++j)
            p[j] = w.survival(tau + age - grid.t(j)) * gsrc[j];
        r.p[0][n] = sing ? detail::product_integrate(p, *g.singular_exponent, h)
                         : integrate_corrected(p, h);
    }

    // g_m = P_0 * w^{(m-1)}: survival after the (m-1) further events.
    std::vector<GridFunction> gm;
    gm.push_back(p0);
    for (int m = 2; m <= m_max; ++m) gm.push_back(convolve(p0, wn[m - 2]));

    std::vector<double> y(ktau + 1);
    for (int m = 1; m <= m_max; ++m) {
        for (int n = 0; n <= n_max; ++n) {
            for (std::size_t j = 0; j <= ktau; ++j)
                y[j] = gm[m - 1][ktau - j] * v[n][j];
            r.p[m][n] = integrate_corrected(y, h);
        }
    }

    double sum = 0.0;
    for (const auto& row : r.p)
        for (double x : row) sum += x;
    r.truncated = sum < 1.0 - 1e-4;
    return r;
}

std::vector<std::vector<GridFunction>> two_time_count_curves(const WaitingTime& w,
                                                             const TimeGrid& grid, double t,
                                                             int m_max, int n_max) {
    const std::size_t kt = snap_index(grid, t, "two_time_count_curves");
    if (m_max < 0) m_max = default_count_cutoff(w, grid, grid.span());
    if (n_max < 0) n_max = kt == 0 ? 0 : default_count_cutoff(w, grid, t);

    const GridFunction wd = w.density_on(grid);
    const GridFunction p0 = w.survival_on(grid);
    const double h = grid.step;
    const std::size_t nk = grid.count;

    std::vector<std::vector<GridFunction>> out(
        m_max + 1, std::vector<GridFunction>(
                       n_max + 1, GridFunction(grid, std::vector<double>(nk, 0.0))));

    if (kt == 0) {
        const auto curves = count_prob_curves(w, grid, m_max);
        for (int m = 0; m <= m_max; ++m) out[m][0] = curves[m];
        return out;
    }

    const double age = grid.t(kt);

    const int n_conv = std::max(n_max + 1, m_max - 1);
    std::vector<GridFunction> wn;
    wn.push_back(wd);
    for (int n = 2; n <= n_conv; ++n) wn.push_back(convolve(wd, wn.back()));

    // v_n(s): n events in (0, t) and the straddling event at t + s.
    std::vector<GridFunction> v;
    {
        std::vector<double> v0(nk);
        for (std::size_t i = 0; i < nk; ++i) v0[i] = w.density(grid.t(i) + age);
        v.emplace_back(grid, std::move(v0));
    }
    std::vector<double> p(kt + 1);
    for (int n = 1; n <= n_max; ++n) {
        const GridFunction& g = wn[n - 1];
        const bool sing = g.singular_exponent.has_value();
        const std::vector<double> gsrc = sing ? detail::regularize(g) : g.samples;
        std::vector<double> vn(nk);
        for (std::size_t i = 0; i < nk; ++i) {
            if (i == 0) {
                vn[0] = wn[n][kt];
                continue;
            }
            const double s = grid.t(i);
            for (std::size_t j = 0; j <= kt; ++j)
                p[j] = w.density(s + age - grid.t(j)) * gsrc[j];
            vn[i] = sing ? detail::product_integrate(p, *g.singular_exponent, h)
                         : integrate_corrected(p, h);
        }
        v.emplace_back(grid, std::move(vn));
    }

    // Row m = 0.
    {
        std::vector<double> row0(nk);
        for (std::size_t k = 0; k < nk; ++k) row0[k] = w.survival(grid.t(k) + age);
        out[0][0] = GridFunction(grid, std::move(row0));
        for (int n = 1; n <= n_max; ++n) {
            const GridFunction& g = wn[n - 1];
            const bool sing = g.singular_exponent.has_value();
            const std::vector<double> gsrc = sing ? detail::regularize(g) : g.samples;
            std::vector<double> row(nk);
            for (std::size_t k = 0; k < nk; ++k) {
                for (std::size_t j = 0; j <= kt; ++j)
                    p[j] = w.survival(grid.t(k) + age - grid.t(j)) * gsrc[j];
                row[k] = sing ? detail::product_integrate(p, *g.singular_exponent, h)
                              : integrate_corrected(p, h);
            }
            out[0][n] = GridFunction(grid, std::move(row));
        }
    }

    // Rows m >= 1: (P_0 * w^{(m-1)}) * v_n.
    std::vector<GridFunction> gm;
    gm.push_back(p0);
    for (int m = 2; m <= m_max; ++m) gm.push_back(convolve(p0, wn[m - 2]));
    for (int m = 1; m <= m_max; ++m)
        for (int n = 0; n <= n_max; ++n) out[m][n] = convolve(gm[m - 1], v[n]);

    return out;
}

}  // namespace rqdyn
