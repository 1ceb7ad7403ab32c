#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <vector>

#include "rqdyn/numerics.hpp"

namespace rqdyn {

/// Waiting-time distribution of the interval between consecutive events.
class WaitingTime {
  public:
    enum class Kind { Exponential, BiExponential, MittagLeffler, Tabulated };

    static WaitingTime exponential(double gamma);
    /// Weights are renormalized to sum to one when they do not; check
    /// weights_renormalized() to surface a warning.
    static WaitingTime bi_exponential(double pa, double gamma_a, double pb, double gamma_b);
    static WaitingTime mittag_leffler(double alpha, double amp);
    /// Finite-support density continued past the grid with rate tail_rate.
    static WaitingTime tabulated(GridFunction density, double tail_rate);

    Kind kind() const { return kind_; }
    bool weights_renormalized() const { return renormalized_; }

    double density(double tau) const;
    double survival(double tau) const;
    /// Antiderivative int_0^tau survival(s) ds, in closed form where available.
    double survival_integral(double tau) const;
    /// Closed-form Laplace transform w(u) (numeric for Tabulated).
    double laplace(double u) const;
    /// Memory kernel K(u) = u w(u) / (1 - w(u)).
    double kernel_laplace(double u) const;
    double mean() const;  // +inf when divergent

    /// Origin exponent alpha-1 of the density, when weakly singular.
    std::optional<double> singular_exponent() const;

    double sample(std::mt19937_64& rng) const;

    GridFunction density_on(const TimeGrid& grid) const;
    GridFunction survival_on(const TimeGrid& grid) const;
    /// Sprinkling density f(tau, 0); closed forms for the analytic variants,
    /// Volterra solve for Tabulated.
    GridFunction sprinkling0_on(const TimeGrid& grid) const;
    double sprinkling0(double tau) const;

    // Parameter access (throws on wrong variant).
    double exp_rate() const;
    struct BiExpParams { double pa, ga, pb, gb; };
    BiExpParams biexp() const;
    struct MlParams { double alpha, amp; };
    MlParams ml() const;

  private:
    WaitingTime() = default;
    Kind kind_ = Kind::Exponential;
    bool renormalized_ = false;
    double gamma_ = 1.0;                      // Exponential
    double pa_ = 0, ga_ = 0, pb_ = 0, gb_ = 0;  // BiExponential
    double alpha_ = 0.5, amp_ = 1.0;          // MittagLeffler
    struct Table;
    std::shared_ptr<const Table> table_;      // Tabulated
};

/// Stationary-decay weights (P_a / (<tau> g_a), P_b / (<tau> g_b)) of the
/// bi-exponential aged survival in the t -> infinity limit.
std::pair<double, double> biexp_asymptotic_weights(const WaitingTime& w);

/// Aged renewal statistics on a shared uniform grid. Ages must lie on the
/// grid; per-age curve sets are cached after first use.
class AgedRenewalTables {
  public:
    AgedRenewalTables(WaitingTime w, TimeGrid grid);

    const WaitingTime& waiting() const { return w_; }
    const TimeGrid& grid() const { return grid_; }
    const GridFunction& f0() const { return f0_; }

    double aged_waiting(double tau, double t) const;     // w~(tau, t)
    double aged_survival(double tau, double t) const;    // P~0(tau, t)
    double aged_sprinkling(double tau, double t) const;  // f(tau, t)
    double delta(double tau, double t) const;            // f(tau,t) - f(tau,0)

    struct SurvivalCurves { GridFunction wtilde, ptilde; };
    struct SprinklingCurves { GridFunction f, delta; };
    const SurvivalCurves& survival_curves(double t) const;
    const SprinklingCurves& sprinkling_curves(double t) const;

    std::size_t grid_index(double t) const;  // throws on off-grid query

  private:
    WaitingTime w_;
    TimeGrid grid_;
    GridFunction f0_;
    mutable std::mutex mu_;
    mutable std::map<std::size_t, SurvivalCurves> surv_cache_;
    mutable std::map<std::size_t, SprinklingCurves> sprink_cache_;
};

/// Aged survival from the series expansion in incomplete-Beta coefficients
/// (fractional waiting time only). Converges for amp*(tau+t)^alpha up to ~10.
double aged_survival_series(double alpha, double amp, double tau, double t);

/// Long-time aged-survival asymptotic for the fractional waiting time,
/// valid for tau >> t and amp*tau^alpha >> 1.
double aged_survival_asymptotic(double alpha, double amp, double tau, double t);

struct EventCountResult {
    std::vector<double> p;  // p_0 .. p_n
    bool truncated = false;  // sum fell short of 1 - 1e-4
};

/// Curves p_n(tau_k) = P(exactly n events in (0, tau_k)), n = 0 .. n_max.
std::vector<GridFunction> count_prob_curves(const WaitingTime& w, const TimeGrid& grid,
                                            int n_max);

/// p_0..p_{n_max}(tau); n_max < 0 selects the smallest n with
/// sum > 1 - 1e-6, capped at 200.
EventCountResult event_count_probs(const WaitingTime& w, const TimeGrid& grid, double tau,
                                   int n_max = -1);

/// Aged count curves q_m(tau_k; t) = P(m events in (t, t+tau_k)), marginalized
/// over the count before t.
std::vector<GridFunction> aged_count_curves(const AgedRenewalTables& tables, double t,
                                            int m_max);

struct TwoTimeCounts {
    std::vector<std::vector<double>> p;  // p[m][n]
    bool truncated = false;
};

/// Joint P(tau, m; t, n): n events in (0, t) and m events in (t, t+tau).
TwoTimeCounts two_time_event_probs(const WaitingTime& w, const TimeGrid& grid, double tau,
                                   double t, int m_max, int n_max);

/// Full-grid version: out[m][n] is the curve P(tau_k, m; t, n) over the grid.
std::vector<std::vector<GridFunction>> two_time_count_curves(const WaitingTime& w,
                                                             const TimeGrid& grid, double t,
                                                             int m_max, int n_max);

int default_count_cutoff(const WaitingTime& w, const TimeGrid& grid, double tau);

}  // namespace rqdyn
