#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rqdyn/qops.hpp"
#include "rqdyn/renewal.hpp"

namespace rqdyn {

/// Renewal-event open-system model: unitary drift between events, a CP
/// channel applied at each event, intervals drawn from the waiting time.
struct Model {
    Hamiltonian hamiltonian;
    KrausChannel channel;
    WaitingTime waiting;

    Model(Hamiltonian h, KrausChannel c, WaitingTime w);
    int dim() const { return hamiltonian.dim(); }
};

/// Optional state reset at a given age. The event clock is NOT reset: the
/// elapsed time since the last event is preserved across the preparation.
struct Preparation {
    enum class Mode { None, AtAge };
    Mode mode = Mode::None;
    std::optional<DensityMatrix> target;

    static Preparation none() { return {}; }
    static Preparation at_age(DensityMatrix t) {
        Preparation p;
        p.mode = Mode::AtAge;
        p.target = std::move(t);
        return p;
    }
};

struct EnsembleResult {
    TimeGrid grid;
    std::vector<std::string> names;
    std::vector<std::vector<double>> mean;    // [observable][grid point]
    std::vector<std::vector<double>> stderror;
    std::size_t realizations = 0;
    std::uint64_t seed = 0;
};

/// Counter-based per-realization RNG stream; bit-reproducible for any worker
/// count.
std::mt19937_64 realization_rng(std::uint64_t seed, std::uint64_t index);

/// Ensemble average of the trajectory dynamics. Observables are recorded on
/// `grid` offset by `age`: sample k is taken at absolute time age + grid.t(k).
/// With an at-age preparation the state is replaced at `age` while the event
/// clock keeps running.
EnsembleResult simulate_ensemble(const Model& model, const DensityMatrix& rho0,
                                 const Preparation& prep, double age, const TimeGrid& grid,
                                 const std::vector<Observable>& observables,
                                 std::size_t realizations, std::uint64_t seed,
                                 unsigned threads = 0);

/// True when the unitary generator commutes with the event channel
/// (superoperator commutator norm below tol).
bool commuting_model(const Model& model, double tol = 1e-10);

/// Event-counting oracle for the ensemble state: exact mixture over joint
/// event counts. Requires a commuting model. Negative m_max/n_max select the
/// automatic cutoff.
DensityMatrix semi_analytic_state(const Model& model, const DensityMatrix& rho0,
                                  const Preparation& prep, double age, double tau,
                                  const TimeGrid& grid, int m_max = -1, int n_max = -1);

struct CorrelationResult {
    TimeGrid grid;
    std::vector<double> mean;
    std::vector<double> stderror;
    std::size_t realizations = 0;
    std::uint64_t seed = 0;
};

/// Monte Carlo two-time correlation Tr[rho0 O(age) A(age + tau_k)], with an
/// optional third operator multiplied on the right of A inside the same event
/// window (sandwich form). Requires a commuting model.
CorrelationResult correlate(const Model& model, const DensityMatrix& rho0,
                            const Observable& o, const Observable& a, double age,
                            const TimeGrid& grid, std::size_t realizations,
                            std::uint64_t seed,
                            const std::optional<Observable>& sandwich = std::nullopt,
                            unsigned threads = 0);

/// Semi-analytic route for the same correlation via joint count curves.
std::vector<double> correlate_analytic(const Model& model, const DensityMatrix& rho0,
                                       const Observable& o, const Observable& a, double age,
                                       const TimeGrid& grid, int m_max = -1, int n_max = -1,
                                       const std::optional<Observable>& sandwich = std::nullopt);

struct RegressionReport {
    TimeGrid grid;
    std::vector<double> corr_norm;     // C(tau)/C(0)
    std::vector<double> expect_norm;   // Abar(tau)/Abar(0)
    std::vector<double> combined_se;
    std::vector<double> sigma;         // |difference| in combined-stderr units
    double max_sigma = 0.0;
    bool pass = false;
};

/// Checks that the normalized correlation decay equals the normalized
/// expectation decay started from the effective state rho(age) * O
/// (split into positive-weight states by eigendecomposition).
RegressionReport regression_check(const Model& model, const DensityMatrix& rho0,
                                  const Observable& o, const Observable& a, double age,
                                  const TimeGrid& grid, std::size_t realizations,
                                  std::uint64_t seed, unsigned threads = 0);

/// Published closed-form coherence target for the pure-dephasing model:
/// the aged survival probability.
double dephasing_coherence(const AgedRenewalTables& tables, double tau, double t);

namespace detail {

/// Deterministic block-parallel reduction: eval(index, rng, values) fills
/// `n_stat` statistics per realization; block partial sums are combined in
/// block order, so the result is independent of the worker count.
void ensemble_reduce(std::size_t realizations, std::uint64_t seed, unsigned threads,
                     std::size_t n_stat,
                     const std::function<void(std::size_t, std::mt19937_64&,
                                              std::vector<double>&)>& eval,
                     std::vector<double>& sum, std::vector<double>& sumsq);

}  // namespace detail

}  // namespace rqdyn
