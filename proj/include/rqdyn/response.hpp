#pragma once

#include "rqdyn/trajectories.hpp"

namespace rqdyn {

/// Perturbation of the event dynamics: either an additive drive term in the
/// event superoperator, or a shift of the event occurrence times.
struct EventPerturbation {
    enum class Kind { Superoperator, EventTime };
    Kind kind = Kind::Superoperator;
    double lambda = 0.0;
    double omega = 1.0;
    bool xi_cos = true;  // xi(tau) = cos(omega * tau); otherwise xi == 1
    Mat op;              // dim^2 x dim^2 superoperator on vectorized states

    double xi(double tau) const;
    double xi_integral(double a, double b) const;
};

/// Checks shape and, for the superoperator kind, the traceless-output
/// condition Tr{O[rho]} = 0 and |lambda| <= 1.
void validate_perturbation(const EventPerturbation& p, int dim);

struct StationaryState {
    DensityMatrix rho;
};

/// Unique fixed point of the event channel, also invariant under the unitary
/// flow. Errors on a degenerate fixed-point space (multiplicity reported).
StationaryState stationary_state(const Model& model);

struct ResponseKernel {
    TimeGrid grid;
    std::vector<std::vector<double>> chi;  // chi[i][j] at (tau_i, tau'_j), j <= i
};

/// Stationary response kernel for the superoperator perturbation:
/// chi(tau, tau') = Tr[A G(tau - tau') O[rho_inf]] f(tau', age).
ResponseKernel response_kernel_event(const Model& model, const Observable& a,
                                     const EventPerturbation& pert, const TimeGrid& grid,
                                     double age = 0.0);

/// First-order expectation curve: A_inf + lambda * int_0^tau chi(tau,s) xi(s) ds.
std::vector<double> response_expectation_event(const Model& model, const Observable& a,
                                               const EventPerturbation& pert,
                                               const TimeGrid& grid, double age = 0.0);

/// Exact (all orders in lambda) driven population difference of the
/// depolarizing model with drive xi(tau) = cos(omega tau). The grid must
/// resolve the faster of the two frequencies with >= 20 points per period.
std::vector<double> sz_exact_depolarizing(const WaitingTime& w, double big_omega,
                                          double omega, double lambda,
                                          const TimeGrid& grid);

/// Stochastic route for the same quantity: scalar per-trajectory process,
/// rotated by cos between events and reset to lambda*xi at each event.
EnsembleResult simulate_perturbed_depolarizing(const WaitingTime& w, double big_omega,
                                               double omega, double lambda,
                                               std::size_t realizations, std::uint64_t seed,
                                               const TimeGrid& grid, double s0 = 0.0,
                                               unsigned threads = 0);

/// First-order expectation curve for the event-time perturbation. Requires
/// the vanishing-integral special case (E O rho_inf equal to rho_inf or 0)
/// unless `experimental` enables the general two-term kernel.
std::vector<double> response_event_time(const Model& model, const Observable& a,
                                        const EventPerturbation& pert, const TimeGrid& grid,
                                        bool experimental = false);

/// First-order perturbed survival for the event-time kind (state dependence
/// reduced to the scalar strength).
double perturbed_survival(const WaitingTime& w, const EventPerturbation& pert, double t,
                          double tau);
/// Grid version; errors (reporting the offending tau) if any value is negative.
GridFunction perturbed_survival_on(const WaitingTime& w, const EventPerturbation& pert,
                                   double t, const TimeGrid& grid);
/// First-order perturbed waiting density; integrates to 1 within grid tolerance.
GridFunction perturbed_density_on(const WaitingTime& w, const EventPerturbation& pert,
                                  double t, const TimeGrid& grid);

/// O[rho] = -(P+ rho P+ - P- rho P-): population-shift superoperator of the
/// symmetric two-level example (dim 2).
Mat population_shift_superop();

/// O[rho] = sigma_z Tr[rho] / 2: drive term of the depolarizing model (dim 2).
Mat depolarizing_drive_superop();

/// E[rho] = I/2 Tr[rho]: the depolarizing event channel (dim 2).
KrausChannel depolarizing_channel();

}  // namespace rqdyn
