#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "rqdyn/trajectories.hpp"

using namespace rqdyn;

namespace {

Model dephasing_model(WaitingTime w) {
    return Model(Hamiltonian(Mat::Zero(2, 2)), KrausChannel({pauli_z()}), std::move(w));
}

DensityMatrix plus_state() {
    Mat m(2, 2);
    m << 0.5, 0.5, 0.5, 0.5;
    return DensityMatrix(m);
}

// parity over the aged event-count distribution: the dephasing coherence
double parity_reference(const AgedRenewalTables& tables, double t, std::size_t k, int m_max) {
    const auto aged = aged_count_curves(tables, t, m_max);
    double s = 0.0;
    for (int m = 0; m <= m_max; ++m) s += (m % 2 == 0 ? 1.0 : -1.0) * aged[m][k];
    return s;
}

}  // namespace

TEST_CASE("per-realization rng streams are reproducible and distinct") {
    auto a = realization_rng(42, 7);
    auto b = realization_rng(42, 7);
    auto c = realization_rng(42, 8);
    CHECK(a() == b());
    CHECK(a() != c());
}

TEST_CASE("model construction validates dimensions") {
    CHECK_THROWS(Model(Hamiltonian(Mat::Zero(2, 2)),
                       KrausChannel({Mat::Identity(3, 3)}), WaitingTime::exponential(1.0)));
    CHECK_NOTHROW(dephasing_model(WaitingTime::exponential(1.0)));
}

TEST_CASE("commutation detection") {
    CHECK(commuting_model(dephasing_model(WaitingTime::exponential(1.0))));
    Model m(Hamiltonian(pauli_z()), KrausChannel({pauli_z()}), WaitingTime::exponential(1.0));
    CHECK(commuting_model(m));
    Model bad(Hamiltonian(pauli_x()), KrausChannel({pauli_z()}), WaitingTime::exponential(1.0));
    CHECK(!commuting_model(bad));
}

TEST_CASE("ensemble mean of the exponential dephasing model decays at twice the rate") {
    const Model model = dephasing_model(WaitingTime::exponential(1.0));
    const TimeGrid grid(0.25, 9);
    const auto r = simulate_ensemble(model, plus_state(), Preparation::none(), 0.0, grid,
                                     {Observable(pauli_x(), "sx")}, 40000, 11, 0);
    for (std::size_t k = 1; k < grid.count; ++k) {
        const double ref = std::exp(-2.0 * grid.t(k));
        CHECK(std::abs(r.mean[0][k] - ref) < 4.0 * r.stderror[0][k] + 1e-12);
    }
    CHECK(r.mean[0][0] == doctest::Approx(1.0));
    CHECK(r.stderror[0][0] == doctest::Approx(0.0));
}

TEST_CASE("thread count does not change the ensemble statistics") {
    const Model model = dephasing_model(WaitingTime::bi_exponential(0.8, 1.0, 0.2, 0.05));
    const TimeGrid grid(0.5, 7);
    const std::vector<Observable> obs{Observable(pauli_x(), "sx"), Observable(pauli_z(), "sz")};
    const auto a = simulate_ensemble(model, plus_state(), Preparation::none(), 0.0, grid, obs,
                                     5000, 3, 1);
    const auto b = simulate_ensemble(model, plus_state(), Preparation::none(), 0.0, grid, obs,
                                     5000, 3, 4);
    for (std::size_t o = 0; o < obs.size(); ++o)
        for (std::size_t k = 0; k < grid.count; ++k) {
            CHECK(a.mean[o][k] == b.mean[o][k]);
            CHECK(a.stderror[o][k] == b.stderror[o][k]);
        }
}

TEST_CASE("aged preparation reproduces the aged parity decay") {
    auto w = WaitingTime::bi_exponential(0.8, 1.0, 0.2, 0.05);
    const Model model = dephasing_model(w);
    const TimeGrid grid(0.5, 9);
    const double age = 4.0;
    const auto r = simulate_ensemble(model, plus_state(), Preparation::at_age(plus_state()),
                                     age, grid, {Observable(pauli_x(), "sx")}, 60000, 29, 0);
    AgedRenewalTables tables(w, TimeGrid(0.01, 901));
    for (std::size_t k = 0; k < grid.count; ++k) {
        const std::size_t kk = tables.grid_index(grid.t(k));
        const double ref = parity_reference(tables, age, kk, 40);
        CHECK(std::abs(r.mean[0][k] - ref) < 4.0 * r.stderror[0][k] + 1e-9);
    }
}

TEST_CASE("semi-analytic state at zero delay returns the initial state") {
    const Model model = dephasing_model(WaitingTime::exponential(1.0));
    const TimeGrid grid(0.1, 11);
    const auto rho = semi_analytic_state(model, plus_state(), Preparation::none(), 0.0, 0.0,
                                         grid);
    CHECK((rho.matrix() - plus_state().matrix()).norm() < 1e-10);
}

TEST_CASE("semi-analytic state matches the closed-form dephasing coherence") {
    auto w = WaitingTime::exponential(1.0);
    const Model model = dephasing_model(w);
    const TimeGrid grid(0.01, 301);
    for (double tau : {0.5, 1.5, 3.0}) {
        const auto rho = semi_analytic_state(model, plus_state(), Preparation::none(), 0.0,
                                             tau, grid);
        CHECK(2.0 * rho.matrix()(0, 1).real() ==
              doctest::Approx(std::exp(-2.0 * tau)).epsilon(1e-4));
    }
}

TEST_CASE("semi-analytic state with aged preparation uses the aged counts") {
    auto w = WaitingTime::bi_exponential(0.8, 1.0, 0.2, 0.05);
    const Model model = dephasing_model(w);
    const TimeGrid grid(0.01, 801);
    AgedRenewalTables tables(w, grid);
    const double age = 3.0, tau = 2.0;
    const auto rho = semi_analytic_state(model, plus_state(), Preparation::at_age(plus_state()),
                                         age, tau, grid);
    const double ref = parity_reference(tables, age, tables.grid_index(tau), 60);
    CHECK(2.0 * rho.matrix()(0, 1).real() == doctest::Approx(ref).epsilon(1e-4));
}

TEST_CASE("correlation with the identity probe reduces to the plain mean") {
    auto w = WaitingTime::exponential(1.0);
    const Model model = dephasing_model(w);
    const TimeGrid grid(0.5, 5);
    const auto c = correlate(model, plus_state(), Observable(identity(2), "id"),
                             Observable(pauli_x(), "sx"), 0.0, grid, 30000, 5);
    for (std::size_t k = 0; k < grid.count; ++k)
        CHECK(std::abs(c.mean[k] - std::exp(-2.0 * grid.t(k))) < 4.0 * c.stderror[k] + 1e-12);
}

TEST_CASE("monte-carlo correlation matches the count-based analytic route") {
    auto w = WaitingTime::bi_exponential(0.8, 1.0, 0.2, 0.05);
    const Model model = dephasing_model(w);
    const TimeGrid grid(0.05, 41);
    const Observable o(pauli_x(), "sx"), a(pauli_x(), "sx");
    const auto mc = correlate(model, plus_state(), o, a, 1.0, grid, 40000, 17);
    const auto an = correlate_analytic(model, plus_state(), o, a, 1.0, grid);
    for (std::size_t k = 0; k < grid.count; k += 5)
        // the floor covers the analytic route's quadrature error where the
        // statistical error vanishes
        CHECK(std::abs(mc.mean[k] - an[k]) < 4.0 * mc.stderror[k] + 1e-6);
}

TEST_CASE("regression check passes for the exponential dephasing model") {
    const Model model = dephasing_model(WaitingTime::exponential(1.0));
    const TimeGrid grid(0.2, 11);
    DensityMatrix mixed(Mat(identity(2) / 2.0));
    const auto rep = regression_check(model, mixed, Observable(pauli_x(), "O"),
                                      Observable(pauli_x(), "A"), 0.0, grid, 30000, 23);
    CHECK(rep.pass);
    for (std::size_t k = 0; k < grid.count; ++k) {
        const double ref = std::exp(-2.0 * grid.t(k));
        CHECK(std::abs(rep.corr_norm[k] - ref) < 3.0 * rep.combined_se[k] + 1e-9);
        CHECK(std::abs(rep.expect_norm[k] - ref) < 3.0 * rep.combined_se[k] + 1e-9);
    }
}

TEST_CASE("published dephasing coherence target is the aged survival") {
    auto w = WaitingTime::mittag_leffler(0.5, 1.0);
    AgedRenewalTables tables(w, TimeGrid(0.05, 201));
    CHECK(dephasing_coherence(tables, 1.0, 0.0) ==
          doctest::Approx(w.survival(1.0)).epsilon(1e-8));
    CHECK(dephasing_coherence(tables, 1.0, 5.0) ==
          doctest::Approx(tables.aged_survival(1.0, 5.0)));
}

TEST_CASE("block reduction is worker-count independent") {
    auto eval = [](std::size_t idx, std::mt19937_64& rng, std::vector<double>& out) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        out[0] = u(rng) + double(idx % 3);
    };
    std::vector<double> s1, q1, s4, q4;
    detail::ensemble_reduce(10000, 99, 1, 1, eval, s1, q1);
    detail::ensemble_reduce(10000, 99, 4, 1, eval, s4, q4);
    CHECK(s1[0] == s4[0]);
    CHECK(q1[0] == q4[0]);
}
