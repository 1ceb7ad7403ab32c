#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>

#include "doctest.h"
#include "rqdyn/response.hpp"

using namespace rqdyn;

namespace {

Model depolarizing_model(WaitingTime w) {
    return Model(Hamiltonian(Mat::Zero(2, 2)), depolarizing_channel(), std::move(w));
}

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

}  // namespace

TEST_CASE("drive signal and its running integral") {
    EventPerturbation p;
    p.lambda = 0.1;
    p.omega = 2.0;
    p.xi_cos = true;
    CHECK(p.xi(0.0) == doctest::Approx(1.0));
    CHECK(p.xi(M_PI / 4.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.xi_integral(0.0, M_PI) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.xi_integral(0.2, 0.9) ==
          doctest::Approx((std::sin(1.8) - std::sin(0.4)) / 2.0).epsilon(1e-12));
    p.xi_cos = false;
    CHECK(p.xi(3.0) == doctest::Approx(1.0));
    CHECK(p.xi_integral(1.0, 4.0) == doctest::Approx(3.0));
}

TEST_CASE("perturbation validation enforces traceless output") {
    EventPerturbation good;
    good.kind = EventPerturbation::Kind::Superoperator;
    good.lambda = 0.1;
    good.op = depolarizing_drive_superop();
    CHECK_NOTHROW(validate_perturbation(good, 2));

    EventPerturbation bad = good;
    bad.op = population_shift_superop();  // output trace is the population difference
    CHECK_THROWS(validate_perturbation(bad, 2));

    EventPerturbation strong = good;
    strong.lambda = 1.5;
    CHECK_THROWS(validate_perturbation(strong, 2));
}

TEST_CASE("stationary state of the depolarizing channel is maximally mixed") {
    const auto s = stationary_state(depolarizing_model(WaitingTime::exponential(1.0)));
    CHECK((s.rho.matrix() - identity(2) / 2.0).norm() < 1e-10);
}

TEST_CASE("degenerate fixed-point spaces are rejected") {
    Model dephasing(Hamiltonian(Mat::Zero(2, 2)), KrausChannel({pauli_z()}),
                    WaitingTime::exponential(1.0));
    CHECK_THROWS_WITH_AS(stationary_state(dephasing), doctest::Contains("multiplicity"),
                         std::runtime_error);
}

TEST_CASE("stationary state of an amplitude-damping channel") {
    const double pr = 0.4;
    Mat k0(2, 2), k1(2, 2);
    k0 << 1.0, 0.0, 0.0, std::sqrt(1.0 - pr);
    k1 << 0.0, std::sqrt(pr), 0.0, 0.0;
    Model m(Hamiltonian(Mat::Zero(2, 2)), KrausChannel({k0, k1}),
            WaitingTime::exponential(1.0));
    const auto s = stationary_state(m);
    Mat ground = Mat::Zero(2, 2);
    ground(0, 0) = 1.0;
    CHECK((s.rho.matrix() - ground).norm() < 1e-8);
}

TEST_CASE("response kernel is shift invariant for the memoryless waiting time") {
    EventPerturbation pert;
    pert.kind = EventPerturbation::Kind::Superoperator;
    pert.lambda = 0.1;
    pert.op = depolarizing_drive_superop();
    const Model model = depolarizing_model(WaitingTime::exponential(1.0));
    const TimeGrid grid(0.05, 101);
    const auto k = response_kernel_event(model, Observable(pauli_z(), "sz"), pert, grid);
    double worst = 0.0;
    for (std::size_t i = 1; i < grid.count; ++i)
        for (std::size_t j = 1; j <= i; ++j)
            worst = std::max(worst, std::abs(k.chi[i][j] - k.chi[i - j][0]));
    CHECK(worst < 1e-6);
}

TEST_CASE("zero drive strength leaves the stationary expectation") {
    EventPerturbation pert;
    pert.kind = EventPerturbation::Kind::Superoperator;
    pert.lambda = 0.0;
    pert.op = depolarizing_drive_superop();
    const Model model = depolarizing_model(WaitingTime::mittag_leffler(0.5, 1.0));
    const TimeGrid grid(0.05, 41);
    const auto a = response_expectation_event(model, Observable(pauli_z(), "sz"), pert, grid);
    for (double v : a) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("kernel route agrees with the direct driven quadrature") {
    // For the depolarizing model without internal rotation the kernel response
    // equals the direct quadrature with the oscillation frequency set to zero.
    EventPerturbation pert;
    pert.kind = EventPerturbation::Kind::Superoperator;
    pert.lambda = 0.1;
    pert.omega = 1.0;
    pert.op = depolarizing_drive_superop();
    const auto w = WaitingTime::exponential(1.0);
    const Model model = depolarizing_model(w);
    const TimeGrid grid(0.02, 201);
    const auto a = response_expectation_event(model, Observable(pauli_z(), "sz"), pert, grid);
    const auto ref = sz_exact_depolarizing(w, 0.0, 1.0, 0.1, grid);
    for (std::size_t k = 0; k < grid.count; k += 20)
        CHECK(a[k] == doctest::Approx(ref[k]).epsilon(1e-6));
}

TEST_CASE("driven quadrature against an independent integrator") {
    const auto w = WaitingTime::exponential(1.0);
    const double Om = 3.0, om = 1.0, lam = 0.1;
    const TimeGrid grid(0.02, 151);
    const auto s = sz_exact_depolarizing(w, Om, om, lam, grid);
    CHECK(s[0] == doctest::Approx(0.0));
    for (double tau : {0.5, 1.5, 3.0}) {
        const double ref = lam * simpson(
                               [&](double tp) {
                                   return std::exp(-(tau - tp)) * std::cos(Om * (tau - tp)) *
                                          std::cos(om * tp);
                               },
                               0.0, tau, 2000);
        const std::size_t k = std::size_t(tau / grid.step + 0.5);
        CHECK(s[k] == doctest::Approx(ref).epsilon(1e-6));
    }
}

TEST_CASE("under-resolved oscillation grid is rejected") {
    CHECK_THROWS(sz_exact_depolarizing(WaitingTime::exponential(1.0), 50.0, 1.0, 0.1,
                                       TimeGrid(0.05, 101)));
}

TEST_CASE("stochastic driven average matches the quadrature") {
    const auto w = WaitingTime::exponential(1.0);
    const double Om = 3.0, om = 1.0, lam = 0.1;
    const TimeGrid grid(0.1, 41);
    const auto exact = sz_exact_depolarizing(w, Om, om, lam, grid);
    const auto mc = simulate_perturbed_depolarizing(w, Om, om, lam, 20000, 31, grid);
    for (std::size_t k = 1; k < grid.count; ++k)
        CHECK(std::abs(mc.mean[0][k] - exact[k]) < 4.0 * mc.stderror[0][k] + 1e-12);
}

TEST_CASE("unperturbed stochastic process stays at its stationary zero") {
    const auto mc = simulate_perturbed_depolarizing(WaitingTime::exponential(1.0), 2.0, 1.0,
                                                    0.0, 200, 5, TimeGrid(0.1, 11));
    for (double v : mc.mean[0]) CHECK(v == 0.0);
}

TEST_CASE("event-time response of the symmetric two-level example") {
    EventPerturbation pert;
    pert.kind = EventPerturbation::Kind::EventTime;
    pert.lambda = 0.1;
    pert.omega = 1.0;
    pert.xi_cos = true;
    pert.op = population_shift_superop();
    const auto w = WaitingTime::exponential(1.0);
    const Model model = depolarizing_model(w);
    const TimeGrid grid(0.02, 201);
    const auto a = response_event_time(model, Observable(pauli_z(), "sz"), pert, grid);
    // memoryless aged density collapses to w(tau - s); unit kernel prefactor
    for (double tau : {0.5, 1.5, 3.5}) {
        const double ref = 0.1 * simpson(
                               [&](double s) { return std::exp(-(tau - s)) * std::cos(s); },
                               0.0, tau, 2000);
        const std::size_t k = std::size_t(tau / grid.step + 0.5);
        CHECK(a[k] == doctest::Approx(ref).epsilon(1e-5));
    }
}

TEST_CASE("experimental kernel path reduces to the special case when it applies") {
    EventPerturbation pert;
    pert.kind = EventPerturbation::Kind::EventTime;
    pert.lambda = 0.1;
    pert.omega = 1.0;
    pert.xi_cos = true;
    pert.op = population_shift_superop();
    const Model model = depolarizing_model(WaitingTime::bi_exponential(0.8, 1.0, 0.2, 0.05));
    const TimeGrid grid(0.05, 81);
    const auto special = response_event_time(model, Observable(pauli_z(), "sz"), pert, grid,
                                             false);
    const auto general = response_event_time(model, Observable(pauli_z(), "sz"), pert, grid,
                                             true);
    for (std::size_t k = 0; k < grid.count; ++k)
        CHECK(special[k] == doctest::Approx(general[k]).epsilon(1e-9));
}

TEST_CASE("flat drive with zero strength is inert") {
    EventPerturbation pert;
    pert.kind = EventPerturbation::Kind::EventTime;
    pert.lambda = 0.0;
    pert.op = population_shift_superop();
    const Model model = depolarizing_model(WaitingTime::mittag_leffler(0.5, 0.5));
    const TimeGrid grid(0.1, 31);
    const auto a = response_event_time(model, Observable(pauli_z(), "sz"), pert, grid);
    for (double v : a) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("perturbed survival and waiting density") {
    EventPerturbation pert;
    pert.kind = EventPerturbation::Kind::EventTime;
    pert.lambda = 0.05;
    pert.omega = 1.0;
    pert.xi_cos = true;
    pert.op = population_shift_superop();
    const auto w = WaitingTime::exponential(1.0);
    CHECK(perturbed_survival(w, pert, 2.0, 0.0) == doctest::Approx(1.0));
    CHECK(perturbed_survival(w, pert, 2.0, -1.0) == doctest::Approx(1.0));
    const double tau = 1.3, t = 2.0;
    const double expected = std::exp(-tau) -
                            0.05 * std::exp(-tau) * (std::sin(t + tau) - std::sin(t));
    CHECK(perturbed_survival(w, pert, t, tau) == doctest::Approx(expected).epsilon(1e-12));

    SUBCASE("density renormalizes over the support") {
        for (const auto& wt : {WaitingTime::exponential(1.0),
                               WaitingTime::bi_exponential(0.8, 1.0, 0.2, 0.05)}) {
            const TimeGrid g(0.01, 6001);
            for (double age : {0.0, 2.0}) {
                const auto d = perturbed_density_on(wt, pert, age, g);
                const double mass = integrate_corrected(d.samples, g.step);
                CHECK(mass == doctest::Approx(1.0 - wt.survival(g.span())).epsilon(1e-3));
            }
        }
    }
    SUBCASE("fractional density keeps the origin exponent") {
        const auto wt = WaitingTime::mittag_leffler(0.5, 1.0);
        const auto d = perturbed_density_on(wt, pert, 1.0, TimeGrid(0.02, 201));
        CHECK(d.singular_exponent.has_value());
    }
    SUBCASE("excessive strength trips the positivity guard") {
        EventPerturbation strong = pert;
        strong.lambda = 0.9;
        strong.omega = 0.05;
        strong.xi_cos = true;
        CHECK_THROWS_AS(perturbed_survival_on(WaitingTime::exponential(1.0), strong, 0.0,
                                              TimeGrid(0.05, 401)),
                        std::domain_error);
    }
}

TEST_CASE("built-in superoperators act as documented") {
    const Mat drive = depolarizing_drive_superop();
    Vec rho_vec(4);
    rho_vec << 0.3, cplx(0.1, 0.2), cplx(0.1, -0.2), 0.7;  // column-major 2x2
    Vec out = drive * rho_vec;
    // sigma_z Tr[rho] / 2 with Tr[rho] = 1
    CHECK(std::abs(out(0) - cplx(0.5, 0)) < 1e-14);
    CHECK(std::abs(out(3) - cplx(-0.5, 0)) < 1e-14);
    CHECK(std::abs(out(1)) < 1e-14);

    const Mat shift = population_shift_superop();
    Vec s = shift * rho_vec;
    CHECK(std::abs(s(0) - cplx(-0.3, 0)) < 1e-14);
    CHECK(std::abs(s(3) - cplx(0.7, 0)) < 1e-14);

    const auto rep = validate_kraus(depolarizing_channel());
    CHECK(rep.ok);
}
