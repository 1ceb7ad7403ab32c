#include "rqdyn/response.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>
#include <cmath>
#include <stdexcept>

namespace rqdyn {

namespace {

Vec vec_of(const Mat& m) {
    return Eigen::Map<const Vec>(m.data(), m.size());
}

Mat unvec(const Vec& v, int d) {
    return Eigen::Map<const Mat>(v.data(), d, d);
}

// Samples of Tr[A G(delta) X0] over the grid, with G the unperturbed
// propagator expanded over event counts (commuting models only).
std::vector<double> propagated_trace(const Model& model, const Observable& a, const Mat& x0,
                                     const TimeGrid& grid) {
    if (!commuting_model(model))
        throw std::invalid_argument("response: model must have commuting unitary and channel");
    const int cutoff = default_count_cutoff(model.waiting, grid, grid.span());
    const auto pm = count_prob_curves(model.waiting, grid, cutoff);
    std::vector<Mat> pow;
    pow.push_back(x0);
    for (int m = 1; m <= cutoff; ++m)
        pow.push_back(apply_channel_raw(model.channel, pow.back()));
    const bool trivial_h = model.hamiltonian.matrix().norm() == 0.0;
    std::vector<double> g(grid.count, 0.0);
    for (std::size_t k = 0; k < grid.count; ++k) {
        Mat mix = Mat::Zero(x0.rows(), x0.cols());
        for (int m = 0; m <= cutoff; ++m) mix += pm[m][k] * pow[m];
        if (!trivial_h) {
            const Mat u = model.hamiltonian.propagator(grid.t(k));
            mix = u * mix * u.adjoint();
        }
        g[k] = (a.matrix() * mix).trace().real();
    }
    return g;
}

}  // namespace

double EventPerturbation::xi(double tau) const {
    return xi_cos ? std::cos(omega * tau) : 1.0;
}

double EventPerturbation::xi_integral(double a, double b) const {
    if (!xi_cos) return b - a;
    if (omega == 0.0) return b - a;
    return (std::sin(omega * b) - std::sin(omega * a)) / omega;
}

void validate_perturbation(const EventPerturbation& p, int dim) {
    const int d2 = dim * dim;
    if (p.op.rows() != d2 || p.op.cols() != d2)
        throw std::invalid_argument("EventPerturbation: superoperator must be dim^2 x dim^2");
    if (p.kind == EventPerturbation::Kind::Superoperator) {
        if (std::abs(p.lambda) > 1.0)
            throw std::invalid_argument("EventPerturbation: |lambda| must be <= 1");
        const Vec vi = vec_of(identity(dim));
        if ((vi.adjoint() * p.op).norm() > 1e-10)
            throw std::invalid_argument("EventPerturbation: drive output must be traceless");
    }
}

StationaryState stationary_state(const Model& model) {
    const int d = model.dim();
    const Mat es = channel_superop(model.channel);
    Eigen::ComplexEigenSolver<Mat> solver(es);
    int mult = 0;
    Eigen::Index which = -1;
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
        if (std::abs(solver.eigenvalues()[i] - cplx(1.0, 0.0)) < 1e-8) {
            ++mult;
            which = i;
        }
    }
    if (mult != 1)
        throw std::runtime_error("stationary_state: fixed-point space has multiplicity " +
                                 std::to_string(mult) + ", expected 1");
    Mat m = unvec(solver.eigenvectors().col(which), d);
    m = 0.5 * (m + m.adjoint()).eval();
    const double tr = m.trace().real();
    if (std::abs(tr) < 1e-12)
        throw std::runtime_error("stationary_state: traceless fixed-point candidate");
    m /= tr;
    DensityMatrix rho(m);
    if ((apply_channel_raw(model.channel, m) - m).norm() > 1e-10)
        throw std::runtime_error("stationary_state: fixed-point residual too large");
    // Invariance under the unitary flow at a few incommensurate times.
    for (double t : {0.37, 1.13, 2.71}) {
        const Mat u = model.hamiltonian.propagator(t);
        if ((u * m * u.adjoint() - m).norm() > 1e-10)
            throw std::runtime_error(
                "stationary_state: fixed point not invariant under the unitary flow");
    }
    return {std::move(rho)};
}

ResponseKernel response_kernel_event(const Model& model, const Observable& a,
                                     const EventPerturbation& pert, const TimeGrid& grid,
                                     double age) {
    if (pert.kind != EventPerturbation::Kind::Superoperator)
        throw std::invalid_argument("response_kernel_event: wrong perturbation kind");
    validate_perturbation(pert, model.dim());
    const auto st = stationary_state(model);
    const Mat x0 = unvec(pert.op * vec_of(st.rho.matrix()), model.dim());
    const auto g = propagated_trace(model, a, x0, grid);

    std::vector<double> f;
    if (age == 0.0) {
        f = model.waiting.sprinkling0_on(grid).samples;
    } else {
        AgedRenewalTables tables(model.waiting, grid);
        f = tables.sprinkling_curves(age).f.samples;
    }
    ResponseKernel out;
    out.grid = grid;
    out.chi.resize(grid.count);
    for (std::size_t i = 0; i < grid.count; ++i) {
        out.chi[i].resize(i + 1);
        for (std::size_t j = 0; j <= i; ++j) out.chi[i][j] = g[i - j] * f[j];
    }
    return out;
}

std::vector<double> response_expectation_event(const Model& model, const Observable& a,
                                               const EventPerturbation& pert,
                                               const TimeGrid& grid, double age) {
    if (pert.kind != EventPerturbation::Kind::Superoperator)
        throw std::invalid_argument("response_expectation_event: wrong perturbation kind");
    validate_perturbation(pert, model.dim());
    const auto st = stationary_state(model);
    const double a_inf = (a.matrix() * st.rho.matrix()).trace().real();
    const Mat x0 = unvec(pert.op * vec_of(st.rho.matrix()), model.dim());
    const auto g = propagated_trace(model, a, x0, grid);

    GridFunction f = age == 0.0 ? model.waiting.sprinkling0_on(grid)
                                : AgedRenewalTables(model.waiting, grid)
                                      .sprinkling_curves(age)
                                      .f;
    const bool sing = f.singular_exponent.has_value();
    const std::vector<double> fsrc = sing ? detail::regularize(f) : f.samples;
    const double h = grid.step;
    std::vector<double> out(grid.count, a_inf);
    std::vector<double> p;
    for (std::size_t k = 1; k < grid.count; ++k) {
        p.resize(k + 1);
        for (std::size_t j = 0; j <= k; ++j)
            p[j] = g[k - j] * pert.xi(grid.t(j)) * fsrc[j];
        const double integral = sing ? detail::product_integrate(p, *f.singular_exponent, h)
                                     : integrate_corrected(p, h);
        out[k] += pert.lambda * integral;
    }
    return out;
}

std::vector<double> sz_exact_depolarizing(const WaitingTime& w, double big_omega,
                                          double omega, double lambda,
                                          const TimeGrid& grid) {
    double fastest = 0.0;
    fastest = std::max(fastest, std::abs(big_omega));
    fastest = std::max(fastest, std::abs(omega));
    if (fastest > 0.0 && grid.step > 2.0 * M_PI / fastest / 20.0)
        throw std::invalid_argument(
            "sz_exact_depolarizing: grid step does not resolve the oscillation "
            "(need >= 20 points per period)");
    const GridFunction f0 = w.sprinkling0_on(grid);
    const bool sing = f0.singular_exponent.has_value();
    const std::vector<double> fsrc = sing ? detail::regularize(f0) : f0.samples;
    const double h = grid.step;
    const std::size_t n = grid.count;

    std::vector<double> q(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = w.survival(grid.t(i)) * std::cos(big_omega * grid.t(i));
        r[i] = std::cos(omega * grid.t(i)) * fsrc[i];
    }
    std::vector<double> out(n, 0.0), p;
    for (std::size_t k = 1; k < n; ++k) {
        p.resize(k + 1);
        for (std::size_t j = 0; j <= k; ++j) p[j] = q[k - j] * r[j];
        out[k] = lambda * (sing ? detail::product_integrate(p, *f0.singular_exponent, h)
                                : integrate_corrected(p, h));
    }
    return out;
}

EnsembleResult simulate_perturbed_depolarizing(const WaitingTime& w, double big_omega,
                                               double omega, double lambda,
                                               std::size_t realizations, std::uint64_t seed,
                                               const TimeGrid& grid, double s0,
                                               unsigned threads) {
    const std::size_t nk = grid.count;
    auto eval = [&](std::size_t, std::mt19937_64& rng, std::vector<double>& vals) {
        double last = 0.0, s = s0;
        double next = w.sample(rng);
        for (std::size_t k = 0; k < nk; ++k) {
            const double tk = grid.t(k);
            while (next <= tk) {
                s = lambda * std::cos(omega * next);
                last = next;
                next += w.sample(rng);
            }
            vals[k] = std::cos(big_omega * (tk - last)) * s;
        }
    };
    std::vector<double> sum, sumsq;
    detail::ensemble_reduce(realizations, seed, threads, nk, eval, sum, sumsq);

    EnsembleResult res;
    res.grid = grid;
    res.names = {"S_Z"};
    res.realizations = realizations;
    res.seed = seed;
    res.mean.assign(1, std::vector<double>(nk, 0.0));
    res.stderror.assign(1, std::vector<double>(nk, 0.0));
    const double n = static_cast<double>(realizations);
    for (std::size_t k = 0; k < nk; ++k) {
        const double m = sum[k] / n;
        res.mean[0][k] = m;
        if (realizations > 1) {
            const double var = std::max(0.0, (sumsq[k] - n * m * m) / (n - 1.0));
            res.stderror[0][k] = std::sqrt(var / n);
        }
    }
    return res;
}

namespace {

// Running integral Q_k(t_j) = int_0^{t_j} w(tau_k - x) f0(x) dx, accumulated
// cell by cell; the j = k endpoint uses the exact renewal identity
// Q_k(tau_k) = f0(tau_k) - w(tau_k).
class AgedWaitingRow {
  public:
    AgedWaitingRow(const WaitingTime& w, const GridFunction& f0) : w_(w), f0_(f0) {
        sing_ = f0.singular_exponent.has_value();
        if (sing_) freg_ = detail::regularize(f0);
    }

    // Fills row[j] = w~(tau_k - t_j, t_j) for j = 0..k.
    void fill(std::size_t k, std::vector<double>& row) const {
        const double h = f0_.grid.step;
        const double tk = f0_.grid.t(k);
        const double wk = w_.density(tk);
        row.resize(k + 1);
        row[0] = wk;
        double q = 0.0;
        for (std::size_t j = 1; j <= k; ++j) {
            if (j == k) {
                q = f0_.samples[k] - wk;
            } else if (sing_ && j == 1) {
                const auto [m0, m1] = detail::weight_moments(*f0_.singular_exponent, 0.0, h);
                const double p0 = wk * freg_[0];
                const double p1 = w_.density(tk - h) * freg_[1];
                q += p0 * m0 + (p1 - p0) / h * m1;
            } else {
                q += 0.5 * h *
                     (w_.density(tk - f0_.grid.t(j - 1)) * f0_.samples[j - 1] +
                      w_.density(tk - f0_.grid.t(j)) * f0_.samples[j]);
            }
            row[j] = wk + q;
        }
    }

  private:
    const WaitingTime& w_;
    const GridFunction& f0_;
    bool sing_ = false;
    std::vector<double> freg_;
};

}  // namespace

std::vector<double> response_event_time(const Model& model, const Observable& a,
                                        const EventPerturbation& pert, const TimeGrid& grid,
                                        bool experimental) {
    if (pert.kind != EventPerturbation::Kind::EventTime)
        throw std::invalid_argument("response_event_time: wrong perturbation kind");
    const int d = model.dim();
    const int d2 = d * d;
    if (pert.op.rows() != d2 || pert.op.cols() != d2)
        throw std::invalid_argument("response_event_time: superoperator must be dim^2 x dim^2");
    const auto st = stationary_state(model);
    const Vec vinf = vec_of(st.rho.matrix());
    const Mat es = channel_superop(model.channel);
    const Mat oprime = es * pert.op;
    const Vec y = oprime * vinf;
    const bool special = (y - vinf).norm() < 1e-10 || y.norm() < 1e-10;
    if (!special && !experimental)
        throw std::invalid_argument(
            "response_event_time: E O rho_inf is neither rho_inf nor 0; the general "
            "two-term kernel is only available behind the experimental flag");

    const double a_inf = (a.matrix() * st.rho.matrix()).trace().real();
    const Mat comm = es * pert.op - pert.op * es;
    const double a_prime = (a.matrix() * unvec(Vec(comm * vinf), d)).trace().real();

    const GridFunction f0 = model.waiting.sprinkling0_on(grid);
    const AgedWaitingRow wrow(model.waiting, f0);
    const double h = grid.step;
    const std::size_t n = grid.count;
    std::vector<double> out(n, a_inf);
    std::vector<double> row, yk;

    if (special) {
        for (std::size_t k = 1; k < n; ++k) {
            wrow.fill(k, row);
            yk.resize(k + 1);
            for (std::size_t j = 0; j <= k; ++j) yk[j] = row[j] * pert.xi(grid.t(j));
            out[k] += pert.lambda * a_prime * integrate_corrected(yk, h);
        }
        return out;
    }

    if (n > 600)
        throw std::invalid_argument(
            "response_event_time: experimental kernel limited to grids of <= 600 points");
    const auto g = propagated_trace(model, a, unvec(Vec(oprime * vinf), d), grid);
    std::vector<double> dg(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) dg[i] = (g[i + 1] - g[i - 1]) / (2.0 * h);
    if (n >= 3) {
        dg[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h);
        dg[n - 1] = (3.0 * g[n - 1] - 4.0 * g[n - 2] + g[n - 3]) / (2.0 * h);
    }
    // w~(t_d, t_j) table via the same running rows: wt[k][j] over totals k = d + j.
    std::vector<std::vector<double>> wt(n);
    for (std::size_t k = 0; k < n; ++k) wrow.fill(k, wt[k]);
    std::vector<double> inner;
    for (std::size_t k = 1; k < n; ++k) {
        yk.resize(k + 1);
        for (std::size_t j = 0; j <= k; ++j) {
            double chi = wt[k][j] * a_prime;  // wt[k][j] = w~(tau_k - t_j, t_j)
            inner.resize(k - j + 1);
            for (std::size_t i = j; i <= k; ++i)
                inner[i - j] = wt[i][j] * dg[k - i];
            chi += integrate_corrected(inner, h);
            yk[j] = chi * pert.xi(grid.t(j));
        }
        out[k] += pert.lambda * integrate_corrected(yk, h);
    }
    return out;
}

double perturbed_survival(const WaitingTime& w, const EventPerturbation& pert, double t,
                          double tau) {
    if (tau <= 0.0) return 1.0;
    return w.survival(tau) - pert.lambda * w.density(tau) * pert.xi_integral(t, t + tau);
}

GridFunction perturbed_survival_on(const WaitingTime& w, const EventPerturbation& pert,
                                   double t, const TimeGrid& grid) {
    std::vector<double> s(grid.count);
    for (std::size_t k = 0; k < grid.count; ++k) {
        s[k] = perturbed_survival(w, pert, t, grid.t(k));
        if (s[k] < 0.0)
            throw std::domain_error(
                "perturbed_survival_on: negative survival at tau = " +
                std::to_string(grid.t(k)) + "; perturbation too strong");
    }
    return GridFunction(grid, std::move(s));
}

GridFunction perturbed_density_on(const WaitingTime& w, const EventPerturbation& pert,
                                  double t, const TimeGrid& grid) {
    const std::size_t n = grid.count;
    const double h = grid.step;
    const auto sing = w.singular_exponent();
    std::vector<double> g(n, 0.0);
    for (std::size_t j = sing ? 1 : 0; j < n; ++j)
        g[j] = w.density(grid.t(j)) * pert.xi_integral(t, t + grid.t(j));
    std::vector<double> out(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double dg;
        if (j == 0) {
            dg = n >= 3 ? (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h) : 0.0;
        } else if (j + 1 == n) {
            dg = n >= 3 ? (3.0 * g[j] - 4.0 * g[j - 1] + g[j - 2]) / (2.0 * h) : 0.0;
        } else {
            dg = (g[j + 1] - g[j - 1]) / (2.0 * h);
        }
        out[j] = w.density(grid.t(j)) + pert.lambda * dg;
    }
    if (sing) out[0] = 0.0;
    return GridFunction(grid, std::move(out), sing);
}

Mat population_shift_superop() {
    Mat pp = Mat::Zero(2, 2), pm = Mat::Zero(2, 2);
    pp(0, 0) = 1.0;
    pm(1, 1) = 1.0;
    return -(Eigen::kroneckerProduct(pp.conjugate(), pp).eval() -
             Eigen::kroneckerProduct(pm.conjugate(), pm).eval());
}

Mat depolarizing_drive_superop() {
    const Mat z = pauli_z();
    const Mat id = identity(2);
    const Vec vz = Eigen::Map<const Vec>(z.data(), 4);
    const Vec vi = Eigen::Map<const Vec>(id.data(), 4);
    return 0.5 * vz * vi.transpose();
}

KrausChannel depolarizing_channel() {
    std::vector<Mat> ops;
    const double c = 1.0 / std::sqrt(2.0);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            Mat m = Mat::Zero(2, 2);
            m(a, b) = c;
            ops.push_back(m);
        }
    return KrausChannel(std::move(ops));
}

}  // namespace rqdyn
