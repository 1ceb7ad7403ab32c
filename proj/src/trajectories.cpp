#include "rqdyn/trajectories.hpp"

#include <atomic>
#include <limits>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace rqdyn {

namespace {

constexpr std::size_t kBlock = 1024;  // fixed reduction block, independent of workers

std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

unsigned effective_threads(unsigned threads) {
    if (threads != 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace

std::mt19937_64 realization_rng(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = seed ^ (0x6a09e667f3bcc909ULL + index * 0x9e3779b97f4a7c15ULL);
    const std::uint64_t a = splitmix64(s);
    const std::uint64_t b = splitmix64(s);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

namespace detail {

void ensemble_reduce(std::size_t realizations, std::uint64_t seed, unsigned threads,
                     std::size_t n_stat,
                     const std::function<void(std::size_t, std::mt19937_64&,
                                              std::vector<double>&)>& eval,
                     std::vector<double>& sum, std::vector<double>& sumsq) {
    const std::size_t n_blocks = (realizations + kBlock - 1) / kBlock;
    std::vector<std::vector<double>> bsum(n_blocks), bsq(n_blocks);
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        std::vector<double> vals(n_stat);
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            auto& s = bsum[b];
            auto& q = bsq[b];
            s.assign(n_stat, 0.0);
            q.assign(n_stat, 0.0);
            const std::size_t lo = b * kBlock;
            const std::size_t hi = std::min(lo + kBlock, realizations);
            for (std::size_t r = lo; r < hi; ++r) {
                auto rng = realization_rng(seed, r);
                eval(r, rng, vals);
                for (std::size_t i = 0; i < n_stat; ++i) {
                    s[i] += vals[i];
                    q[i] += vals[i] * vals[i];
                }
            }
        }
    };

    const unsigned nw = std::min<std::size_t>(effective_threads(threads), n_blocks);
    if (nw <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < nw; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    sum.assign(n_stat, 0.0);
    sumsq.assign(n_stat, 0.0);
    for (std::size_t b = 0; b < n_blocks; ++b)
        for (std::size_t i = 0; i < n_stat; ++i) {
            sum[i] += bsum[b][i];
            sumsq[i] += bsq[b][i];
        }
}

}  // namespace detail

Model::Model(Hamiltonian h, KrausChannel c, WaitingTime w)
    : hamiltonian(std::move(h)), channel(std::move(c)), waiting(std::move(w)) {
    if (hamiltonian.dim() != channel.dim())
        throw std::invalid_argument("Model: Hamiltonian/channel dimension mismatch");
    const auto rep = validate_kraus(channel);
    if (!rep.ok)
        throw std::invalid_argument("Model: Kraus completeness violated, deviation " +
                                    std::to_string(rep.deviation));
}

bool commuting_model(const Model& model, double tol) {
    const Mat ls = liouvillian_superop(model.hamiltonian);
    const Mat es = channel_superop(model.channel);
    return (ls * es - es * ls).norm() < tol;
}

EnsembleResult simulate_ensemble(const Model& model, const DensityMatrix& rho0,
                                 const Preparation& prep, double age, const TimeGrid& grid,
                                 const std::vector<Observable>& observables,
                                 std::size_t realizations, std::uint64_t seed,
                                 unsigned threads) {
    if (realizations < 1)
        throw std::invalid_argument("simulate_ensemble: need at least one realization");
    if (model.dim() != rho0.dim())
        throw std::invalid_argument("simulate_ensemble: state dimension mismatch");
    for (const auto& o : observables)
        if (o.dim() != model.dim())
            throw std::invalid_argument("simulate_ensemble: observable dimension mismatch");
    if (prep.mode == Preparation::Mode::AtAge) {
        if (!prep.target) throw std::invalid_argument("simulate_ensemble: missing target");
        if (prep.target->dim() != model.dim())
            throw std::invalid_argument("simulate_ensemble: preparation dimension mismatch");
    }
    if (age < 0.0) throw std::invalid_argument("simulate_ensemble: age must be >= 0");

    const std::size_t nk = grid.count;
    const std::size_t nobs = observables.size();
    const bool prep_at_age = prep.mode == Preparation::Mode::AtAge;
    const bool trivial_h = model.hamiltonian.matrix().norm() == 0.0;
    const auto& w = model.waiting;

    auto evolve = [&](Mat& state, double dt) {
        if (dt <= 0.0 || trivial_h) return;
        const Mat u = model.hamiltonian.propagator(dt);
        state = u * state * u.adjoint();
    };

    auto eval = [&](std::size_t, std::mt19937_64& rng, std::vector<double>& vals) {
        double cursor = 0.0;
        double next = w.sample(rng);
        Mat state;
        if (prep_at_age) {
            while (next <= age) next += w.sample(rng);
            state = prep.target->matrix();
            if (!trivial_h && age > 0.0) {
                const Mat u = model.hamiltonian.propagator(age);
                state = u * state * u.adjoint();
            }
        } else {
            state = rho0.matrix();
            while (next <= age) {
                evolve(state, next - cursor);
                state = apply_channel_raw(model.channel, state);
                cursor = next;
                next += w.sample(rng);
            }
            evolve(state, age - cursor);
        }
        cursor = age;
        for (std::size_t k = 0; k < nk; ++k) {
            const double tk = age + grid.t(k);
            while (next <= tk) {
                evolve(state, next - cursor);
                state = apply_channel_raw(model.channel, state);
                cursor = next;
                next += w.sample(rng);
            }
            evolve(state, tk - cursor);
            cursor = tk;
            for (std::size_t o = 0; o < nobs; ++o)
                vals[o * nk + k] = expect_raw(state, observables[o].matrix());
        }
    };

    std::vector<double> sum, sumsq;
    detail::ensemble_reduce(realizations, seed, threads, nobs * nk, eval, sum, sumsq);

    EnsembleResult res;
    res.grid = grid;
    res.realizations = realizations;
    res.seed = seed;
    res.mean.assign(nobs, std::vector<double>(nk, 0.0));
    res.stderror.assign(nobs, std::vector<double>(nk, 0.0));
    const double n = static_cast<double>(realizations);
    for (std::size_t o = 0; o < nobs; ++o) {
        res.names.push_back(observables[o].name());
        for (std::size_t k = 0; k < nk; ++k) {
            const double m = sum[o * nk + k] / n;
            res.mean[o][k] = m;
            if (realizations > 1) {
                const double var = std::max(0.0, (sumsq[o * nk + k] - n * m * m) / (n - 1.0));
                res.stderror[o][k] = std::sqrt(var / n);
            }
        }
    }
    return res;
}

DensityMatrix semi_analytic_state(const Model& model, const DensityMatrix& rho0,
                                  const Preparation& prep, double age, double tau,
                                  const TimeGrid& grid, int m_max, int n_max) {
    if (!commuting_model(model))
        throw std::invalid_argument(
            "semi_analytic_state: unitary generator and channel do not commute; "
            "the event-counting oracle is only valid for commuting models");
    const int d = model.dim();
    const auto& w = model.waiting;
    const bool prep_at_age = prep.mode == Preparation::Mode::AtAge;

    Mat mix = Mat::Zero(d, d);
    double total = 0.0;
    if (prep_at_age) {
        if (!prep.target) throw std::invalid_argument("semi_analytic_state: missing target");
        AgedRenewalTables tables(w, grid);
        if (m_max < 0) m_max = default_count_cutoff(w, grid, tau);
        const auto q = aged_count_curves(tables, age, m_max);
        const std::size_t k = tables.grid_index(tau);
        Mat pw = prep.target->matrix();
        for (int m = 0; m <= m_max; ++m) {
            mix += q[m][k] * pw;
            total += q[m][k];
            if (m < m_max) pw = apply_channel_raw(model.channel, pw);
        }
    } else {
        const auto joint = two_time_event_probs(w, grid, tau, age, m_max, n_max);
        const int mm = static_cast<int>(joint.p.size()) - 1;
        const int nn = static_cast<int>(joint.p.front().size()) - 1;
        std::vector<Mat> pow;
        pow.push_back(rho0.matrix());
        for (int j = 1; j <= mm + nn; ++j)
            pow.push_back(apply_channel_raw(model.channel, pow.back()));
        for (int m = 0; m <= mm; ++m)
            for (int n = 0; n <= nn; ++n) {
                mix += joint.p[m][n] * pow[m + n];
                total += joint.p[m][n];
            }
    }
    if (total <= 0.0) throw std::runtime_error("semi_analytic_state: zero total weight");
    mix /= total;  // compensates the count-truncation mass
    const Mat u = model.hamiltonian.propagator(age + tau);
    return DensityMatrix(u * mix * u.adjoint());
}

namespace {

// Trace table T[k][n][m] = Re Tr{rho0 (E#)^n[ O(age) (E#)^m[A(age+tau_k)] S(age) ]},
// flattened as ((k * (n_cap+1)) + n) * (m_cap+1) + m.
struct TraceTable {
    std::vector<double> t;
    std::size_t nk = 0;
    int n_cap = 0, m_cap = 0;
    double at(std::size_t k, int n, int m) const {
        return t[(k * (n_cap + 1) + n) * (m_cap + 1) + m];
    }
};

TraceTable build_trace_table(const Model& model, const DensityMatrix& rho0,
                             const Observable& o, const Observable& a, double age,
                             const TimeGrid& grid, int n_cap, int m_cap,
                             const std::optional<Observable>& sandwich) {
    const bool trivial_h = model.hamiltonian.matrix().norm() == 0.0;
    auto heisenberg = [&](const Mat& x, double t) {
        if (trivial_h || t == 0.0) return x;
        const Mat u = model.hamiltonian.propagator(t);
        return Mat(u.adjoint() * x * u);
    };
    const Mat o_t = heisenberg(o.matrix(), age);
    const Mat s_t = sandwich ? heisenberg(sandwich->matrix(), age) : Mat();
    TraceTable tbl;
    tbl.nk = grid.count;
    tbl.n_cap = n_cap;
    tbl.m_cap = m_cap;
    tbl.t.assign(grid.count * (n_cap + 1) * (m_cap + 1), 0.0);
    for (std::size_t k = 0; k < grid.count; ++k) {
        Mat am = heisenberg(a.matrix(), age + grid.t(k));
        for (int m = 0; m <= m_cap; ++m) {
            Mat inner = o_t * am;
            if (sandwich) inner = inner * s_t;
            for (int n = 0; n <= n_cap; ++n) {
                tbl.t[(k * (n_cap + 1) + n) * (m_cap + 1) + m] =
                    (rho0.matrix() * inner).trace().real();
                if (n < n_cap) inner = apply_channel_dual(model.channel, inner);
            }
            if (m < m_cap) am = apply_channel_dual(model.channel, am);
        }
    }
    return tbl;
}

// Generous truncation for per-trajectory count clamping.
int count_cap(const WaitingTime& w, const TimeGrid& grid, double span) {
    const double s = std::min(span, grid.span());
    const std::size_t k = static_cast<std::size_t>(s / grid.step + 0.5);
    const TimeGrid sub(grid.step, std::max<std::size_t>(k + 1, 2));
    const int c = default_count_cutoff(w, sub, sub.span());
    return std::min(400, 2 * c + 16);
}

}  // namespace

CorrelationResult correlate(const Model& model, const DensityMatrix& rho0,
                            const Observable& o, const Observable& a, double age,
                            const TimeGrid& grid, std::size_t realizations,
                            std::uint64_t seed,
                            const std::optional<Observable>& sandwich, unsigned threads) {
    if (!commuting_model(model))
        throw std::invalid_argument(
            "correlate: unitary generator and channel do not commute");
    const auto& w = model.waiting;
    const int m_cap = count_cap(w, grid, grid.span());
    const int n_cap = age > 0.0 ? count_cap(w, grid, age) : 0;
    const TraceTable tbl =
        build_trace_table(model, rho0, o, a, age, grid, n_cap, m_cap, sandwich);
    const std::size_t nk = grid.count;

    auto eval = [&](std::size_t, std::mt19937_64& rng, std::vector<double>& vals) {
        double next = w.sample(rng);
        int n = 0;
        while (next <= age) {
            ++n;
            next += w.sample(rng);
        }
        n = std::min(n, tbl.n_cap);
        int m = 0;
        for (std::size_t k = 0; k < nk; ++k) {
            const double tk = age + grid.t(k);
            while (next <= tk) {
                ++m;
                next += w.sample(rng);
            }
            vals[k] = tbl.at(k, n, std::min(m, tbl.m_cap));
        }
    };

    std::vector<double> sum, sumsq;
    detail::ensemble_reduce(realizations, seed, threads, nk, eval, sum, sumsq);

    CorrelationResult res;
    res.grid = grid;
    res.realizations = realizations;
    res.seed = seed;
    res.mean.resize(nk);
    res.stderror.assign(nk, 0.0);
    const double nn = static_cast<double>(realizations);
    for (std::size_t k = 0; k < nk; ++k) {
        const double m = sum[k] / nn;
        res.mean[k] = m;
        if (realizations > 1) {
            const double var = std::max(0.0, (sumsq[k] - nn * m * m) / (nn - 1.0));
            res.stderror[k] = std::sqrt(var / nn);
        }
    }
    return res;
}

std::vector<double> correlate_analytic(const Model& model, const DensityMatrix& rho0,
                                       const Observable& o, const Observable& a, double age,
                                       const TimeGrid& grid, int m_max, int n_max,
                                       const std::optional<Observable>& sandwich) {
    if (!commuting_model(model))
        throw std::invalid_argument(
            "correlate_analytic: unitary generator and channel do not commute");
    const auto& w = model.waiting;
    const auto curves = two_time_count_curves(w, grid, age, m_max, n_max);
    const int mm = static_cast<int>(curves.size()) - 1;
    const int nn = static_cast<int>(curves.front().size()) - 1;
    const TraceTable tbl = build_trace_table(model, rho0, o, a, age, grid, nn, mm, sandwich);
    std::vector<double> out(grid.count, 0.0);
    for (std::size_t k = 0; k < grid.count; ++k)
        for (int m = 0; m <= mm; ++m)
            for (int n = 0; n <= nn; ++n)
                out[k] += curves[m][n][k] * tbl.at(k, n, m);
    return out;
}

RegressionReport regression_check(const Model& model, const DensityMatrix& rho0,
                                  const Observable& o, const Observable& a, double age,
                                  const TimeGrid& grid, std::size_t realizations,
                                  std::uint64_t seed, unsigned threads) {
    const auto corr = correlate(model, rho0, o, a, age, grid, realizations, seed,
                                std::nullopt, threads);

    // Effective initial matrix rho(age) * O, Hermitian part, split into
    // positive-weight pure preparations.
    Mat rho_t;
    if (age == 0.0) {
        rho_t = rho0.matrix();
    } else {
        const TimeGrid age_grid(grid.step,
                                static_cast<std::size_t>(age / grid.step + 0.5) + 1);
        rho_t = semi_analytic_state(model, rho0, Preparation::none(), 0.0, age, age_grid)
                    .matrix();
    }
    const Mat m0 = rho_t * o.matrix();
    const Mat herm = 0.5 * (m0 + m0.adjoint());
    Eigen::SelfAdjointEigenSolver<Mat> es(herm);

    const std::size_t nk = grid.count;
    std::vector<double> expect(nk, 0.0), expect_var(nk, 0.0);
    int comp = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double wgt = es.eigenvalues()[i];
        if (std::abs(wgt) < 1e-14) continue;
        Mat proj = es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
        auto prep = Preparation::at_age(DensityMatrix(std::move(proj)));
        const std::uint64_t comp_seed = seed + 0x51ed270b9f112ac5ULL * (comp + 1);
        const auto ens = simulate_ensemble(model, rho0, prep, age, grid, {a}, realizations,
                                           comp_seed, threads);
        for (std::size_t k = 0; k < nk; ++k) {
            expect[k] += wgt * ens.mean[0][k];
            expect_var[k] += wgt * wgt * ens.stderror[0][k] * ens.stderror[0][k];
        }
        ++comp;
    }

    RegressionReport rep;
    rep.grid = grid;
    rep.corr_norm.assign(nk, 0.0);
    rep.expect_norm.assign(nk, 0.0);
    rep.combined_se.assign(nk, 0.0);
    rep.sigma.assign(nk, 0.0);
    const double c0 = corr.mean[0];
    const double e0 = expect[0];
    if (c0 == 0.0 || e0 == 0.0)
        throw std::runtime_error("regression_check: vanishing normalization at tau = 0");
    for (std::size_t k = 0; k < nk; ++k) {
        const double cn = corr.mean[k] / c0;
        const double en = expect[k] / e0;
        rep.corr_norm[k] = cn;
        rep.expect_norm[k] = en;
        const double se_c = std::sqrt(corr.stderror[k] * corr.stderror[k] +
                                      cn * cn * corr.stderror[0] * corr.stderror[0]) /
                            std::abs(c0);
        const double se_e =
            std::sqrt(expect_var[k] + en * en * expect_var[0]) / std::abs(e0);
        const double comb = std::sqrt(se_c * se_c + se_e * se_e);
        rep.combined_se[k] = comb;
        const double diff = std::abs(cn - en);
        if (k == 0) continue;  // both exactly 1 by construction
        rep.sigma[k] = comb > 0.0 ? diff / comb
                                  : (diff < 1e-12 ? 0.0
                                                  : std::numeric_limits<double>::infinity());
        rep.max_sigma = std::max(rep.max_sigma, rep.sigma[k]);
    }
    rep.pass = rep.max_sigma <= 3.0;
    return rep;
}

double dephasing_coherence(const AgedRenewalTables& tables, double tau, double t) {
    return tables.aged_survival(tau, t);
}

}  // namespace rqdyn
