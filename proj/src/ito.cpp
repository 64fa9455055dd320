#include "mfl/ito.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mfl/rng.hpp"

namespace mfl {

namespace {

double sorted_mean(std::vector<double>& vals) {
    std::sort(vals.begin(), vals.end());
    double s = 0.0;
    for (double v : vals) s += v;
    return s / static_cast<double>(vals.size());
}

} // namespace

double TestFunctional122::mean_psi(const std::vector<double>& flat, std::size_t n, std::size_t d) const {
    std::vector<double> vals(n);
    for (std::size_t j = 0; j < n; ++j) vals[j] = psi.f(flat[j * d]);
    return sorted_mean(vals);
}

double TestFunctional122::f(double t, double x1, double s) const {
    return std::exp(alpha * t) * phi.f(x1) * (1.0 + s);
}

double TestFunctional122::dt(double t, double x1, double s) const {
    return alpha * std::exp(alpha * t) * phi.f(x1) * (1.0 + s);
}

double TestFunctional122::dx1(double t, double x1, double s) const {
    return std::exp(alpha * t) * phi.d1(x1) * (1.0 + s);
}

double TestFunctional122::dxx11(double t, double x1, double s) const {
    return std::exp(alpha * t) * phi.d2(x1) * (1.0 + s);
}

double TestFunctional122::dmu1(double t, double x1, double y1) const {
    return std::exp(alpha * t) * phi.f(x1) * psi.d1(y1);
}

double TestFunctional122::dydmu11(double t, double x1, double y1) const {
    return std::exp(alpha * t) * phi.f(x1) * psi.d2(y1);
}

double TestFunctional122::fd_self_check(std::uint64_t seed) const {
    RngStream rng = spawn_stream(seed, 0);
    const double h = 1e-5;
    double worst = 0.0;
    auto rel = [](double fd, double cf) {
        return std::abs(fd - cf) / std::max(1.0, std::abs(cf));
    };
    for (int trial = 0; trial < 20; ++trial) {
        const double t = 0.5 * rng.next_uniform();
        const double x1 = rng.next_normal();
        const double y1 = rng.next_normal();
        const double s = 0.5 * rng.next_uniform();

        worst = std::max(worst, rel((f(t + h, x1, s) - f(t - h, x1, s)) / (2 * h), dt(t, x1, s)));
        worst = std::max(worst, rel((f(t, x1 + h, s) - f(t, x1 - h, s)) / (2 * h), dx1(t, x1, s)));
        const double h2 = 1e-4; // larger step keeps the second difference above roundoff
        worst = std::max(worst,
                         rel((f(t, x1 + h2, s) - 2 * f(t, x1, s) + f(t, x1 - h2, s)) / (h2 * h2),
                             dxx11(t, x1, s)));
        // measure derivative: move a single atom of an m-point uniform measure
        const std::size_t m = 64;
        auto s_of = [&](double shift) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double yj = (j == 0) ? y1 + shift : y1 + 0.08 * static_cast<double>(j);
                acc += psi.f(yj);
            }
            return acc / static_cast<double>(m);
        };
        const double fd_mu =
            (f(t, x1, s_of(h)) - f(t, x1, s_of(-h))) / (2 * h) * static_cast<double>(m);
        worst = std::max(worst, rel(fd_mu, dmu1(t, x1, y1)));
        const double fd_ydmu =
            ((psi.d1(y1 + h) - psi.d1(y1 - h)) / (2 * h)) * std::exp(alpha * t) * phi.f(x1);
        worst = std::max(worst, rel(fd_ydmu, dydmu11(t, x1, y1)));
    }
    return worst;
}

std::size_t PiecewiseProcess::piece(double t) const {
    if (breakpoints.empty() || breakpoints.front() != 0.0)
        throw std::invalid_argument("PiecewiseProcess: breakpoints must start at 0");
    std::size_t p = 0;
    for (std::size_t i = 0; i < breakpoints.size(); ++i)
        if (t >= breakpoints[i] - 1e-12) p = i;
    return p;
}

ItoRunResult verify_flow_ito(const PiecewiseProcess& proc, const TestFunctional122& f, double horizon,
                             double dt, std::size_t n, std::size_t reps, std::uint64_t seed) {
    if (proc.b_values.size() != proc.breakpoints.size() ||
        proc.sigma_values.size() != proc.breakpoints.size())
        throw std::invalid_argument("verify_flow_ito: inconsistent process fixture");
    const std::size_t d = proc.q_diag.size();
    const std::size_t steps = static_cast<std::size_t>(std::llround(horizon / dt));
    if (std::abs(static_cast<double>(steps) * dt - horizon) > 1e-9)
        throw std::invalid_argument("verify_flow_ito: dt must divide the horizon");
    if (f.fd_self_check() > 1e-5)
        throw std::runtime_error("verify_flow_ito: fixture derivative check failed");
    if (std::abs(f.phi.d1(0.3)) > 0.0 || std::abs(f.phi.d1(-0.7)) > 0.0)
        throw std::invalid_argument("verify_flow_ito: fixture must be x-independent (constant phi)");

    ItoRunResult out;
    out.dt = dt;
    out.n = n;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const std::uint64_t rep_seed = seed + 0x9E3779B9ULL * (rep + 1);
        std::vector<RngStream> streams;
        streams.reserve(n);
        for (std::size_t j = 0; j < n; ++j) streams.push_back(spawn_stream(rep_seed, j));

        std::vector<double> u(n * d);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < d; ++k) u[j * d + k] = 0.5 * streams[j].next_normal();

        const double s0 = f.mean_psi(u, n, d);
        const double lhs0 = f.f(0.0, 0.0, s0); // phi == 1 fixtures: x argument unused
        double rhs = 0.0;

        for (std::size_t k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) * dt;
            const std::size_t pc = proc.piece(t);
            const std::vector<double>& b = proc.b_values[pc];
            const std::vector<double>& sg = proc.sigma_values[pc];

            const double s_now = f.mean_psi(u, n, d);
            // d_t term
            rhs += dt * f.dt(t, 0.0, s_now);
            // E[ <d_mu f(t,mu)(u_j), b> ]
            {
                std::vector<double> vals(n);
                for (std::size_t j = 0; j < n; ++j) vals[j] = f.dmu1(t, 0.0, u[j * d]) * b[0];
                rhs += dt * sorted_mean(vals);
            }
            // (1/2) E[ tr(d_y d_mu f(t,mu)(u_j) sigma Q sigma*) ]
            {
                const double m11 = sg[0] * sg[0] * proc.q_diag[0];
                std::vector<double> vals(n);
                for (std::size_t j = 0; j < n; ++j) vals[j] = f.dydmu11(t, 0.0, u[j * d]) * m11;
                rhs += dt * 0.5 * sorted_mean(vals);
            }

            // the empirical flow carries a finite-n martingale that the
            // deterministic formula does not see; accumulate it from the same
            // increments so it cancels exactly rather than statistically
            double mart = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t c = 0; c < d; ++c) {
                    const double dw = std::sqrt(proc.q_diag[c] * dt) * streams[j].next_normal();
                    const double du = b[c] * dt + sg[c] * dw;
                    if (c == 0) mart += f.dmu1(t, 0.0, u[j * d]) * sg[0] * dw;
                    u[j * d + c] += du;
                }
            }
            rhs += mart / static_cast<double>(n);
        }
        const double sT = f.mean_psi(u, n, d);
        const double lhs = f.f(horizon, 0.0, sT) - lhs0;
        out.rep_means.push_back(lhs - rhs);
    }

    double gm = 0.0;
    for (double r : out.rep_means) gm += r;
    gm /= static_cast<double>(out.rep_means.size());
    out.mean_residual = std::abs(gm);
    double var = 0.0;
    for (double r : out.rep_means) var += (r - gm) * (r - gm);
    out.sd_residual = out.rep_means.size() > 1
                          ? std::sqrt(var / static_cast<double>(out.rep_means.size() - 1))
                          : 0.0;
    return out;
}

ItoRunResult verify_mild_ito(const MfSpdeProblem& prob, const TestFunctional122& f, double horizon,
                             double dt, std::size_t n, std::size_t reps, std::uint64_t seed) {
    const std::size_t d = prob.dim();
    const std::size_t steps = static_cast<std::size_t>(std::llround(horizon / dt));
    if (std::abs(static_cast<double>(steps) * dt - horizon) > 1e-9)
        throw std::invalid_argument("verify_mild_ito: dt must divide the horizon");
    if (f.fd_self_check() > 1e-5)
        throw std::runtime_error("verify_mild_ito: fixture derivative check failed");

    ItoRunResult out;
    out.dt = dt;
    out.n = n;
    const std::vector<double> var = stoch_conv_variance(prob.spectrum, prob.b_op, prob.q_op, dt);
    std::vector<double> sdv(d);
    for (std::size_t k = 0; k < d; ++k) sdv[k] = std::sqrt(var[k]);
    const std::vector<double> decay_dt = semigroup_factors(prob.spectrum, dt);

    for (std::size_t rep = 0; rep < reps; ++rep) {
        const std::uint64_t rep_seed = seed + 0x9E3779B9ULL * (rep + 1);
        EnsembleState st = init_state(prob, n, rep_seed);
        const std::vector<double> x0 = st.particles;

        std::vector<double> acc(n, 0.0);     // per-particle accumulated RHS integrals
        std::vector<double> pushed(n * d), xi(n * d);

        for (std::size_t k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) * dt;
            const std::vector<double> decay_out = semigroup_factors(prob.spectrum, horizon - t);
            const std::vector<double> decay_out_next =
                semigroup_factors(prob.spectrum, horizon - t - dt);

            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < d; ++c)
                    pushed[j * d + c] = decay_out[c] * st.particles[j * d + c];

            const double s_pushed = f.mean_psi(pushed, n, d);

            // b(L(u_t)) and its pushforward e^{A(T-t)} b
            const DiscreteMeasure law_now = Ensemble(d, st.particles).law();
            const std::vector<double> b_now = prob.drift.eval_measure(law_now);
            std::vector<double> zb(d);
            for (std::size_t c = 0; c < d; ++c) zb[c] = decay_out[c] * b_now[c];

            // tilde-averages over the pushed ensemble
            std::vector<double> v1(n), v2(n);
            for (std::size_t j = 0; j < n; ++j) {
                v1[j] = f.psi.d1(pushed[j * d]);
                v2[j] = f.psi.d2(pushed[j * d]);
            }
            const double mean_dpsi = sorted_mean(v1);
            const double mean_ddpsi = sorted_mean(v2);

            const double m11 = decay_out[0] * decay_out[0] * prob.b_op.diag[0] * prob.b_op.diag[0] *
                               prob.q_op.diag[0];
            const double et = std::exp(f.alpha * t);

            for (std::size_t j = 0; j < n; ++j) {
                const double x1 = pushed[j * d];
                // d_s f
                acc[j] += dt * f.dt(t, x1, s_pushed);
                // tilde-E[ d_mu f(s, x, .)(y~) e^{A(T-s)} b ]
                acc[j] += dt * et * f.phi.f(x1) * mean_dpsi * zb[0];
                // (1/2) tilde-E[ tr(d_y d_mu f e^{A(T-s)} B Q B* e^{A(T-s)}) ]
                acc[j] += dt * 0.5 * et * f.phi.f(x1) * mean_ddpsi * m11;
                // d_x f e^{A(T-s)} b
                acc[j] += dt * f.dx1(t, x1, s_pushed) * zb[0];
                // (1/2) tr(d_xx f e^{A(T-s)} B Q B* e^{A(T-s)})
                acc[j] += dt * 0.5 * f.dxx11(t, x1, s_pushed) * m11;
                // finite-n compensation: particle j is both the state and an
                // atom of the empirical law, so the d_x d_mu cross term enters
                // at weight 1/n (d_mu^2 f vanishes, f is linear in mu)
                acc[j] += dt * et * f.phi.d1(x1) * f.psi.d1(x1) * m11 / static_cast<double>(n);
            }

            // simulator increments; the stochastic-integral term and the
            // finite-n martingale of the empirical law reuse them, so both
            // couple exactly
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < d; ++c)
                    xi[j * d + c] = sdv[c] * st.streams[j].next_normal();
            double mart = 0.0; // (1/n) sum_l psi'(y_l) e^{A(T-t-dt)} xi_l, first mode
            for (std::size_t l = 0; l < n; ++l) mart += f.psi.d1(pushed[l * d]) * xi[l * d];
            mart *= decay_out_next[0] / static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
                // int d_x f e^{A(T-s)} B dW over the step, frozen at the left point
                acc[j] += f.dx1(t, pushed[j * d], s_pushed) * decay_out_next[0] * xi[j * d];
                acc[j] += et * f.phi.f(pushed[j * d]) * mart;
            }
            exp_euler_step(st, prob, dt, xi.data());
        }

        // initial term f(0, e^{AT} u_0, L(e^{AT} u_0))
        const std::vector<double> decay_all = semigroup_factors(prob.spectrum, horizon);
        std::vector<double> pushed0(n * d);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < d; ++c) pushed0[j * d + c] = decay_all[c] * x0[j * d + c];
        const double s_pushed0 = f.mean_psi(pushed0, n, d);

        const double sT = f.mean_psi(st.particles, n, d);
        std::vector<double> res(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double rhs = f.f(0.0, pushed0[j * d], s_pushed0) + acc[j];
            const double lhs = f.f(horizon, st.particles[j * d], sT);
            res[j] = lhs - rhs;
        }
        out.rep_means.push_back(sorted_mean(res));
    }

    double gm = 0.0;
    for (double r : out.rep_means) gm += r;
    gm /= static_cast<double>(out.rep_means.size());
    out.mean_residual = std::abs(gm);
    double var_acc = 0.0;
    for (double r : out.rep_means) var_acc += (r - gm) * (r - gm);
    out.sd_residual = out.rep_means.size() > 1
                          ? std::sqrt(var_acc / static_cast<double>(out.rep_means.size() - 1))
                          : 0.0;
    return out;
}

namespace {

ItoStudyResult finish_study(std::vector<ItoRunResult> rows) {
    ItoStudyResult res;
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
        xs.push_back(std::log(r.dt));
        ys.push_back(std::log(std::max(r.mean_residual, 1e-300)));
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        num += (xs[i] - mx) * (ys[i] - my);
        den += (xs[i] - mx) * (xs[i] - mx);
    }
    res.fitted_rate = num / den;
    res.rows = std::move(rows);
    return res;
}

} // namespace

ItoStudyResult flow_ito_study(const PiecewiseProcess& proc, const TestFunctional122& f, double horizon,
                              const std::vector<double>& dts, std::size_t n, std::size_t reps,
                              std::uint64_t seed) {
    std::vector<ItoRunResult> rows;
    for (double dt : dts) rows.push_back(verify_flow_ito(proc, f, horizon, dt, n, reps, seed));
    return finish_study(std::move(rows));
}

ItoStudyResult mild_ito_study(const MfSpdeProblem& prob, const TestFunctional122& f, double horizon,
                              const std::vector<double>& dts, std::size_t n, std::size_t reps,
                              std::uint64_t seed) {
    std::vector<ItoRunResult> rows;
    for (double dt : dts) rows.push_back(verify_mild_ito(prob, f, horizon, dt, n, reps, seed));
    return finish_study(std::move(rows));
}

} // namespace mfl
