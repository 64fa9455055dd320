#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mfl/rng.hpp"
#include "mfl/sde.hpp"

using namespace mfl;

namespace {

MfSpdeProblem dirichlet_problem(std::size_t d, double b_scale = 1.0) {
    MfSpdeProblem prob;
    prob.spectrum = Spectrum::dirichlet(d, 0.0);
    prob.b_op = DiagOperator::constant(d, b_scale);
    prob.q_op = DiagOperator::constant(d, 1.0);
    prob.drift = MeanFieldDrift::tanh_bump(d);
    prob.horizon = 1.0;
    return prob;
}

} // namespace

TEST_CASE("exp euler: pure semigroup decay") {
    MfSpdeProblem prob = dirichlet_problem(3);
    prob.drift.phi = ScalarC2::constant(0.0); // b == 0
    prob.b_op = DiagOperator::constant(3, 0.0);
    prob.init.kind = InitialCondition::Kind::Gauss;
    prob.init.scale = 1.0;
    EnsembleState st = init_state(prob, 16, 3);
    const std::vector<double> before = st.particles;
    const double dt = 0.07;
    exp_euler_step(st, prob, dt);
    for (std::size_t j = 0; j < st.n; ++j)
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(st.particles[j * 3 + k] ==
                  doctest::Approx(std::exp(-prob.spectrum.lambda[k] * dt) * before[j * 3 + k]));
    CHECK(st.t == doctest::Approx(dt));
}

TEST_CASE("exp euler: constant drift with zero spectrum is exact") {
    MfSpdeProblem prob;
    prob.spectrum = Spectrum({0.0, 0.0}, 1.0);
    prob.b_op = DiagOperator::constant(2, 0.0);
    prob.q_op = DiagOperator::constant(2, 1.0);
    prob.drift = MeanFieldDrift::tanh_bump(2);
    prob.drift.phi = ScalarC2::constant(0.5); // b = 0.5 v, independent of the law
    prob.init.kind = InitialCondition::Kind::Zero;
    EnsembleState st = init_state(prob, 4, 1);
    exp_euler_step(st, prob, 0.25);
    for (std::size_t j = 0; j < st.n; ++j) {
        CHECK(st.particles[j * 2] == doctest::Approx(0.5 * prob.drift.v[0] * 0.25));
        CHECK(st.particles[j * 2 + 1] == doctest::Approx(0.0));
    }
}

TEST_CASE("exp euler: one-step variance from zero matches the closed form") {
    MfSpdeProblem prob;
    prob.spectrum = Spectrum({1.0}, 0.0);
    prob.b_op = DiagOperator::constant(1, 1.0);
    prob.q_op = DiagOperator::constant(1, 1.0);
    prob.drift = MeanFieldDrift::tanh_bump(1);
    prob.drift.phi = ScalarC2::constant(0.0);
    prob.init.kind = InitialCondition::Kind::Zero;
    const double dt = 0.8;
    const std::size_t n = 60000;
    EnsembleState st = init_state(prob, n, 21);
    exp_euler_step(st, prob, dt);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += st.particles[j] * st.particles[j];
    var /= static_cast<double>(n);
    const double expected = (1.0 - std::exp(-2.0 * dt)) / 2.0;
    CHECK(std::abs(var - expected) < 5.0 * expected * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("taylor2 terms: linear psi and phi kill the trace term") {
    MfSpdeProblem prob = dirichlet_problem(3);
    prob.drift.psi = ScalarC2::identity();
    prob.drift.phi = ScalarC2::identity();
    prob.init.kind = InitialCondition::Kind::Gauss;
    EnsembleState st = init_state(prob, 24, 5);
    Taylor2Terms terms;
    taylor2_step(st, prob, 0.05, 4, nullptr, &terms);
    CHECK(terms.tilde_trace == 0.0);
    CHECK(terms.tilde_dmu > 0.0);
}

TEST_CASE("taylor2 with zero drift equals exp euler on the same noise") {
    MfSpdeProblem prob = dirichlet_problem(4);
    prob.drift.phi = ScalarC2::constant(0.0);
    EnsembleState a = init_state(prob, 32, 9);
    EnsembleState b = init_state(prob, 32, 9);
    RngStream noise_rng = spawn_stream(1234, 0);
    const auto var = stoch_conv_variance(prob.spectrum, prob.b_op, prob.q_op, 0.03);
    std::vector<double> noise(32 * 4);
    for (std::size_t j = 0; j < 32; ++j)
        for (std::size_t k = 0; k < 4; ++k)
            noise[j * 4 + k] = std::sqrt(var[k]) * noise_rng.next_normal();
    Taylor2Terms terms;
    exp_euler_step(a, prob, 0.03, noise.data());
    taylor2_step(b, prob, 0.03, 4, noise.data(), &terms);
    CHECK(a.particles == b.particles);
    CHECK(terms.drift_integral == 0.0);
    CHECK(terms.tilde_dmu == 0.0);
    CHECK(terms.tilde_trace == 0.0);
}

TEST_CASE("taylor2 smoke: deterministic one-step against a fine reference") {
    // scalar case, noise off: one taylor2 step of 0.1 against 100 exp-euler
    // substeps; the taylor step must land within the local order band and
    // beat the single euler step
    MfSpdeProblem prob;
    prob.spectrum = Spectrum({1.0}, 0.0);
    prob.b_op = DiagOperator::constant(1, 0.0);
    prob.q_op = DiagOperator::constant(1, 1.0);
    prob.drift = MeanFieldDrift::tanh_bump(1);
    prob.init.kind = InitialCondition::Kind::Gauss;
    prob.init.scale = 0.5;
    prob.init.mean1 = 0.4;

    const double dt = 0.1;
    EnsembleState ref = init_state(prob, 64, 10);
    EnsembleState tay = ref;
    EnsembleState eul = ref;
    const std::vector<double> zero_noise(64, 0.0);
    for (int s = 0; s < 100; ++s) exp_euler_step(ref, prob, dt / 100.0, zero_noise.data());
    taylor2_step(tay, prob, dt, 4, zero_noise.data());
    exp_euler_step(eul, prob, dt, zero_noise.data());

    double err_t = 0.0, err_e = 0.0;
    for (std::size_t j = 0; j < 64; ++j) {
        err_t = std::max(err_t, std::abs(tay.particles[j] - ref.particles[j]));
        err_e = std::max(err_e, std::abs(eul.particles[j] - ref.particles[j]));
    }
    // measured locally third order (the deterministic case has no noise
    // roughness); euler is second order with a larger constant
    CHECK(err_t < 2.0 * dt * dt * dt);
    CHECK(err_t < 0.5 * err_e);
}

TEST_CASE("particle exchangeability") {
    MfSpdeProblem prob = dirichlet_problem(2);
    prob.init.mean1 = 0.3;
    const std::size_t n = 20;
    EnsembleState a = init_state(prob, n, 31);

    // permuted copy: same particles and streams, shuffled the same way
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    RngStream shuffle = spawn_stream(8, 8);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[shuffle.next_u64() % i]);

    EnsembleState b = a;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < 2; ++k) b.particles[j * 2 + k] = a.particles[perm[j] * 2 + k];
        b.streams[j] = a.streams[perm[j]];
    }

    for (int s = 0; s < 3; ++s) {
        exp_euler_step(a, prob, 0.05);
        exp_euler_step(b, prob, 0.05);
    }
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(b.particles[j * 2 + k] == a.particles[perm[j] * 2 + k]);

    // the taylor stepper preserves exchangeability the same way
    for (int s = 0; s < 2; ++s) {
        taylor2_step(a, prob, 0.05, 3);
        taylor2_step(b, prob, 0.05, 3);
    }
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(b.particles[j * 2 + k] == a.particles[perm[j] * 2 + k]);
}

TEST_CASE("mean-field consistency: OU marginals without measure coupling") {
    MfSpdeProblem prob;
    prob.spectrum = Spectrum::dirichlet(2, 0.0);
    prob.b_op = DiagOperator::constant(2, 1.0);
    prob.q_op = DiagOperator::constant(2, 1.0);
    prob.drift = MeanFieldDrift::tanh_bump(2);
    prob.drift.phi = ScalarC2::constant(0.5); // b = 0.5 v constant
    prob.drift.v = {1.0, 1.0};
    prob.init.kind = InitialCondition::Kind::Zero;
    prob.horizon = 0.5;

    const std::size_t n = 512;
    const double dt = 1.0 / 256;
    EnsembleState st = init_state(prob, n, 44);
    const std::size_t steps = static_cast<std::size_t>(std::llround(prob.horizon / dt));
    for (std::size_t s = 0; s < steps; ++s) exp_euler_step(st, prob, dt);

    for (std::size_t k = 0; k < 2; ++k) {
        const double lam = prob.spectrum.lambda[k];
        const double mean_exact = 0.5 * (1.0 - std::exp(-lam * prob.horizon)) / lam;
        const double var_exact = (1.0 - std::exp(-2.0 * lam * prob.horizon)) / (2.0 * lam);
        double m = 0.0, v = 0.0;
        for (std::size_t j = 0; j < n; ++j) m += st.particles[j * 2 + k];
        m /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double c = st.particles[j * 2 + k] - m;
            v += c * c;
        }
        v /= static_cast<double>(n - 1);
        const double se_mean = std::sqrt(var_exact / static_cast<double>(n));
        const double se_var = var_exact * std::sqrt(2.0 / static_cast<double>(n - 1));
        CHECK(std::abs(m - mean_exact) < 5.0 * se_mean);
        CHECK(std::abs(v - var_exact) < 5.0 * se_var);
    }
}

TEST_CASE("coupling sanity: taylor2 and exp euler meet as dt -> 0") {
    MfSpdeProblem prob = dirichlet_problem(4);
    prob.init.mean1 = 0.5;
    prob.horizon = 0.25;
    const std::size_t n = 48;

    double prev_gap = std::numeric_limits<double>::infinity();
    for (double dt : {1.0 / 16, 1.0 / 32, 1.0 / 64}) {
        EnsembleState a = init_state(prob, n, 77);
        EnsembleState b = a;
        RngStream noise_rng = spawn_stream(555, 3);
        const auto var = stoch_conv_variance(prob.spectrum, prob.b_op, prob.q_op, dt);
        const std::size_t steps = static_cast<std::size_t>(std::llround(prob.horizon / dt));
        std::vector<double> noise(n * 4);
        for (std::size_t s = 0; s < steps; ++s) {
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < 4; ++k)
                    noise[j * 4 + k] = std::sqrt(var[k]) * noise_rng.next_normal();
            exp_euler_step(a, prob, dt, noise.data());
            taylor2_step(b, prob, dt, 4, noise.data());
        }
        double gap = 0.0;
        for (std::size_t i = 0; i < a.particles.size(); ++i)
            gap = std::max(gap, std::abs(a.particles[i] - b.particles[i]));
        CHECK(gap < prev_gap);
        prev_gap = gap;
    }
}

TEST_CASE("simulate: pure decay observable and determinism") {
    MfSpdeProblem prob = dirichlet_problem(3);
    prob.drift.phi = ScalarC2::constant(0.0);
    prob.b_op = DiagOperator::constant(3, 0.0);
    prob.init.kind = InitialCondition::Kind::Gauss;
    prob.horizon = 0.25;

    const SimulateResult r1 = simulate(prob, Scheme::ExpEuler, 1.0 / 32, 32, 5, 4, true);
    // E||u||^2 decays exactly as sum e^{-2 lambda t} c^2
    const auto& first = r1.rows.front();
    const auto& last = r1.rows.back();
    EnsembleState st0 = init_state(prob, 32, 5);
    double expected = 0.0;
    for (std::size_t j = 0; j < 32; ++j)
        for (std::size_t k = 0; k < 3; ++k) {
            const double c = st0.particles[j * 3 + k];
            expected += std::exp(-2.0 * prob.spectrum.lambda[k] * prob.horizon) * c * c;
        }
    expected /= 32.0;
    CHECK(first.t == 0.0);
    CHECK(last.mean_sq_norm == doctest::Approx(expected).epsilon(1e-12));

    const SimulateResult r2 = simulate(prob, Scheme::ExpEuler, 1.0 / 32, 32, 5, 4, true);
    REQUIRE(r1.rows.size() == r2.rows.size());
    for (std::size_t i = 0; i < r1.rows.size(); ++i) {
        CHECK(r1.rows[i].mode_means == r2.rows[i].mode_means);
        CHECK(r1.rows[i].mean_sq_norm == r2.rows[i].mean_sq_norm);
        CHECK(r1.rows[i].w2_to_init.value() == r2.rows[i].w2_to_init.value());
    }

    CHECK_THROWS_AS(simulate(prob, Scheme::ExpEuler, 0.3, 8, 1, 4, false), std::invalid_argument);
}

TEST_CASE("simulate: Monte Carlo error scales like n^{-1/2}") {
    MfSpdeProblem prob = dirichlet_problem(2);
    prob.init.mean1 = 0.5;
    prob.horizon = 0.25;
    const double dt = 1.0 / 32;
    const std::size_t reps = 24;

    std::vector<double> ns{64, 256, 1024};
    std::vector<double> sds;
    for (double nd : ns) {
        const std::size_t n = static_cast<std::size_t>(nd);
        std::vector<double> obs;
        for (std::size_t r = 0; r < reps; ++r) {
            const SimulateResult res = simulate(prob, Scheme::ExpEuler, dt, n, 9000 + r, 4, false);
            obs.push_back(res.rows.back().mode_means[0]);
        }
        double m = 0.0;
        for (double o : obs) m += o;
        m /= static_cast<double>(reps);
        double v = 0.0;
        for (double o : obs) v += (o - m) * (o - m);
        sds.push_back(std::sqrt(v / static_cast<double>(reps - 1)));
    }
    const double slope = fit_log_slope(ns, sds);
    CHECK(slope == doctest::Approx(-0.5).epsilon(0.3)); // +-0.15 absolute
    CHECK(std::abs(slope + 0.5) < 0.15);
}

TEST_CASE("nan detection aborts with a numeric error") {
    MfSpdeProblem prob = dirichlet_problem(2);
    EnsembleState st = init_state(prob, 8, 1);
    st.particles[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(exp_euler_step(st, prob, 0.01), std::runtime_error);
}

TEST_CASE("taylor2 fd fallback matches the closed forms") {
    MfSpdeProblem prob = dirichlet_problem(2);
    prob.init.kind = InitialCondition::Kind::Gauss;
    prob.init.scale = 0.6;
    prob.init.mean1 = 0.4;

    EnsembleState closed = init_state(prob, 48, 13);
    EnsembleState fallback = closed;
    const std::vector<double> zero_noise(48 * 2, 0.0);

    taylor2_step(closed, prob, 0.05, 3, zero_noise.data());

    MfSpdeProblem prob_fb = prob;
    prob_fb.drift.has_dmu = false;
    prob_fb.drift.has_dydmu = false;
    // missing closed forms without the fallback flag is a config error
    EnsembleState dead = fallback;
    CHECK_THROWS_AS(taylor2_step(dead, prob_fb, 0.05, 3, zero_noise.data()), std::invalid_argument);

    taylor2_step(fallback, prob_fb, 0.05, 3, zero_noise.data(), nullptr, true);
    double gap = 0.0;
    for (std::size_t i = 0; i < closed.particles.size(); ++i)
        gap = std::max(gap, std::abs(closed.particles[i] - fallback.particles[i]));
    CHECK(gap < 5e-4); // the d_y d_mu fallback carries an O(1/n) bias
}

TEST_CASE("local error study: structure at toy scale") {
    MfSpdeProblem prob = dirichlet_problem(4);
    prob.init.mean1 = 0.7;
    const std::vector<double> dts{1.0 / 16, 1.0 / 32};
    const StudyResult res = local_error_study(prob, dts, 64, 4, 4, 99);
    REQUIRE(res.rows.size() == 2);
    for (const auto& row : res.rows) {
        CHECK(row.err_euler > 0.0);
        CHECK(row.err_taylor2 > 0.0);
        CHECK(row.err_taylor2 < row.err_euler);
    }
    CHECK(res.rows[1].err_euler < res.rows[0].err_euler);

    CHECK_THROWS_AS(local_error_study(prob, {0.1, 0.2}, 16, 2, 4, 1), std::invalid_argument);
}
