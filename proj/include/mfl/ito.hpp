#pragma once

#include <cstdint>
#include <vector>

#include "mfl/sde.hpp"
#include "mfl/spectral.hpp"
#include "mfl/zoo.hpp"

namespace mfl {

// f(t,x,mu) = e^{alpha t} phi(<x,e1>) (1 + E_mu[psi(<y,e1>)]) with closed-form
// time, state and measure derivatives; phi == 1 gives the flow-of-measures
// form, psi == 0 removes the measure coupling.
struct TestFunctional122 {
    double alpha = 1.0;
    ScalarC2 phi = ScalarC2::tanh_fn();
    ScalarC2 psi = ScalarC2::gauss_bump();

    double mean_psi(const std::vector<double>& flat, std::size_t n, std::size_t d) const;

    double f(double t, double x1, double s) const;
    double dt(double t, double x1, double s) const;
    double dx1(double t, double x1, double s) const;       // <d_x f, e_1>
    double dxx11(double t, double x1, double s) const;     // e1 (x) e1 coefficient of d_xx f
    double dmu1(double t, double x1, double y1) const;     // <d_mu f(.)(y), e_1>
    double dydmu11(double t, double x1, double y1) const;  // e1 (x) e1 coefficient of d_y d_mu f

    // max relative error of the closed forms against central differences
    double fd_self_check(std::uint64_t seed = 7) const;
};

// deterministic piecewise-constant-in-time coefficients of an Ito process
// du = b_t dt + sigma_t dW (no semigroup)
struct PiecewiseProcess {
    std::vector<double> breakpoints;            // ascending, first entry 0
    std::vector<std::vector<double>> b_values;  // one H-vector per piece
    std::vector<std::vector<double>> sigma_values; // diagonal per piece
    std::vector<double> q_diag;

    std::size_t piece(double t) const;
};

struct ItoRunResult {
    double dt = 0.0;
    std::size_t n = 0;
    double mean_residual = 0.0; // |grand mean of signed residuals|
    double sd_residual = 0.0;   // sd of per-replicate means
    std::vector<double> rep_means;
};

// Residual of the flow-of-measures formula: simulate the
// process exactly on the grid, accumulate the three deterministic integrals
// by left-point quadrature, compare with f(T, mu_T) - f(0, mu_0).
ItoRunResult verify_flow_ito(const PiecewiseProcess& proc, const TestFunctional122& f, double horizon,
                             double dt, std::size_t n, std::size_t reps, std::uint64_t seed);

// Mild-Ito residual along an exponential-Euler path of the mean-field SPDE;
// the stochastic integral is accumulated from the simulator's own convolution
// increments so it couples exactly.
ItoRunResult verify_mild_ito(const MfSpdeProblem& prob, const TestFunctional122& f, double horizon,
                             double dt, std::size_t n, std::size_t reps, std::uint64_t seed);

struct ItoStudyResult {
    std::vector<ItoRunResult> rows;
    double fitted_rate = 0.0;
};

ItoStudyResult flow_ito_study(const PiecewiseProcess& proc, const TestFunctional122& f, double horizon,
                              const std::vector<double>& dts, std::size_t n, std::size_t reps,
                              std::uint64_t seed);

ItoStudyResult mild_ito_study(const MfSpdeProblem& prob, const TestFunctional122& f, double horizon,
                              const std::vector<double>& dts, std::size_t n, std::size_t reps,
                              std::uint64_t seed);

} // namespace mfl
