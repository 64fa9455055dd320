#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfl/measure.hpp"
#include "mfl/rng.hpp"
#include "mfl/spectral.hpp"
#include "mfl/zoo.hpp"

namespace mfl {

struct InitialCondition {
    enum class Kind { Zero, Stationary, Gauss };
    Kind kind = Kind::Stationary;
    double scale = 1.0;
    double mean1 = 0.0; // mean offset of the first mode
};

// du = [A u + b(L(u))] dt + B dW with diagonal B, Q
struct MfSpdeProblem {
    Spectrum spectrum;
    DiagOperator b_op;
    DiagOperator q_op;
    MeanFieldDrift drift;
    InitialCondition init;
    double horizon = 1.0;
    double gamma = 0.25; // declared (R0) exponents; validated by r0_check
    double delta = 0.25;

    std::size_t dim() const { return spectrum.dim(); }
};

struct EnsembleState {
    double t = 0.0;
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> particles; // flat n x dim
    std::vector<RngStream> streams;

    double* particle(std::size_t j) { return particles.data() + j * dim; }
    const double* particle(std::size_t j) const { return particles.data() + j * dim; }
};

EnsembleState init_state(const MfSpdeProblem& prob, std::size_t n, std::uint64_t seed);

// Validates the problem invariants: the drift passes a sampled Lipschitz
// check and the declared gamma produces a finite, refinement-stable
// regularity integral. Returns the regularity report (delta_hat etc).
R0Report validate_problem(const MfSpdeProblem& prob);

// One mild (exponential) Euler step. `noise` optionally supplies the exact
// stochastic-convolution increments for [t, t+dt] (flat n x dim) instead of
// sampling from the particle streams.
void exp_euler_step(EnsembleState& state, const MfSpdeProblem& prob, double dt,
                    const double* noise = nullptr);

struct Taylor2Terms {
    double drift_integral = 0.0; // || int e^{A(dt-s)} b(L(e^{As}u0)) ds ||
    double tilde_dmu = 0.0;      // || d_mu b double integral ||
    double tilde_trace = 0.0;    // || trace double integral ||
};

// One step of the frozen-coefficient second-order expansion. Gauss-Legendre
// of order m in s and (s,r). With fd_fallback the missing drift derivative
// closed forms are replaced by central differences of the drift lift.
void taylor2_step(EnsembleState& state, const MfSpdeProblem& prob, double dt, std::size_t quad_order,
                  const double* noise = nullptr, Taylor2Terms* terms = nullptr,
                  bool fd_fallback = false);

enum class Scheme { ExpEuler, Taylor2 };

Scheme scheme_from_string(const std::string& s);

struct TrajectoryRow {
    std::size_t step = 0;
    double t = 0.0;
    std::vector<double> mode_means;
    double mean_sq_norm = 0.0;
    std::optional<double> w2_to_init;
};

struct SimulateResult {
    std::vector<TrajectoryRow> rows;
};

// Time series of observables; bit-reproducible from (seed, n, dt, scheme).
SimulateResult simulate(const MfSpdeProblem& prob, Scheme scheme, double dt, std::size_t n,
                        std::uint64_t seed, std::size_t quad_order = 4, bool with_w2 = true);

struct StudyRow {
    double dt = 0.0;
    double err_euler = 0.0;
    double err_taylor2 = 0.0;
};

struct StudyResult {
    std::vector<StudyRow> rows;
    double slope_euler = 0.0;
    double slope_taylor2 = 0.0;
    double reference_gap = 0.0;   // max |fine ref - half-resolution ref| over observables
    double coarsest_error = 0.0;  // reference-convergence gate denominator
};

// One-step weak errors of both schemes against a fine exponential-Euler
// reference (dt_min/64) on coupled noise; dt_list must be dyadic descending.
StudyResult local_error_study(const MfSpdeProblem& prob, const std::vector<double>& dt_list,
                              std::size_t n, std::size_t reps, std::size_t quad_order,
                              std::uint64_t seed);

// least-squares slope of log err against log dt
double fit_log_slope(const std::vector<double>& xs, const std::vector<double>& ys);

} // namespace mfl
