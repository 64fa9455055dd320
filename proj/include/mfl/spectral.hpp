#pragma once

#include <cstddef>
#include <vector>

#include "mfl/mat.hpp"
#include "mfl/rng.hpp"

namespace mfl {

// Truncated spectral model of H: A acts as -lambda_i on mode i of a fixed
// eigenbasis, kappa is the shift used for fractional powers (kappa - A).
struct Spectrum {
    std::vector<double> lambda;
    double kappa = 0.0;

    Spectrum() = default;
    Spectrum(std::vector<double> lam, double kap);

    std::size_t dim() const { return lambda.size(); }

    // Dirichlet Laplacian on (0,1): lambda_i = i^2 pi^2, i = 1..d.
    static Spectrum dirichlet(std::size_t d, double kappa = 0.0);
};

using SpectralVector = std::vector<double>;

// Diagonal operator in the eigenbasis (B and Q of the noise).
struct DiagOperator {
    std::vector<double> diag;

    DiagOperator() = default;
    explicit DiagOperator(std::vector<double> d) : diag(std::move(d)) {}
    static DiagOperator constant(std::size_t d, double v) { return DiagOperator(std::vector<double>(d, v)); }
    std::size_t dim() const { return diag.size(); }
};

// Dense operator on truncated H; stands in for Hilbert-Schmidt arguments of tr_H.
struct HSOperator {
    Mat matrix;

    HSOperator() = default;
    explicit HSOperator(Mat m) : matrix(std::move(m)) {}
    static HSOperator identity(std::size_t d) { return HSOperator(Mat::identity(d)); }
    static HSOperator diagonal(const std::vector<double>& d);
};

// Bilinear map H x H -> U stored as a d x d array of U-coordinate vectors.
struct BilinearSample {
    std::size_t dim_h = 0;
    std::size_t dim_u = 0;
    std::vector<double> tensor; // [(k*dim_h + l)*dim_u + u] = Phi(e_k, e_l)_u

    BilinearSample() = default;
    BilinearSample(std::size_t dh, std::size_t du) : dim_h(dh), dim_u(du), tensor(dh * dh * du, 0.0) {}

    double& at(std::size_t k, std::size_t l, std::size_t u) { return tensor[(k * dim_h + l) * dim_u + u]; }
    double at(std::size_t k, std::size_t l, std::size_t u) const { return tensor[(k * dim_h + l) * dim_u + u]; }
};

// e^{tA} v, componentwise exp(-lambda_i t).  t < 0 is a domain error.
SpectralVector semigroup_apply(const Spectrum& s, double t, const SpectralVector& v);

// per-mode decay factors exp(-lambda_i t)
std::vector<double> semigroup_factors(const Spectrum& s, double t);

// (kappa - A)^gamma v, componentwise (kappa + lambda_i)^gamma; gamma in [0,1].
SpectralVector frac_power_apply(const Spectrum& s, double gamma, const SpectralVector& v);

// tr_H(Phi . S) = sum_k Phi(e_k, S e_k) over the truncated basis.
std::vector<double> trace_pair(const BilinearSample& phi, const HSOperator& op);

// Per-mode variance of the stochastic convolution int_0^dt e^{A(dt-s)} B dW_s
// with covariance Q: v_i = B_i^2 Q_i (1 - e^{-2 lambda_i dt}) / (2 lambda_i),
// with the lambda -> 0 limit B_i^2 Q_i dt (switch at lambda*dt < 1e-12).
std::vector<double> stoch_conv_variance(const Spectrum& s, const DiagOperator& b,
                                        const DiagOperator& q, double dt);

// Exact sample of the stochastic convolution; deterministic given the stream.
SpectralVector stoch_conv_sample(const Spectrum& s, const DiagOperator& b,
                                 const DiagOperator& q, double dt, RngStream& rng);

// (R0) regularity report for a given (spectrum, B, gamma):
//   gamma_integral      int_0^T ||(kappa-A)^gamma e^{As} B||_{L2}^2 ds   (graded quadrature)
//   gamma_integral_ref  same with the panel count doubled (refinement stability)
//   delta_hat           min over the dyadic grid t_k = t_top 2^{-k}, k=0..levels-1,
//                       of the local half-slope of V(t) = int_0^t ||e^{As}B||_{L2}^2 ds;
//                       V has the closed form sum_i B_i^2 (1-e^{-2 lambda_i t})/(2 lambda_i).
struct R0Report {
    double gamma = 0.0;
    double horizon = 0.0;
    double gamma_integral = 0.0;
    double gamma_integral_ref = 0.0;
    double delta_hat = 0.0;
    std::vector<double> grid_t;
    std::vector<double> grid_v;
};

R0Report r0_check(const Spectrum& s, const DiagOperator& b, double gamma, double horizon,
                  double t_top = 0.0625, int levels = 9);

} // namespace mfl
