#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfl/lions.hpp"
#include "mfl/measure.hpp"
#include "mfl/spectral.hpp"

namespace mfl {

// scalar C^2 function with closed-form derivatives
struct ScalarC2 {
    std::string name;
    std::function<double(double)> f;
    std::function<double(double)> d1;
    std::function<double(double)> d2;

    static ScalarC2 tanh_fn();
    static ScalarC2 gauss_bump(double a = 1.0); // exp(-(a x)^2)
    static ScalarC2 identity();
    static ScalarC2 constant(double c);
    static ScalarC2 cos_fn();
    static ScalarC2 zero();
};

// ---------------------------------------------------------------------------
// Linear functionals f(mu) = int h dmu with dm/dmu = Dh
// ---------------------------------------------------------------------------

// coordinatewise h with diagonal Dh; kind in {id, square, tanh}
LiftFunctional make_linear_functional(const std::string& kind, std::size_t dim);

// ---------------------------------------------------------------------------
// Gauss-CDF energy H_{mu0}(mu) for mu0 = U[0,1)
// ---------------------------------------------------------------------------

struct GaussCdf {
    std::size_t quad_order = 16;

    // (1/sqrt(2 pi)) int e^{-t^2/2} (F_mu(t) - F_mu0(t))^2 dt on the merged
    // breakpoint grid (exact between atoms up to the Gaussian quadrature)
    double eval(const DiscreteMeasure& mu) const;
    double eval_sorted(const std::vector<double>& sorted_values) const; // equal weights

    // dm/dmu at y; includes the atom term at the resolution of mu
    double deriv(const DiscreteMeasure& mu, double y) const;

    LiftFunctional functional() const;
};

// ---------------------------------------------------------------------------
// Convolution counterexample f(mu)(t) = (g(.,mu) * F_mu)(t), L^2(R) valued
// ---------------------------------------------------------------------------

struct ConvexCounterexample {
    std::size_t grid_points = 256;            // uniform grid on [-2,3]
    double grid_lo = -2.0, grid_hi = 3.0;
    std::optional<double> frozen_h2;          // freeze the H(mu)^2 term (pure convolution)
    std::size_t quad_order = 16;              // for the embedded H evaluation

    std::vector<double> grid() const;
    std::vector<double> trapezoid_weights() const;

    // per-particle antiderivative of the kernel: continuous on |z| <= 1,
    // vanishing at |z| = 1, with the h2 -> 0 limit 2(sqrt|z| - 1)
    static double kernel_antiderivative(double z, double h2);

    std::vector<double> eval(const Ensemble& x) const;
    LiftFunctional functional() const;
};

// ---------------------------------------------------------------------------
// ProdMaj kernel and the 2-variation divergence diagnostic
// ---------------------------------------------------------------------------

// int 1_{|t-x|<=1} 1_{|t-xt|<=1} dt / (sqrt|t-x| sqrt|t-xt|), closed form.
// |delta| = 1 takes the two-sided limit pi; |delta| = 0 returns +inf.
double prodmaj_kernel(double x, double x_tilde);

// signed variant int g0(t-x) g0(t-xt) dt with g0(s) = sgn(s)/sqrt|s| 1_{|s|<=1}
double prodmaj_signed_kernel(double x, double x_tilde);

// quadrature oracles (singularity-split Gauss-Legendre in t)
double prodmaj_unsigned_quad(double x, double x_tilde, std::size_t order = 32);
double prodmaj_signed_quad(double x, double x_tilde, std::size_t order = 32);

// int int over [a,b]^2 of the signed kernel, via the 1-D difference reduction
// with the log singularity integrated exactly
double prodmaj_block_integral_signed(double width);
double prodmaj_block_integral_unsigned(double width);

struct DivergenceRow {
    std::size_t n = 0;
    double s_n = 0.0;
    double sqrt_log_n = 0.0;
    bool pass = false;
};

struct DivergenceResult {
    std::vector<DivergenceRow> rows;
    double closedform_vs_quadrature = 0.0; // max validation discrepancy of the signed kernel
    double signed_vs_unsigned = 0.0;       // max |K - signed| over the probe offsets (logged)
};

// S_n = sum_k (block integral over [(k-1)/n, k/n]^2)^{1/2}; diagonal blocks are
// translates, so S_n = n sqrt(T(1/n)). Uses the signed kernel, validated
// against the quadrature oracle at probe offsets before use.
DivergenceResult divergence_diagnostic(const std::vector<std::size_t>& ns);

// ---------------------------------------------------------------------------
// Mean-field drift fixture b(mu) = v * phi(E_mu[psi(<x,w>)])
// ---------------------------------------------------------------------------

struct MeanFieldDrift {
    std::vector<double> v;
    std::vector<double> w;
    ScalarC2 phi = ScalarC2::tanh_fn();
    ScalarC2 psi = ScalarC2::gauss_bump();
    // closed-form derivative availability; cleared to exercise the FD fallback
    bool has_dmu = true;
    bool has_dydmu = true;

    std::size_t dim() const { return v.size(); }

    double mean_psi(const Ensemble& x) const;              // E_mu[psi(<x,w>)], canonical order
    double mean_psi_measure(const DiscreteMeasure& mu) const;

    std::vector<double> eval(const Ensemble& x) const;     // b(law of x)
    std::vector<double> eval_measure(const DiscreteMeasure& mu) const;

    // d_mu b(mu)(y) = phi'(S) psi'(<y,w>) v (x) w
    OperatorSample dmu(double mean_psi_value, const double* y) const;
    // d_y d_mu b(mu)(y) = phi'(S) psi''(<y,w>) v (x) w (x) w
    BilinearSample dydmu(double mean_psi_value, const double* y) const;

    // default fixture: v = e_1, w_k proportional to 1/k, normalized
    static MeanFieldDrift tanh_bump(std::size_t dim);

    LiftFunctional functional() const;
};

// sampled Lipschitz constant of b against W2 over random 1-atom-coupled pairs
double drift_lipschitz_sample(const MeanFieldDrift& drift, std::uint64_t seed, std::size_t trials);

// fixture registry: linear:id | linear:square | linear:tanh | gausscdf |
// convex | drift:tanh-bump
LiftFunctional make_functional(const std::string& name, std::size_t dim);

} // namespace mfl
