#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfl/mat.hpp"
#include "mfl/measure.hpp"

namespace mfl {

// A sampled element of L(H,U) on the truncated bases (rows = U, cols = H).
using OperatorSample = Mat;

// Central-difference parameters. The step for a derivative at X in direction Y
// is eps0 * max(1, rms particle norm) / max(1, rms ||Y||).
struct FDParams {
    double eps0 = 1e-4;
    bool relative_scaling = true;
};

// A measure functional f: P2(H) -> U presented through its lift on ensembles.
// eval must be law-invariant: it may depend on the ensemble only through the
// empirical law (accumulate in Ensemble::canonical_order for bit-stability).
struct LiftFunctional {
    std::string name;
    std::size_t dim_h = 0; // 0 = any dimension
    std::size_t dim_u = 1;
    std::function<std::vector<double>(const Ensemble&)> eval;
    // optional closed form of dm_mu/dmu at atom k (ground-truth oracle)
    std::function<OperatorSample(const DiscreteMeasure&, std::size_t)> closed_rn;
    // optional diagonal weights of the U inner product (default Euclidean)
    std::vector<double> u_weights;
};

double u_norm(const LiftFunctional& f, const std::vector<double>& u);
double u_operator_norm(const LiftFunctional& f, const OperatorSample& m);

// Estimated vector measure m_{Df(X)} on a partition of sample indices.
struct VectorMeasureTable {
    std::vector<std::vector<std::size_t>> partition;
    std::vector<OperatorSample> blocks;
    std::vector<double> probs;
};

struct DisintegrationReport {
    double residual = 0.0;   // ||m(A) - sum_k P(A|X=x_k) m({X=x_k})||
    double scale = 0.0;      // ||m(A)||
};

struct TwoVariationLevel {
    std::size_t requested_blocks = 0;
    std::vector<double> block_norms;
    std::vector<double> probs;
    double lower_bound = 0.0; // sqrt(sum_i c_i^2 / P(A_i)), optimal Lagrange allocation
};

std::vector<double> lift_eval(const LiftFunctional& f, const Ensemble& x);

// Central difference (f(X+eps Y) - f(X-eps Y)) / (2 eps); exact for lifts that
// are linear in the particle positions.
std::vector<double> directional_derivative(const LiftFunctional& f, const Ensemble& x,
                                           const std::vector<double>& y, const FDParams& p);

// m(A_i) e_j = Df(X)(e_j 1_{A_i}) for every block of the partition.
VectorMeasureTable vector_measure(const LiftFunctional& f, const Ensemble& x,
                                  const std::vector<std::vector<std::size_t>>& partition,
                                  const FDParams& p);

OperatorSample event_operator(const LiftFunctional& f, const Ensemble& x,
                              const std::vector<std::size_t>& event, const FDParams& p);

DisintegrationReport disintegration_check(const LiftFunctional& f, const Ensemble& x,
                                          const std::vector<std::size_t>& event, const FDParams& p);

// dm_mu/dmu at each atom, estimated on an internally synthesized ensemble
// realizing mu (weights rationalized to a common denominator <= 10^4).
struct RnEstimate {
    DiscreteMeasure mu;
    Ensemble realization;
    std::vector<OperatorSample> rn; // per atom
};

RnEstimate discrete_rn(const LiftFunctional& f, const DiscreteMeasure& mu, const FDParams& p);

// max over trials of || Df(X)Y - (1/n) sum_j g(X_j) Y_j ||_U
double factorization_check(const LiftFunctional& f, const Ensemble& x,
                           const std::vector<std::vector<double>>& trial_ys, const FDParams& p);

// Lower bounds of the 2-variation norm over sort-by-first-coordinate
// contiguous partitions. Counts that do not divide n merge the remainder
// into the last block.
std::vector<TwoVariationLevel> two_variation_estimate(const LiftFunctional& f, const Ensemble& x,
                                                      const std::vector<std::size_t>& levels,
                                                      const FDParams& p);

// smallest common denominator <= max_den realizing the weights as counts
std::vector<std::size_t> rationalize_weights(const std::vector<double>& weights,
                                             std::size_t max_den = 10000);

} // namespace mfl
