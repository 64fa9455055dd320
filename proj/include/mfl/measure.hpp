#pragma once

#include <cstddef>
#include <vector>

namespace mfl {

// Law on truncated H as weighted atoms. Construction merges duplicate atoms
// (coordinate tolerance 1e-12) and validates that weights are positive and
// sum to 1 within 1e-12.
struct DiscreteMeasure {
    std::size_t dim = 0;
    std::vector<std::vector<double>> atoms;
    std::vector<double> weights;

    DiscreteMeasure() = default;
    DiscreteMeasure(std::vector<std::vector<double>> pts, std::vector<double> w);

    static DiscreteMeasure from_scalars(const std::vector<double>& pts, const std::vector<double>& w);

    // fast path for atoms already known to be distinct (skips pairwise merge)
    static DiscreteMeasure pre_merged(std::size_t dim, std::vector<std::vector<double>> pts,
                                      std::vector<double> w);

    std::size_t size() const { return atoms.size(); }
    bool is_1d() const { return dim == 1; }
};

// Equal-weight particle sample with an explicit map to the atoms of its law.
// Omega is the finite uniform space {0..n-1}; events are index subsets.
struct Ensemble {
    std::size_t dim = 0;
    std::size_t n = 0;
    std::vector<double> particles; // flat, particle j occupies [j*dim, (j+1)*dim)
    std::vector<std::size_t> atom_index;

    Ensemble() = default;
    Ensemble(std::size_t d, std::vector<double> flat);

    const double* particle(std::size_t j) const { return particles.data() + j * dim; }
    double* particle(std::size_t j) { return particles.data() + j * dim; }

    // empirical law, atom list in lexicographic order; atom_index maps each
    // particle to its atom and is rebuilt on construction
    DiscreteMeasure law() const;

    // indices sorted lexicographically by coordinates; evaluating functionals
    // in this order makes them bit-for-bit permutation invariant
    std::vector<std::size_t> canonical_order() const;

    static Ensemble from_measure_counts(const DiscreteMeasure& mu, const std::vector<std::size_t>& counts);
};

// F_mu(t) = mu((-inf, t]), right-continuous.
double cdf_1d(const DiscreteMeasure& mu, double t);

// Exact W2 between 1-D discrete measures via the quantile coupling on the
// merged breakpoint grid.
double wasserstein2_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

// Exact W2 between equal-weight empirical measures via optimal assignment
// (Hungarian method); requires equal sample sizes n <= 512.
double wasserstein2_assign(const Ensemble& x, const Ensemble& y);

// exact min-cost assignment on an n x n cost matrix (row-major), returns column of each row
std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n);

} // namespace mfl
