#include "mfl/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mfl {

namespace {

bool atoms_equal(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) > tol) return false;
    return true;
}

bool lex_less(const double* a, const double* b, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return false;
}

} // namespace

DiscreteMeasure::DiscreteMeasure(std::vector<std::vector<double>> pts, std::vector<double> w) {
    if (pts.empty()) throw std::invalid_argument("DiscreteMeasure: empty measure");
    if (pts.size() != w.size()) throw std::invalid_argument("DiscreteMeasure: atoms/weights size mismatch");
    dim = pts[0].size();
    if (dim == 0) throw std::invalid_argument("DiscreteMeasure: zero-dimensional atoms");
    double total = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        if (pts[k].size() != dim) throw std::invalid_argument("DiscreteMeasure: ragged atom dimensions");
        for (double c : pts[k])
            if (!std::isfinite(c)) throw std::invalid_argument("DiscreteMeasure: non-finite atom coordinate");
        if (!(w[k] > 0.0)) throw std::invalid_argument("DiscreteMeasure: weights must be positive");
        total += w[k];
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("DiscreteMeasure: weights must sum to 1");

    // merge duplicates (downstream density estimates divide by atom masses)
    for (std::size_t k = 0; k < pts.size(); ++k) {
        bool merged = false;
        for (std::size_t j = 0; j < atoms.size(); ++j) {
            if (atoms_equal(atoms[j], pts[k], 1e-12)) {
                weights[j] += w[k];
                merged = true;
                break;
            }
        }
        if (!merged) {
            atoms.push_back(pts[k]);
            weights.push_back(w[k]);
        }
    }
}

DiscreteMeasure DiscreteMeasure::from_scalars(const std::vector<double>& pts, const std::vector<double>& w) {
    std::vector<std::vector<double>> a;
    a.reserve(pts.size());
    for (double p : pts) a.push_back({p});
    return DiscreteMeasure(std::move(a), w);
}

DiscreteMeasure DiscreteMeasure::pre_merged(std::size_t d, std::vector<std::vector<double>> pts,
                                            std::vector<double> w) {
    DiscreteMeasure m;
    m.dim = d;
    m.atoms = std::move(pts);
    m.weights = std::move(w);
    return m;
}

Ensemble::Ensemble(std::size_t d, std::vector<double> flat) : dim(d), particles(std::move(flat)) {
    if (dim == 0 || particles.empty() || particles.size() % dim != 0)
        throw std::invalid_argument("Ensemble: bad particle buffer");
    n = particles.size() / dim;
    for (double c : particles)
        if (!std::isfinite(c)) throw std::invalid_argument("Ensemble: non-finite particle coordinate");
    // group equal particles (sorted order makes duplicates adjacent)
    const std::vector<std::size_t> order = canonical_order();
    atom_index.assign(n, 0);
    std::size_t n_atoms = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (r > 0) {
            const double* prev = particle(order[r - 1]);
            const double* cur = particle(order[r]);
            bool same = true;
            for (std::size_t k = 0; k < dim; ++k)
                if (std::abs(prev[k] - cur[k]) > 1e-12) { same = false; break; }
            if (!same) ++n_atoms;
        }
        atom_index[order[r]] = n_atoms;
    }
}

DiscreteMeasure Ensemble::law() const {
    std::size_t n_atoms = 0;
    for (std::size_t j = 0; j < n; ++j) n_atoms = std::max(n_atoms, atom_index[j] + 1);
    std::vector<std::vector<double>> atoms(n_atoms);
    std::vector<double> counts(n_atoms, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = atom_index[j];
        if (atoms[k].empty()) atoms[k].assign(particle(j), particle(j) + dim);
        counts[k] += 1.0;
    }
    for (double& c : counts) c /= static_cast<double>(n);
    return DiscreteMeasure::pre_merged(dim, std::move(atoms), std::move(counts));
}

std::vector<std::size_t> Ensemble::canonical_order() const {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return lex_less(particle(a), particle(b), dim);
    });
    return idx;
}

Ensemble Ensemble::from_measure_counts(const DiscreteMeasure& mu, const std::vector<std::size_t>& counts) {
    if (counts.size() != mu.size()) throw std::invalid_argument("Ensemble: counts size mismatch");
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;
    if (total == 0) throw std::invalid_argument("Ensemble: empty realization");
    std::vector<double> flat;
    flat.reserve(total * mu.dim);
    for (std::size_t k = 0; k < mu.size(); ++k)
        for (std::size_t c = 0; c < counts[k]; ++c)
            flat.insert(flat.end(), mu.atoms[k].begin(), mu.atoms[k].end());
    return Ensemble(mu.dim, std::move(flat));
}

double cdf_1d(const DiscreteMeasure& mu, double t) {
    if (!mu.is_1d()) throw std::invalid_argument("cdf_1d: measure is not 1-D");
    double f = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k)
        if (mu.atoms[k][0] <= t) f += mu.weights[k];
    return f;
}

double wasserstein2_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    if (!mu.is_1d() || !nu.is_1d()) throw std::invalid_argument("wasserstein2_1d: measures must be 1-D");

    auto sorted = [](const DiscreteMeasure& m) {
        std::vector<std::pair<double, double>> s; // (atom, weight)
        s.reserve(m.size());
        for (std::size_t k = 0; k < m.size(); ++k) s.emplace_back(m.atoms[k][0], m.weights[k]);
        std::sort(s.begin(), s.end());
        return s;
    };
    const auto a = sorted(mu);
    const auto b = sorted(nu);

    // integrate |F_mu^{-1}(q) - F_nu^{-1}(q)|^2 over the merged quantile grid
    double cost = 0.0;
    std::size_t i = 0, j = 0;
    double q = 0.0;
    double ca = a[0].second, cb = b[0].second; // cumulative weights at current atoms
    while (true) {
        const double q_next = std::min(ca, cb);
        const double dq = q_next - q;
        const double diff = a[i].first - b[j].first;
        cost += dq * diff * diff;
        q = q_next;
        if (q >= 1.0 - 1e-15) break;
        if (ca <= cb && i + 1 < a.size()) ca += a[++i].second;
        else if (j + 1 < b.size()) cb += b[++j].second;
        else if (i + 1 < a.size()) ca += a[++i].second;
        else break;
    }
    return std::sqrt(std::max(cost, 0.0));
}

// Shortest augmenting path assignment (Jonker-Volgenant style), O(n^3), exact.
std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
    if (cost.size() != n * n) throw std::invalid_argument("solve_assignment: bad cost matrix size");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, n), way(n + 1, n);
    for (std::size_t i = 0; i < n; ++i) {
        p[n] = i;
        std::size_t j0 = n;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = n;
            for (std::size_t j = 0; j < n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 * n + j] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != n);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != n);
    }
    std::vector<std::size_t> row_to_col(n, n);
    for (std::size_t j = 0; j < n; ++j)
        if (p[j] != n) row_to_col[p[j]] = j;
    return row_to_col;
}

double wasserstein2_assign(const Ensemble& x, const Ensemble& y) {
    if (x.n != y.n) throw std::invalid_argument("wasserstein2_assign: unequal sample sizes");
    if (x.dim != y.dim) throw std::invalid_argument("wasserstein2_assign: dimension mismatch");
    if (x.n > 512) throw std::invalid_argument("wasserstein2_assign: n > 512 not supported");
    const std::size_t n = x.n, d = x.dim;
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.particle(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double* yj = y.particle(j);
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = xi[k] - yj[k];
                s += diff * diff;
            }
            cost[i * n + j] = s;
        }
    }
    const std::vector<std::size_t> match = solve_assignment(cost, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += cost[i * n + match[i]];
    return std::sqrt(total / static_cast<double>(n));
}

} // namespace mfl
