#include "mfl/lions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mfl/parallel.hpp"

namespace mfl {

namespace {

void check_domain(const LiftFunctional& f, const Ensemble& x) {
    if (!f.eval) throw std::invalid_argument("LiftFunctional '" + f.name + "' has no eval");
    if (f.dim_h != 0 && f.dim_h != x.dim)
        throw std::invalid_argument("functional '" + f.name + "' expects dimension " +
                                    std::to_string(f.dim_h) + ", got " + std::to_string(x.dim));
}

double rms_norm(const std::vector<double>& flat, std::size_t n, std::size_t dim) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < dim; ++k) {
            const double c = flat[j * dim + k];
            s += c * c;
        }
    return std::sqrt(s / static_cast<double>(n));
}

void check_finite(const std::vector<double>& u, const char* what) {
    for (double v : u)
        if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite lift value in ") + what);
}

void validate_partition(const std::vector<std::vector<std::size_t>>& partition, std::size_t n) {
    std::vector<char> seen(n, 0);
    for (const auto& block : partition)
        for (std::size_t j : block) {
            if (j >= n) throw std::invalid_argument("partition: index out of range");
            if (seen[j]) throw std::invalid_argument("partition: blocks are not disjoint");
            seen[j] = 1;
        }
    for (std::size_t j = 0; j < n; ++j)
        if (!seen[j]) throw std::invalid_argument("partition: union does not cover the sample");
}

} // namespace

double u_norm(const LiftFunctional& f, const std::vector<double>& u) {
    if (f.u_weights.empty()) return norm2(u);
    if (f.u_weights.size() != u.size()) throw std::invalid_argument("u_norm: weight size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += f.u_weights[i] * u[i] * u[i];
    return std::sqrt(s);
}

double u_operator_norm(const LiftFunctional& f, const OperatorSample& m) {
    if (f.u_weights.empty()) return operator_norm(m);
    if (f.u_weights.size() != m.rows) throw std::invalid_argument("u_operator_norm: weight size mismatch");
    Mat scaled = m;
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double w = std::sqrt(f.u_weights[i]);
        for (std::size_t j = 0; j < m.cols; ++j) scaled(i, j) *= w;
    }
    return operator_norm(scaled);
}

std::vector<double> lift_eval(const LiftFunctional& f, const Ensemble& x) {
    check_domain(f, x);
    std::vector<double> u = f.eval(x);
    if (u.size() != f.dim_u) throw std::runtime_error("lift_eval: output dimension mismatch");
    check_finite(u, f.name.c_str());
    return u;
}

std::vector<double> directional_derivative(const LiftFunctional& f, const Ensemble& x,
                                           const std::vector<double>& y, const FDParams& p) {
    check_domain(f, x);
    if (y.size() != x.particles.size())
        throw std::invalid_argument("directional_derivative: direction must supply one vector per particle");
    if (!(p.eps0 > 0.0)) throw std::invalid_argument("directional_derivative: eps0 must be > 0");

    const double rms_y = rms_norm(y, x.n, x.dim);
    if (rms_y == 0.0) return std::vector<double>(f.dim_u, 0.0);

    double eps = p.eps0;
    if (p.relative_scaling) {
        const double rms_x = rms_norm(x.particles, x.n, x.dim);
        eps = p.eps0 * std::max(1.0, rms_x) / std::max(1.0, rms_y);
    }
    if (!(eps > 1e-300)) throw std::runtime_error("directional_derivative: step underflow");

    std::vector<double> plus = x.particles, minus = x.particles;
    for (std::size_t i = 0; i < y.size(); ++i) {
        plus[i] += eps * y[i];
        minus[i] -= eps * y[i];
    }
    const std::vector<double> fp = lift_eval(f, Ensemble(x.dim, std::move(plus)));
    const std::vector<double> fm = lift_eval(f, Ensemble(x.dim, std::move(minus)));
    std::vector<double> out(f.dim_u);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (fp[i] - fm[i]) / (2.0 * eps);
    return out;
}

OperatorSample event_operator(const LiftFunctional& f, const Ensemble& x,
                              const std::vector<std::size_t>& event, const FDParams& p) {
    OperatorSample m(f.dim_u, x.dim);
    std::vector<double> y(x.particles.size(), 0.0);
    for (std::size_t k = 0; k < x.dim; ++k) {
        for (std::size_t j : event) y[j * x.dim + k] = 1.0;
        const std::vector<double> col = directional_derivative(f, x, y, p);
        for (std::size_t i = 0; i < f.dim_u; ++i) m(i, k) = col[i];
        for (std::size_t j : event) y[j * x.dim + k] = 0.0;
    }
    return m;
}

VectorMeasureTable vector_measure(const LiftFunctional& f, const Ensemble& x,
                                  const std::vector<std::vector<std::size_t>>& partition,
                                  const FDParams& p) {
    check_domain(f, x);
    validate_partition(partition, x.n);
    VectorMeasureTable table;
    table.partition = partition;
    table.blocks.resize(partition.size());
    table.probs.resize(partition.size());
    parallel_for(partition.size(), [&](std::size_t i) {
        table.blocks[i] = event_operator(f, x, partition[i], p);
        table.probs[i] = static_cast<double>(partition[i].size()) / static_cast<double>(x.n);
    });
    return table;
}

DisintegrationReport disintegration_check(const LiftFunctional& f, const Ensemble& x,
                                          const std::vector<std::size_t>& event, const FDParams& p) {
    check_domain(f, x);
    for (std::size_t j : event)
        if (j >= x.n) throw std::invalid_argument("disintegration_check: event index out of range");

    const OperatorSample m_a = event_operator(f, x, event, p);

    // conditional probabilities are exact counting ratios on the finite Omega
    std::size_t n_atoms = 0;
    for (std::size_t j = 0; j < x.n; ++j) n_atoms = std::max(n_atoms, x.atom_index[j] + 1);
    std::vector<double> atom_count(n_atoms, 0.0), event_count(n_atoms, 0.0);
    for (std::size_t j = 0; j < x.n; ++j) atom_count[x.atom_index[j]] += 1.0;
    for (std::size_t j : event) event_count[x.atom_index[j]] += 1.0;

    OperatorSample recon(f.dim_u, x.dim);
    for (std::size_t k = 0; k < n_atoms; ++k) {
        if (event_count[k] == 0.0) continue;
        std::vector<std::size_t> atom_event;
        for (std::size_t j = 0; j < x.n; ++j)
            if (x.atom_index[j] == k) atom_event.push_back(j);
        const OperatorSample m_k = event_operator(f, x, atom_event, p);
        const double cond = event_count[k] / atom_count[k];
        for (std::size_t i = 0; i < recon.a.size(); ++i) recon.a[i] += cond * m_k.a[i];
    }

    DisintegrationReport rep;
    rep.residual = u_operator_norm(f, m_a - recon);
    rep.scale = u_operator_norm(f, m_a);
    return rep;
}

std::vector<std::size_t> rationalize_weights(const std::vector<double>& weights, std::size_t max_den) {
    const double tol = 1e-7;
    for (std::size_t den = weights.size(); den <= max_den; ++den) {
        bool ok = true;
        std::vector<std::size_t> counts(weights.size());
        std::size_t total = 0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            const double q = weights[k] * static_cast<double>(den);
            const double r = std::round(q);
            if (r < 1.0 || std::abs(q - r) > tol * static_cast<double>(den)) {
                ok = false;
                break;
            }
            counts[k] = static_cast<std::size_t>(r);
            total += counts[k];
        }
        if (ok && total == den) return counts;
    }
    // suggest the lcm of per-weight continued-fraction denominators
    auto cf_den = [&](double w) -> std::size_t {
        double x = w - std::floor(w);
        std::size_t qm1 = 0, q0 = 1;
        for (int it = 0; it < 32 && x > 1e-12; ++it) {
            x = 1.0 / x;
            const double a = std::floor(x);
            if (a > 1e9) break;
            const std::size_t q1 = static_cast<std::size_t>(a) * q0 + qm1;
            qm1 = q0;
            q0 = q1;
            const double approx = std::round(w * static_cast<double>(q0)) / static_cast<double>(q0);
            if (std::abs(w - approx) < 1e-12 || q0 > max_den * 100) break;
            x -= a;
        }
        return q0;
    };
    std::size_t suggestion = 1;
    for (double w : weights) {
        const std::size_t d = cf_den(w);
        const std::size_t g = std::gcd(suggestion, d);
        const double lcm = static_cast<double>(suggestion) / static_cast<double>(g) * static_cast<double>(d);
        suggestion = lcm > 1e12 ? max_den * 100 : static_cast<std::size_t>(lcm);
    }
    throw std::invalid_argument(
        "rationalize_weights: no common denominator <= " + std::to_string(max_den) +
        " realizes the weights; closest suggestion n = " + std::to_string(suggestion));
}

RnEstimate discrete_rn(const LiftFunctional& f, const DiscreteMeasure& mu, const FDParams& p) {
    if (f.dim_h != 0 && f.dim_h != mu.dim)
        throw std::invalid_argument("discrete_rn: functional/measure dimension mismatch");
    RnEstimate est;
    est.mu = mu;
    const std::vector<std::size_t> counts = rationalize_weights(mu.weights);
    est.realization = Ensemble::from_measure_counts(mu, counts);
    const Ensemble& x = est.realization;

    // particles were laid out atom-block by atom-block
    std::vector<std::vector<std::size_t>> atom_events(mu.size());
    {
        std::size_t j = 0;
        for (std::size_t k = 0; k < mu.size(); ++k)
            for (std::size_t c = 0; c < counts[k]; ++c) atom_events[k].push_back(j++);
    }

    est.rn.resize(mu.size());
    parallel_for(mu.size(), [&](std::size_t k) {
        OperatorSample m_k = event_operator(f, x, atom_events[k], p);
        const double pk = static_cast<double>(counts[k]) / static_cast<double>(x.n);
        est.rn[k] = (1.0 / pk) * m_k;
    });
    return est;
}

double factorization_check(const LiftFunctional& f, const Ensemble& x,
                           const std::vector<std::vector<double>>& trial_ys, const FDParams& p) {
    check_domain(f, x);
    const RnEstimate est = discrete_rn(f, x.law(), p);

    // map the ensemble's own atom ids onto est.mu atom ids (same lexicographic order)
    double worst = 0.0;
    for (const auto& y : trial_ys) {
        const std::vector<double> lhs = directional_derivative(f, x, y, p);
        std::vector<double> rhs(f.dim_u, 0.0);
        for (std::size_t j = 0; j < x.n; ++j) {
            const OperatorSample& g = est.rn[x.atom_index[j]];
            for (std::size_t i = 0; i < f.dim_u; ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < x.dim; ++k) s += g(i, k) * y[j * x.dim + k];
                rhs[i] += s;
            }
        }
        for (double& v : rhs) v /= static_cast<double>(x.n);
        std::vector<double> diff(f.dim_u);
        for (std::size_t i = 0; i < f.dim_u; ++i) diff[i] = lhs[i] - rhs[i];
        worst = std::max(worst, u_norm(f, diff));
    }
    return worst;
}

std::vector<TwoVariationLevel> two_variation_estimate(const LiftFunctional& f, const Ensemble& x,
                                                      const std::vector<std::size_t>& levels,
                                                      const FDParams& p) {
    check_domain(f, x);
    // fixed score: first coordinate
    std::vector<std::size_t> order(x.n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double* pa = x.particle(a);
        const double* pb = x.particle(b);
        if (pa[0] != pb[0]) return pa[0] < pb[0];
        return a < b;
    });

    std::vector<TwoVariationLevel> out;
    out.reserve(levels.size());
    for (std::size_t b_count : levels) {
        if (b_count == 0 || b_count > x.n)
            throw std::invalid_argument("two_variation_estimate: block count out of range");
        const std::size_t base = x.n / b_count;
        std::vector<std::vector<std::size_t>> partition;
        partition.reserve(b_count);
        for (std::size_t i = 0; i < b_count; ++i) {
            const std::size_t lo = i * base;
            const std::size_t hi = (i + 1 == b_count) ? x.n : lo + base; // remainder into last block
            partition.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                   order.begin() + static_cast<std::ptrdiff_t>(hi));
        }
        TwoVariationLevel lvl;
        lvl.requested_blocks = b_count;
        lvl.block_norms.resize(b_count);
        lvl.probs.resize(b_count);
        parallel_for(b_count, [&](std::size_t i) {
            const OperatorSample m_i = event_operator(f, x, partition[i], p);
            lvl.block_norms[i] = u_operator_norm(f, m_i);
            lvl.probs[i] = static_cast<double>(partition[i].size()) / static_cast<double>(x.n);
        });
        double sum = 0.0;
        for (std::size_t i = 0; i < b_count; ++i)
            sum += lvl.block_norms[i] * lvl.block_norms[i] / lvl.probs[i];
        lvl.lower_bound = std::sqrt(sum);
        out.push_back(std::move(lvl));
    }
    return out;
}

} // namespace mfl
