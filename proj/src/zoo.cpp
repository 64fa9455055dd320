#include "mfl/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "mfl/quadrature.hpp"
#include "mfl/rng.hpp"

namespace mfl {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kInvSqrt2Pi = 0.39894228040143267794; // 1/sqrt(2 pi)
} // namespace

ScalarC2 ScalarC2::tanh_fn() {
    return {"tanh", [](double x) { return std::tanh(x); },
            [](double x) { const double t = std::tanh(x); return 1.0 - t * t; },
            [](double x) { const double t = std::tanh(x); return -2.0 * t * (1.0 - t * t); }};
}

ScalarC2 ScalarC2::gauss_bump(double a) {
    const double a2 = a * a;
    return {"gauss", [a2](double x) { return std::exp(-a2 * x * x); },
            [a2](double x) { return -2.0 * a2 * x * std::exp(-a2 * x * x); },
            [a2](double x) { return (4.0 * a2 * a2 * x * x - 2.0 * a2) * std::exp(-a2 * x * x); }};
}

ScalarC2 ScalarC2::identity() {
    return {"id", [](double x) { return x; }, [](double) { return 1.0; }, [](double) { return 0.0; }};
}

ScalarC2 ScalarC2::constant(double c) {
    return {"const", [c](double) { return c; }, [](double) { return 0.0; }, [](double) { return 0.0; }};
}

ScalarC2 ScalarC2::cos_fn() {
    return {"cos", [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); },
            [](double x) { return -std::cos(x); }};
}

ScalarC2 ScalarC2::zero() { return constant(0.0); }

// ---------------------------------------------------------------------------
// linear functionals
// ---------------------------------------------------------------------------

namespace {

struct CoordMap {
    std::function<double(double)> h;
    std::function<double(double)> dh;
};

CoordMap coord_map(const std::string& kind) {
    if (kind == "id") return {[](double x) { return x; }, [](double) { return 1.0; }};
    if (kind == "square") return {[](double x) { return x * x; }, [](double x) { return 2.0 * x; }};
    if (kind == "tanh")
        return {[](double x) { return std::tanh(x); },
                [](double x) { const double t = std::tanh(x); return 1.0 - t * t; }};
    throw std::invalid_argument("unknown linear fixture kind: " + kind);
}

} // namespace

LiftFunctional make_linear_functional(const std::string& kind, std::size_t dim) {
    const CoordMap cm = coord_map(kind);
    LiftFunctional f;
    f.name = "linear:" + kind;
    f.dim_h = dim;
    f.dim_u = dim;
    f.eval = [cm, dim](const Ensemble& x) {
        std::vector<double> acc(dim, 0.0);
        for (std::size_t j : x.canonical_order()) {
            const double* p = x.particle(j);
            for (std::size_t k = 0; k < dim; ++k) acc[k] += cm.h(p[k]);
        }
        for (double& v : acc) v /= static_cast<double>(x.n);
        return acc;
    };
    f.closed_rn = [cm, dim](const DiscreteMeasure& mu, std::size_t atom) {
        OperatorSample m(dim, dim);
        for (std::size_t k = 0; k < dim; ++k) m(k, k) = cm.dh(mu.atoms[atom][k]);
        return m;
    };
    return f;
}

// ---------------------------------------------------------------------------
// Gauss-CDF energy
// ---------------------------------------------------------------------------

namespace {

double f0_cdf(double t) { return std::clamp(t, 0.0, 1.0); } // U[0,1) reference

// breakpoint integration of e^{-t^2/2} (F(t) - F0(t))^2 for a step CDF
double gausscdf_energy(const std::vector<double>& sorted_atoms, const std::vector<double>& cum_weights,
                       std::size_t order) {
    std::vector<double> brk;
    brk.reserve(sorted_atoms.size() + 2);
    brk.push_back(0.0);
    brk.push_back(1.0);
    for (double a : sorted_atoms) brk.push_back(a);
    std::sort(brk.begin(), brk.end());
    brk.erase(std::unique(brk.begin(), brk.end()), brk.end());

    double total = 0.0;
    for (std::size_t s = 0; s + 1 < brk.size(); ++s) {
        const double lo = brk[s], hi = brk[s + 1];
        if (hi - lo < 1e-300) continue;
        // F_mu constant on (lo, hi)
        const std::size_t idx = static_cast<std::size_t>(
            std::upper_bound(sorted_atoms.begin(), sorted_atoms.end(), lo) - sorted_atoms.begin());
        const double fmu = idx == 0 ? 0.0 : cum_weights[idx - 1];
        total += gl_integrate_panels(lo, hi, order, 0.5, [&](double t) {
            const double d = fmu - f0_cdf(t);
            return std::exp(-0.5 * t * t) * d * d;
        });
    }
    // left tail: F_mu = 0 below the smallest breakpoint, F0 = 0 below 0
    // (both vanish, no contribution); right tail likewise.
    return kInvSqrt2Pi * total;
}

} // namespace

double GaussCdf::eval(const DiscreteMeasure& mu) const {
    if (!mu.is_1d()) throw std::invalid_argument("gausscdf: 1-D measures only");
    std::vector<std::pair<double, double>> s;
    s.reserve(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k) s.emplace_back(mu.atoms[k][0], mu.weights[k]);
    std::sort(s.begin(), s.end());
    std::vector<double> atoms(s.size()), cum(s.size());
    double c = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        atoms[k] = s[k].first;
        c += s[k].second;
        cum[k] = c;
    }
    return gausscdf_energy(atoms, cum, quad_order);
}

double GaussCdf::eval_sorted(const std::vector<double>& sorted_values) const {
    std::vector<double> cum(sorted_values.size());
    const double inv = 1.0 / static_cast<double>(sorted_values.size());
    for (std::size_t k = 0; k < sorted_values.size(); ++k) cum[k] = static_cast<double>(k + 1) * inv;
    return gausscdf_energy(sorted_values, cum, quad_order);
}

double GaussCdf::deriv(const DiscreteMeasure& mu, double y) const {
    if (!mu.is_1d()) throw std::invalid_argument("gausscdf: 1-D measures only");
    double f = 0.0, atom_mass = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const double a = mu.atoms[k][0];
        if (a <= y) f += mu.weights[k];
        if (a == y) atom_mass += mu.weights[k];
    }
    const double e = std::exp(-0.5 * y * y);
    return -2.0 * kInvSqrt2Pi * e * (f - f0_cdf(y)) + kInvSqrt2Pi * e * atom_mass;
}

LiftFunctional GaussCdf::functional() const {
    const GaussCdf self = *this;
    LiftFunctional f;
    f.name = "gausscdf";
    f.dim_h = 1;
    f.dim_u = 1;
    f.eval = [self](const Ensemble& x) {
        std::vector<double> vals(x.particles);
        std::sort(vals.begin(), vals.end());
        return std::vector<double>{self.eval_sorted(vals)};
    };
    f.closed_rn = [self](const DiscreteMeasure& mu, std::size_t atom) {
        OperatorSample m(1, 1);
        m(0, 0) = self.deriv(mu, mu.atoms[atom][0]);
        return m;
    };
    return f;
}

// ---------------------------------------------------------------------------
// convolution counterexample
// ---------------------------------------------------------------------------

std::vector<double> ConvexCounterexample::grid() const {
    if (grid_points < 2) throw std::invalid_argument("convex: grid too coarse");
    std::vector<double> g(grid_points);
    const double h = (grid_hi - grid_lo) / static_cast<double>(grid_points - 1);
    for (std::size_t i = 0; i < grid_points; ++i) g[i] = grid_lo + h * static_cast<double>(i);
    return g;
}

std::vector<double> ConvexCounterexample::trapezoid_weights() const {
    std::vector<double> w(grid_points);
    const double h = (grid_hi - grid_lo) / static_cast<double>(grid_points - 1);
    for (std::size_t i = 0; i < grid_points; ++i) w[i] = h;
    w.front() = 0.5 * h;
    w.back() = 0.5 * h;
    return w;
}

double ConvexCounterexample::kernel_antiderivative(double z, double h2) {
    const double az = std::abs(z);
    if (az > 1.0) return 0.0;
    const double r = std::sqrt(az);
    if (h2 < 1e-14) return 2.0 * (r - 1.0);
    return 2.0 * (r - 1.0) + 2.0 * h2 * std::log((1.0 + h2) / (r + h2));
}

std::vector<double> ConvexCounterexample::eval(const Ensemble& x) const {
    if (x.dim != 1) throw std::invalid_argument("convex: 1-D ensembles only");
    if (grid_points < 64)
        std::fputs("convex: warning: grid coarser than 64 points, L2 norms will be crude\n", stderr);
    double h2;
    if (frozen_h2) {
        h2 = *frozen_h2;
    } else {
        GaussCdf gc;
        gc.quad_order = quad_order;
        std::vector<double> vals(x.particles);
        std::sort(vals.begin(), vals.end());
        const double h = gc.eval_sorted(vals);
        h2 = h * h;
    }
    const std::vector<double> ts = grid();
    const std::vector<std::size_t> order = x.canonical_order();
    std::vector<double> out(ts.size(), 0.0);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        double acc = 0.0;
        for (std::size_t j : order) acc += kernel_antiderivative(ts[i] - x.particle(j)[0], h2);
        out[i] = acc / static_cast<double>(x.n);
    }
    return out;
}

LiftFunctional ConvexCounterexample::functional() const {
    const ConvexCounterexample self = *this;
    LiftFunctional f;
    f.name = self.frozen_h2 ? "convex:frozen" : "convex";
    f.dim_h = 1;
    f.dim_u = self.grid_points;
    f.u_weights = self.trapezoid_weights();
    f.eval = [self](const Ensemble& x) { return self.eval(x); };
    return f;
}

// ---------------------------------------------------------------------------
// ProdMaj kernel
// ---------------------------------------------------------------------------

double prodmaj_kernel(double x, double x_tilde) {
    const double u = std::abs(x - x_tilde);
    if (u == 0.0) return std::numeric_limits<double>::infinity();
    if (u > 2.0) return 0.0;
    if (u == 1.0) return kPi; // two-sided limit
    if (u < 1.0) {
        // equal to ln((2 sqrt(1-u) + (2-u)) / |2 sqrt(1-u) - (2-u)|) + pi,
        // rationalized so both u -> 0 and u -> 1 are cancellation free
        return 2.0 * std::log((2.0 * std::sqrt(1.0 - u) + 2.0 - u) / u) + kPi;
    }
    return -2.0 * std::atan((u - 2.0) / (2.0 * std::sqrt(u - 1.0)));
}

double prodmaj_signed_kernel(double x, double x_tilde) {
    const double u = std::abs(x - x_tilde);
    if (u == 0.0) return std::numeric_limits<double>::infinity();
    if (u > 2.0) return 0.0;
    if (u == 1.0) return -kPi;
    // between the two centers the factors have opposite signs; the overlap
    // region integrates to pi exactly, turning K into K - 2 pi below u = 1
    // and into -K above it
    if (u < 1.0) return prodmaj_kernel(x, x_tilde) - 2.0 * kPi;
    return -prodmaj_kernel(x, x_tilde);
}

namespace {

// integrate f over [a,b] where `a` or `b` may be an inverse-sqrt singularity
double integrate_sqrt_sub(double a, double b, bool sing_at_a, bool sing_at_b, std::size_t order,
                          const std::function<double(double)>& f) {
    if (b - a < 1e-300) return 0.0;
    if (sing_at_a && sing_at_b) {
        const double mid = 0.5 * (a + b);
        return integrate_sqrt_sub(a, mid, true, false, order, f) +
               integrate_sqrt_sub(mid, b, false, true, order, f);
    }
    if (sing_at_a) {
        const double len = std::sqrt(b - a);
        return gl_integrate(0.0, len, order, [&](double s) { return 2.0 * s * f(a + s * s); });
    }
    if (sing_at_b) {
        const double len = std::sqrt(b - a);
        return gl_integrate(0.0, len, order, [&](double s) { return 2.0 * s * f(b - s * s); });
    }
    return gl_integrate(a, b, order, f);
}

double prodmaj_quad_impl(double x, double x_tilde, std::size_t order, bool keep_sign) {
    const double lo = std::max(x, x_tilde) - 1.0;
    const double hi = std::min(x, x_tilde) + 1.0;
    if (hi <= lo) return 0.0;
    std::vector<double> cuts{lo, hi};
    if (x > lo && x < hi) cuts.push_back(x);
    if (x_tilde > lo && x_tilde < hi) cuts.push_back(x_tilde);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = cuts[i], b = cuts[i + 1];
        if (b - a < 1e-300) continue;
        const bool sa = (a == x) || (a == x_tilde);
        const bool sb = (b == x) || (b == x_tilde);
        const double mid = 0.5 * (a + b);
        const double sign = keep_sign ? ((mid > x ? 1.0 : -1.0) * (mid > x_tilde ? 1.0 : -1.0)) : 1.0;
        total += sign * integrate_sqrt_sub(a, b, sa, sb, order, [&](double t) {
            return 1.0 / (std::sqrt(std::abs(t - x)) * std::sqrt(std::abs(t - x_tilde)));
        });
    }
    return total;
}

} // namespace

double prodmaj_unsigned_quad(double x, double x_tilde, std::size_t order) {
    return prodmaj_quad_impl(x, x_tilde, order, false);
}

double prodmaj_signed_quad(double x, double x_tilde, std::size_t order) {
    return prodmaj_quad_impl(x, x_tilde, order, true);
}

namespace {

// T(w) = 2 int_0^w (w-u) kappa(u) du for a difference kernel kappa on [0, w], w <= 1.
// kappa(u) = -2 ln u + smooth(u); the log part is integrated exactly.
double block_integral(double width, bool use_signed) {
    if (!(width > 0.0 && width <= 1.0))
        throw std::invalid_argument("prodmaj block integral: width must be in (0,1]");
    const double w = width;
    // exact: 2 int_0^w (w-u)(-2 ln u) du = -2 w^2 ln w + 3 w^2
    double total = -2.0 * w * w * std::log(w) + 3.0 * w * w;
    const double c = use_signed ? -kPi : kPi; // constant part of the smooth remainder
    auto smooth = [&](double u) { return 2.0 * std::log(2.0 * std::sqrt(1.0 - u) + 2.0 - u) + c; };
    // derivative of the smooth part blows up at u = 1; substitute on the tail
    const double split = std::min(w, 0.75);
    double sp = gl_integrate(0.0, split, 32, [&](double u) { return (w - u) * smooth(u); });
    if (w > split) {
        sp += gl_integrate(0.0, std::sqrt(w - split), 32, [&](double s) {
            const double u = w - s * s;
            return 2.0 * s * (w - u) * smooth(u);
        });
    }
    return total + 2.0 * sp;
}

} // namespace

double prodmaj_block_integral_signed(double width) { return block_integral(width, true); }
double prodmaj_block_integral_unsigned(double width) { return block_integral(width, false); }

DivergenceResult divergence_diagnostic(const std::vector<std::size_t>& ns) {
    for (std::size_t n : ns) {
        if (n == 0 || n > 1024) throw std::invalid_argument("divergence_diagnostic: n must be in [1,1024]");
        if ((n & (n - 1)) != 0) throw std::invalid_argument("divergence_diagnostic: n must be a power of 2");
    }
    DivergenceResult res;
    // validate the closed forms against the quadrature oracle before use
    const double probes[] = {0.013, 0.11, 0.37, 0.62, 0.94, 1.21, 1.73, 1.97};
    for (double u : probes) {
        res.closedform_vs_quadrature = std::max(
            res.closedform_vs_quadrature, std::abs(prodmaj_signed_kernel(0.0, u) - prodmaj_signed_quad(0.0, u)));
        res.signed_vs_unsigned =
            std::max(res.signed_vs_unsigned, std::abs(prodmaj_kernel(0.0, u) - prodmaj_signed_quad(0.0, u)));
    }
    if (res.closedform_vs_quadrature > 1e-8)
        throw std::runtime_error("divergence_diagnostic: signed kernel failed the quadrature validation");

    for (std::size_t n : ns) {
        DivergenceRow row;
        row.n = n;
        const double w = 1.0 / static_cast<double>(n);
        const double t = prodmaj_block_integral_signed(w);
        row.s_n = static_cast<double>(n) * std::sqrt(std::max(t, 0.0));
        row.sqrt_log_n = std::sqrt(std::log(static_cast<double>(n)));
        row.pass = row.s_n >= row.sqrt_log_n * (1.0 - 1e-3);
        res.rows.push_back(row);
    }
    return res;
}

// ---------------------------------------------------------------------------
// mean-field drift fixture
// ---------------------------------------------------------------------------

double MeanFieldDrift::mean_psi(const Ensemble& x) const {
    if (x.dim != dim()) throw std::invalid_argument("drift: dimension mismatch");
    std::vector<double> vals(x.n);
    for (std::size_t j = 0; j < x.n; ++j) {
        const double* p = x.particle(j);
        double ip = 0.0;
        for (std::size_t k = 0; k < x.dim; ++k) ip += p[k] * w[k];
        vals[j] = psi.f(ip);
    }
    std::sort(vals.begin(), vals.end()); // permutation-invariant accumulation
    double s = 0.0;
    for (double v : vals) s += v;
    return s / static_cast<double>(x.n);
}

double MeanFieldDrift::mean_psi_measure(const DiscreteMeasure& mu) const {
    if (mu.dim != dim()) throw std::invalid_argument("drift: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        double ip = 0.0;
        for (std::size_t c = 0; c < mu.dim; ++c) ip += mu.atoms[k][c] * w[c];
        s += mu.weights[k] * psi.f(ip);
    }
    return s;
}

std::vector<double> MeanFieldDrift::eval(const Ensemble& x) const {
    const double s = phi.f(mean_psi(x));
    std::vector<double> out(v);
    for (double& c : out) c *= s;
    return out;
}

std::vector<double> MeanFieldDrift::eval_measure(const DiscreteMeasure& mu) const {
    const double s = phi.f(mean_psi_measure(mu));
    std::vector<double> out(v);
    for (double& c : out) c *= s;
    return out;
}

OperatorSample MeanFieldDrift::dmu(double mean_psi_value, const double* y) const {
    const std::size_t d = dim();
    double ip = 0.0;
    for (std::size_t k = 0; k < d; ++k) ip += y[k] * w[k];
    const double scale = phi.d1(mean_psi_value) * psi.d1(ip);
    OperatorSample m(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k) m(i, k) = scale * v[i] * w[k];
    return m;
}

BilinearSample MeanFieldDrift::dydmu(double mean_psi_value, const double* y) const {
    const std::size_t d = dim();
    double ip = 0.0;
    for (std::size_t k = 0; k < d; ++k) ip += y[k] * w[k];
    const double scale = phi.d1(mean_psi_value) * psi.d2(ip);
    BilinearSample b(d, d);
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < d; ++l)
            for (std::size_t u = 0; u < d; ++u) b.at(k, l, u) = scale * w[k] * w[l] * v[u];
    return b;
}

MeanFieldDrift MeanFieldDrift::tanh_bump(std::size_t dim) {
    MeanFieldDrift d;
    d.v.assign(dim, 0.0);
    d.v[0] = 3.0;
    d.w.resize(dim);
    double nw = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
        d.w[k] = 1.0 / static_cast<double>(k + 1);
        nw += d.w[k] * d.w[k];
    }
    nw = std::sqrt(nw);
    for (double& c : d.w) c /= nw;
    d.psi = ScalarC2::gauss_bump(2.0);
    return d;
}

LiftFunctional MeanFieldDrift::functional() const {
    const MeanFieldDrift self = *this;
    LiftFunctional f;
    f.name = "drift:" + phi.name + "-" + psi.name;
    f.dim_h = dim();
    f.dim_u = dim();
    f.eval = [self](const Ensemble& x) { return self.eval(x); };
    f.closed_rn = [self](const DiscreteMeasure& mu, std::size_t atom) {
        return self.dmu(self.mean_psi_measure(mu), mu.atoms[atom].data());
    };
    return f;
}

double drift_lipschitz_sample(const MeanFieldDrift& drift, std::uint64_t seed, std::size_t trials) {
    RngStream rng = spawn_stream(seed, 0);
    const std::size_t d = drift.dim();
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = 8 + (rng.next_u64() % 24);
        std::vector<double> a(n * d), b(n * d);
        for (std::size_t i = 0; i < n * d; ++i) {
            a[i] = rng.next_normal();
            b[i] = a[i] + 0.3 * rng.next_normal();
        }
        const Ensemble xa(d, a), xb(d, b);
        const double w2 = wasserstein2_assign(xa, xb);
        if (w2 < 1e-12) continue;
        const std::vector<double> ba = drift.eval(xa);
        const std::vector<double> bb = drift.eval(xb);
        std::vector<double> diff(d);
        for (std::size_t k = 0; k < d; ++k) diff[k] = ba[k] - bb[k];
        worst = std::max(worst, norm2(diff) / w2);
    }
    return worst;
}

LiftFunctional make_functional(const std::string& name, std::size_t dim) {
    if (name.rfind("linear:", 0) == 0) return make_linear_functional(name.substr(7), dim);
    if (name == "gausscdf") {
        if (dim != 1) throw std::invalid_argument("gausscdf requires dim = 1");
        return GaussCdf{}.functional();
    }
    if (name == "convex") {
        if (dim != 1) throw std::invalid_argument("convex requires dim = 1");
        return ConvexCounterexample{}.functional();
    }
    if (name == "drift:tanh-bump") return MeanFieldDrift::tanh_bump(dim).functional();
    throw std::invalid_argument("unknown functional fixture: " + name);
}

} // namespace mfl
