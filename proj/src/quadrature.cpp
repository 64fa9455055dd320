#include "mfl/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace mfl {

static GaussLegendre compute_rule(std::size_t n) {
    GaussLegendre rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i) {
        // Chebyshev-based initial guess, then Newton on P_n.
        double x = std::cos(pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        double p_deriv = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            if (n == 1) { p1 = x; }
            for (std::size_t k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                p0 = p1;
                p1 = pk;
            }
            const double pn = (n == 1) ? x : p1;
            const double pn1 = (n == 1) ? 1.0 : p0;
            p_deriv = static_cast<double>(n) * (x * pn - pn1) / (x * x - 1.0);
            const double dx = pn / p_deriv;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[i] = x;
        rule.weights[i] = 2.0 / ((1.0 - x * x) * p_deriv * p_deriv);
    }
    return rule;
}

const GaussLegendre& gauss_legendre(std::size_t n) {
    if (n < 1 || n > 64) throw std::invalid_argument("gauss_legendre: order must be in [1,64]");
    static std::map<std::size_t, GaussLegendre> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_rule(n)).first;
    return it->second;
}

double gl_integrate(double a, double b, std::size_t n, const std::function<double(double)>& f) {
    const GaussLegendre& r = gauss_legendre(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * f(mid + half * r.nodes[i]);
    return s * half;
}

double gl_integrate_panels(double a, double b, std::size_t n, double max_len,
                           const std::function<double(double)>& f) {
    if (b <= a) return 0.0;
    const std::size_t panels = static_cast<std::size_t>(std::ceil((b - a) / max_len));
    double s = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + (b - a) * static_cast<double>(p) / static_cast<double>(panels);
        const double hi = a + (b - a) * static_cast<double>(p + 1) / static_cast<double>(panels);
        s += gl_integrate(lo, hi, n, f);
    }
    return s;
}

} // namespace mfl
