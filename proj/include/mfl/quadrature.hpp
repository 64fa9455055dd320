#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace mfl {

// Gauss-Legendre rule on [-1,1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Nodes/weights by Newton iteration on P_n; n in [1, 64].
const GaussLegendre& gauss_legendre(std::size_t n);

// integral of f over [a,b] with an n-point rule
double gl_integrate(double a, double b, std::size_t n, const std::function<double(double)>& f);

// composite rule: [a,b] split into panels of length at most max_len
double gl_integrate_panels(double a, double b, std::size_t n, double max_len,
                           const std::function<double(double)>& f);

} // namespace mfl
