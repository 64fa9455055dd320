#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mfl {

// Dense row-major matrix, sized for truncated operators (d_U x d).
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline Mat operator+(const Mat& x, const Mat& y) {
    if (x.rows != y.rows || x.cols != y.cols) throw std::invalid_argument("Mat: shape mismatch in +");
    Mat r(x.rows, x.cols);
    for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] = x.a[i] + y.a[i];
    return r;
}

inline Mat operator-(const Mat& x, const Mat& y) {
    if (x.rows != y.rows || x.cols != y.cols) throw std::invalid_argument("Mat: shape mismatch in -");
    Mat r(x.rows, x.cols);
    for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] = x.a[i] - y.a[i];
    return r;
}

inline Mat operator*(double s, const Mat& x) {
    Mat r = x;
    for (double& v : r.a) v *= s;
    return r;
}

inline std::vector<double> matvec(const Mat& m, const std::vector<double>& v) {
    if (v.size() != m.cols) throw std::invalid_argument("Mat: matvec size mismatch");
    std::vector<double> out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

// y = M^T x
inline std::vector<double> matvec_t(const Mat& m, const std::vector<double>& x) {
    if (x.size() != m.rows) throw std::invalid_argument("Mat: matvec_t size mismatch");
    std::vector<double> out(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out[j] += m(i, j) * x[i];
    return out;
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double frobenius_norm(const Mat& m) {
    double s = 0.0;
    for (double x : m.a) s += x * x;
    return std::sqrt(s);
}

// Largest singular value by power iteration on M^T M. Deterministic start,
// 500-iteration cap, tolerance 1e-10 on successive estimates.
inline double operator_norm(const Mat& m, int max_iter = 500, double tol = 1e-10) {
    if (m.rows == 0 || m.cols == 0) return 0.0;
    const double fro = frobenius_norm(m);
    if (fro == 0.0) return 0.0;
    if (m.cols == 1 || m.rows == 1) return fro;

    std::vector<double> v(m.cols);
    // deterministic non-degenerate start: graded entries
    for (std::size_t j = 0; j < m.cols; ++j) v[j] = 1.0 + static_cast<double>(j) / static_cast<double>(m.cols);
    double nv = norm2(v);
    for (double& x : v) x /= nv;

    double sigma = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        std::vector<double> w = matvec(m, v);
        const double s = norm2(w);
        if (s == 0.0) return 0.0;
        std::vector<double> u = matvec_t(m, w);
        const double nu = norm2(u);
        if (nu == 0.0) return s;
        for (double& x : u) x /= nu;
        v = std::move(u);
        if (std::abs(s - sigma) <= tol * std::max(1.0, s)) return s;
        sigma = s;
    }
    throw std::runtime_error("operator_norm: power iteration did not converge in 500 iterations");
}

} // namespace mfl
