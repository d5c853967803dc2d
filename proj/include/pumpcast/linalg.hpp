#ifndef PUMPCAST_LINALG_HPP
#define PUMPCAST_LINALG_HPP

#include <cassert>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pumpcast {

using Vector = std::vector<double>;

/**
 * Dense row-major matrix. Sized for desk-scale models; all training and
 * inference code paths run through these few kernels so summation order
 * is fixed and runs are reproducible.
 */
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) {
        assert(i < rows && j < cols);
        return data[i * cols + j];
    }
    double operator()(std::size_t i, std::size_t j) const {
        assert(i < rows && j < cols);
        return data[i * cols + j];
    }

    std::size_t size() const { return data.size(); }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Matrix& o) const {
        return rows == o.rows && cols == o.cols;
    }
};

/// y = A x
inline void matvec(const Matrix& a, std::span<const double> x, Vector& y) {
    assert(a.cols == x.size());
    y.assign(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = a.data.data() + i * a.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

/// y += A x
inline void matvec_add(const Matrix& a, std::span<const double> x, Vector& y) {
    assert(a.cols == x.size() && a.rows == y.size());
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = a.data.data() + i * a.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += row[j] * x[j];
        y[i] += acc;
    }
}

/// y += A^T x
inline void matvec_transpose_add(const Matrix& a, std::span<const double> x,
                                 Vector& y) {
    assert(a.rows == x.size() && a.cols == y.size());
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = a.data.data() + i * a.cols;
        const double xi = x[i];
        for (std::size_t j = 0; j < a.cols; ++j) y[j] += row[j] * xi;
    }
}

/// A += u v^T
inline void outer_add(Matrix& a, std::span<const double> u,
                      std::span<const double> v) {
    assert(a.rows == u.size() && a.cols == v.size());
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* row = a.data.data() + i * a.cols;
        const double ui = u[i];
        for (std::size_t j = 0; j < a.cols; ++j) row[j] += ui * v[j];
    }
}

inline void axpy(double alpha, std::span<const double> x, Vector& y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(std::span(m.data)); }

/// Deterministic engine; every stochastic component takes one of these
/// explicitly instead of owning hidden state.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double uniform_in(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for one tensor.
inline void init_uniform_fan_in(Matrix& m, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> d(-bound, bound);
    for (double& v : m.data) v = d(rng);
}

inline void init_uniform_fan_in(Vector& v, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> d(-bound, bound);
    for (double& x : v) x = d(rng);
}

}  // namespace pumpcast

#endif  // PUMPCAST_LINALG_HPP
