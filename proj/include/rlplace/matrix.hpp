#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rlplace/rng.hpp"

namespace rlplace {

// Dense row-major matrix of doubles. Everything in this project is small
// (dozens of rows, tens of columns), so no BLAS, no views, no cleverness.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    size_t size() const { return data.size(); }

    static Mat glorot_uniform(int r, int c, Rng& rng) {
        Mat m(r, c);
        const double bound = std::sqrt(6.0 / (r + c));
        for (auto& v : m.data) v = rng.uniform(-bound, bound);
        return m;
    }
};

using Vec = std::vector<double>;

// y = M x
inline Vec matvec(const Mat& m, const Vec& x) {
    assert(static_cast<int>(x.size()) == m.cols);
    Vec y(m.rows, 0.0);
    for (int r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        const double* row = &m.data[static_cast<size_t>(r) * m.cols];
        for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

// y = M^T x
inline Vec matvec_t(const Mat& m, const Vec& x) {
    assert(static_cast<int>(x.size()) == m.rows);
    Vec y(m.cols, 0.0);
    for (int r = 0; r < m.rows; ++r) {
        const double xr = x[r];
        const double* row = &m.data[static_cast<size_t>(r) * m.cols];
        for (int c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
    }
    return y;
}

// G += u v^T  (outer-product accumulation for weight gradients)
inline void add_outer(Mat& g, const Vec& u, const Vec& v) {
    assert(static_cast<int>(u.size()) == g.rows && static_cast<int>(v.size()) == g.cols);
    for (int r = 0; r < g.rows; ++r) {
        double* row = &g.data[static_cast<size_t>(r) * g.cols];
        const double ur = u[r];
        for (int c = 0; c < g.cols; ++c) row[c] += ur * v[c];
    }
}

inline void axpy(double a, const Vec& x, Vec& y) {
    assert(x.size() == y.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double dot(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline void scale(Vec& a, double s) {
    for (auto& v : a) v *= s;
}

inline bool all_finite(const Vec& a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.data); }

}  // namespace rlplace
