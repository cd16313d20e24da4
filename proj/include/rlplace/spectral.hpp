#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlplace/matrix.hpp"
#include "rlplace/rng.hpp"

namespace rlplace {

struct SpectralSummary {
    double fiedler_value = 0.0;
    double spectral_radius = 0.0;
    int iterations_used = 0;
    double residual = 0.0;
};

struct SpectralNonConvergence : std::runtime_error {
    SpectralNonConvergence(const std::string& what, double best_residual, int iterations)
        : std::runtime_error(what + " (best residual " + std::to_string(best_residual) + " after " +
                             std::to_string(iterations) + " iterations)"),
          best_residual(best_residual),
          iterations(iterations) {}
    double best_residual;
    int iterations;
};

namespace detail {

// Unweighted Laplacian apply: y = (D - A) x. `nbr` holds distinct neighbors.
inline Vec laplacian_apply(const std::vector<std::vector<int>>& nbr, const Vec& x) {
    const size_t n = nbr.size();
    Vec y(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double acc = static_cast<double>(nbr[i].size()) * x[i];
        for (int j : nbr[i]) acc -= x[j];
        y[i] = acc;
    }
    return y;
}

inline void project_out_ones(Vec& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    for (double& v : x) v -= mean;
}

// Number of eigenvalues of the symmetric tridiagonal (a, b) strictly below x.
inline int sturm_count(const Vec& a, const Vec& b, double x) {
    int count = 0;
    double d = 1.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double off = i == 0 ? 0.0 : b[i - 1];
        d = a[i] - x - off * off / d;
        if (d == 0.0) d = 1e-300;
        if (d < 0.0) ++count;
    }
    return count;
}

inline double tridiag_smallest_eigenvalue(const Vec& a, const Vec& b) {
    double lo = a[0], hi = a[0];
    for (size_t i = 0; i < a.size(); ++i) {
        const double r = (i > 0 ? std::abs(b[i - 1]) : 0.0) + (i + 1 < a.size() ? std::abs(b[i]) : 0.0);
        lo = std::min(lo, a[i] - r);
        hi = std::max(hi, a[i] + r);
    }
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (sturm_count(a, b, mid) >= 1)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

// Eigenvector of the tridiagonal for (approximately) eigenvalue lambda, via
// shifted inverse iteration with dense partial-pivoting LU. k stays <= ~40.
inline Vec tridiag_eigenvector(const Vec& a, const Vec& b, double lambda) {
    const int k = static_cast<int>(a.size());
    Mat m(k, k);
    const double shift = lambda + 1e-12 * std::max(1.0, std::abs(lambda));
    for (int i = 0; i < k; ++i) {
        m(i, i) = a[i] - shift;
        if (i + 1 < k) {
            m(i, i + 1) = b[i];
            m(i + 1, i) = b[i];
        }
    }
    // LU factorization with partial pivoting
    std::vector<int> piv(k);
    for (int i = 0; i < k; ++i) piv[i] = i;
    for (int c = 0; c < k; ++c) {
        int p = c;
        for (int r = c + 1; r < k; ++r)
            if (std::abs(m(r, c)) > std::abs(m(p, c))) p = r;
        if (p != c) {
            for (int j = 0; j < k; ++j) std::swap(m.data[p * k + j], m.data[c * k + j]);
            std::swap(piv[p], piv[c]);
        }
        if (m(c, c) == 0.0) m(c, c) = 1e-300;
        for (int r = c + 1; r < k; ++r) {
            const double f = m(r, c) / m(c, c);
            m(r, c) = f;
            for (int j = c + 1; j < k; ++j) m(r, j) -= f * m(c, j);
        }
    }
    auto solve = [&](Vec rhs) {
        Vec x(k);
        for (int i = 0; i < k; ++i) x[i] = rhs[piv[i]];
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < i; ++j) x[i] -= m(i, j) * x[j];
        for (int i = k - 1; i >= 0; --i) {
            for (int j = i + 1; j < k; ++j) x[i] -= m(i, j) * x[j];
            x[i] /= m(i, i);
        }
        return x;
    };
    Vec s(k, 1.0 / std::sqrt(static_cast<double>(k)));
    for (int it = 0; it < 4; ++it) {
        s = solve(s);
        const double nrm = norm2(s);
        if (nrm == 0.0 || !std::isfinite(nrm)) {
            s.assign(k, 0.0);
            s[0] = 1.0;
            break;
        }
        scale(s, 1.0 / nrm);
    }
    return s;
}

}  // namespace detail

// Spectral radius by power iteration; Fiedler value by restarted Lanczos on
// the subspace orthogonal to the all-ones vector, with re-orthogonalization
// against the Krylov basis every 10 steps. Weights are ignored: the spectrum
// is that of the unweighted Laplacian.
inline SpectralSummary spectral_summary(const std::vector<std::vector<int>>& neighbors,
                                        double tol = 1e-8, int max_iter = 5000) {
    const int n = static_cast<int>(neighbors.size());
    if (n < 2) throw std::invalid_argument("spectral_summary requires n >= 2");

    SpectralSummary out;
    int iters = 0;

    // --- spectral radius ---
    {
        Rng rng(0x5ca1ab1eull);
        Vec x(n);
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        scale(x, 1.0 / norm2(x));
        double lambda = 0.0, res = 0.0;
        bool ok = false;
        while (iters < max_iter) {
            ++iters;
            Vec y = detail::laplacian_apply(neighbors, x);
            lambda = dot(x, y);
            Vec r = y;
            axpy(-lambda, x, r);
            res = norm2(r);
            if (res <= tol) {
                ok = true;
                break;
            }
            const double ny = norm2(y);
            if (ny == 0.0) {  // L == 0 (edgeless graph)
                lambda = 0.0;
                res = 0.0;
                ok = true;
                break;
            }
            x = std::move(y);
            scale(x, 1.0 / ny);
        }
        if (!ok) throw SpectralNonConvergence("power iteration did not converge", res, iters);
        out.spectral_radius = lambda;
        out.residual = res;
    }

    // --- Fiedler value ---
    {
        Rng rng(0xf1ed1e4ull);
        Vec q(n);
        for (auto& v : q) v = rng.uniform(-1.0, 1.0);
        detail::project_out_ones(q);
        double nq = norm2(q);
        if (nq == 0.0) {
            q[0] = 1.0;
            detail::project_out_ones(q);
            nq = norm2(q);
        }
        scale(q, 1.0 / nq);

        const int m = std::min(n - 1, 40);
        double best_res = 1e300;
        bool ok = false;
        while (iters < max_iter && !ok) {
            std::vector<Vec> basis;
            Vec alpha, beta;
            Vec qprev(n, 0.0), qcur = q;
            bool breakdown = false;
            for (int j = 0; j < m && iters < max_iter; ++j) {
                ++iters;
                basis.push_back(qcur);
                Vec w = detail::laplacian_apply(neighbors, qcur);
                if (j > 0) axpy(-beta[j - 1], qprev, w);
                const double a = dot(qcur, w);
                alpha.push_back(a);
                axpy(-a, qcur, w);
                detail::project_out_ones(w);
                if ((j + 1) % 10 == 0)
                    for (const auto& b : basis) axpy(-dot(b, w), b, w);
                const double nb = norm2(w);
                if (nb < 1e-12) {
                    breakdown = true;  // invariant subspace reached
                    break;
                }
                beta.push_back(nb);
                qprev = std::move(qcur);
                qcur = std::move(w);
                scale(qcur, 1.0 / nb);
            }
            if (alpha.empty()) break;
            Vec off(beta.begin(),
                    beta.begin() + std::max<ptrdiff_t>(0, static_cast<ptrdiff_t>(alpha.size()) - 1));
            const double theta = detail::tridiag_smallest_eigenvalue(alpha, off);
            const Vec s = detail::tridiag_eigenvector(alpha, off, theta);
            Vec x(n, 0.0);
            for (size_t j = 0; j < basis.size(); ++j) axpy(s[j], basis[j], x);
            detail::project_out_ones(x);
            const double nx = norm2(x);
            if (nx == 0.0) break;
            scale(x, 1.0 / nx);
            Vec y = detail::laplacian_apply(neighbors, x);
            const double lambda = dot(x, y);
            Vec r = y;
            axpy(-lambda, x, r);
            const double res = norm2(r);
            best_res = std::min(best_res, res);
            if (res <= tol || (breakdown && res <= 10 * tol)) {
                out.fiedler_value = std::max(0.0, lambda);  // clear fp noise below zero
                out.residual = std::max(out.residual, res);
                ok = true;
            } else {
                q = std::move(x);  // restart from the Ritz vector
            }
        }
        if (!ok) throw SpectralNonConvergence("Lanczos did not converge", best_res, iters);
    }

    out.iterations_used = iters;
    if (out.fiedler_value > out.spectral_radius + 1e-9 * (1.0 + out.spectral_radius))
        throw std::runtime_error("spectral_summary: fiedler exceeds spectral radius");
    out.fiedler_value = std::min(out.fiedler_value, out.spectral_radius);
    size_t max_degree = 0;
    for (const auto& nb : neighbors) max_degree = std::max(max_degree, nb.size());
    if (out.spectral_radius > 2.0 * static_cast<double>(max_degree) + 1e-9)
        throw std::runtime_error("spectral_summary: radius exceeds the 2*max_degree bound");
    return out;
}

}  // namespace rlplace
