#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rvol/grid.hpp"
#include "rvol/numerics.hpp"

namespace rvol {

// Joint covariance of (W_{t_1..t_N}, What_{t_1..t_N}) where What is the
// Riemann-Liouville fractional Brownian motion driven by W:
//   What_t = int_0^t sqrt(2H) (t-s)^{H-1/2} dW_s.
//
// Blocks (s = t_i, t = t_j):
//   Cov(W_s, W_t)       = min(s, t)
//   Cov(W_s, What_t)    = sqrt(2H)/(H+1/2) * (t^{H+1/2} - (t - min(s,t))^{H+1/2})
//   Cov(What_t, What_t) = t^{2H}                                   (exact)
//   Cov(What_s, What_t) = 2H int_0^s (s-u)^{H-1/2} (t-u)^{H-1/2} du  (s < t)
//
// The off-diagonal What integral has an endpoint singularity at u = s; the
// substitution w = (s-u)^{H+1/2} turns it into a smooth integrand
//   2H/(H+1/2) * int_0^{s^{H+1/2}} (t-s + w^{1/(H+1/2)})^{H-1/2} dw
// which Gauss-Legendre resolves to ~1e-13 relative accuracy at 200+ nodes.

inline double cov_brownian(double s, double t) { return std::min(s, t); }

inline double cov_brownian_fractional(double s, double t, double H) {
    const double p = H + 0.5;
    const double m = std::min(s, t);
    return std::sqrt(2.0 * H) / p * (std::pow(t, p) - std::pow(t - m, p));
}

namespace detail {

struct GaussLegendreCache {
    std::vector<double> x, w;
    explicit GaussLegendreCache(int n) {
        auto [xs, ws] = gauss_legendre(n);
        x = std::move(xs);
        w = std::move(ws);
    }
};

}  // namespace detail

inline double cov_fractional(double s, double t, double H, const detail::GaussLegendreCache& gl) {
    if (s > t) std::swap(s, t);
    if (s == t) return std::pow(t, 2.0 * H);
    if (s <= 0.0) return 0.0;
    const double p = H + 0.5;
    const double tau = t - s;
    const double upper = std::pow(s, p);
    const double pinv = 1.0 / p;
    const double expo = H - 0.5;
    double acc = 0.0;
    for (std::size_t k = 0; k < gl.x.size(); ++k) {
        const double w = 0.5 * (gl.x[k] + 1.0) * upper;
        acc += gl.w[k] * std::pow(tau + std::pow(w, pinv), expo);
    }
    acc *= 0.5 * upper;
    return 2.0 * H / p * acc;
}

inline Matrix build_covariance(const GridSpec& grid, double H, int quad_nodes = 240) {
    if (!(H > 0.0) || !(H <= 0.5)) throw std::invalid_argument("build_covariance: H must lie in (0, 1/2]");
    if (quad_nodes < 200) throw std::invalid_argument("build_covariance: need at least 200 quadrature nodes");
    const int N = grid.N;
    const detail::GaussLegendreCache gl(quad_nodes);
    Matrix c(2 * N, 2 * N);
    for (int i = 0; i < N; ++i) {
        const double ti = grid.t(i + 1);
        for (int j = 0; j < N; ++j) {
            const double tj = grid.t(j + 1);
            c(i, j) = cov_brownian(ti, tj);
            c(i, N + j) = cov_brownian_fractional(ti, tj, H);
            c(N + i, j) = cov_brownian_fractional(tj, ti, H);
            if (j >= i) {
                const double v = cov_fractional(ti, tj, H, gl);
                c(N + i, N + j) = v;
                c(N + j, N + i) = v;
            }
        }
    }
    return c;
}

// Lower-triangular factor L with L L^T = covariance (+ jitter*I if the bare
// factorization fails; ladder 1e-12 -> 1e-8, then give up).
struct CovarianceFactor {
    Matrix L;
    double jitter = 0.0;

    [[nodiscard]] int n() const { return static_cast<int>(L.rows); }
};

inline CovarianceFactor factorize(const Matrix& cov) {
    if (cov.rows != cov.cols) throw std::invalid_argument("factorize: covariance must be square");
    const double ladder[] = {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8};
    for (double jitter : ladder) {
        Matrix m = cov;
        if (jitter > 0.0)
            for (std::size_t i = 0; i < m.rows; ++i) m(i, i) += jitter;
        if (cholesky_lower_inplace(m)) return {std::move(m), jitter};
    }
    throw std::runtime_error("factorize: covariance not positive definite even with jitter 1e-8");
}

}  // namespace rvol
