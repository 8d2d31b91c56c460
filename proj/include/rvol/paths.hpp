#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rvol/covariance.hpp"
#include "rvol/grid.hpp"
#include "rvol/model.hpp"
#include "rvol/numerics.hpp"
#include "rvol/rng.hpp"

namespace rvol {

// A batch of simulated trajectories on the grid. Sample-major storage:
//   W, What      [J][N]    values at t_1..t_N (t_0 entries are zero by definition)
//   dW, dB       [J][N]    increments over [t_i, t_{i+1}], i = 0..N-1
//   V, X         [J][N+1]  values at t_0..t_N
// `upto` marks the last grid index with valid data (partial fills are used by
// the per-step training loop, which never looks past its own step).
struct PathBundle {
    GridSpec grid;
    int J = 0;
    int upto = 0;
    std::vector<double> W, What, dW, dB, V, X;

    PathBundle() = default;
    PathBundle(const GridSpec& g, int samples) : grid(g), J(samples) {
        if (samples < 1) throw std::invalid_argument("PathBundle: need at least one sample");
        const std::size_t n = static_cast<std::size_t>(J) * grid.N;
        W.assign(n, 0.0);
        What.assign(n, 0.0);
        dW.assign(n, 0.0);
        dB.assign(n, 0.0);
        V.assign(static_cast<std::size_t>(J) * (grid.N + 1), 0.0);
        X.assign(static_cast<std::size_t>(J) * (grid.N + 1), 0.0);
    }

    // i in 1..N for w/what, 0..N-1 for dw/db, 0..N for v/x.
    [[nodiscard]] double w(int j, int i) const { return W[static_cast<std::size_t>(j) * grid.N + i - 1]; }
    [[nodiscard]] double what(int j, int i) const { return What[static_cast<std::size_t>(j) * grid.N + i - 1]; }
    [[nodiscard]] double dw(int j, int i) const { return dW[static_cast<std::size_t>(j) * grid.N + i]; }
    [[nodiscard]] double db(int j, int i) const { return dB[static_cast<std::size_t>(j) * grid.N + i]; }
    [[nodiscard]] double v(int j, int i) const { return V[static_cast<std::size_t>(j) * (grid.N + 1) + i]; }
    [[nodiscard]] double x(int j, int i) const { return X[static_cast<std::size_t>(j) * (grid.N + 1) + i]; }

    [[nodiscard]] const double* w_row(int j) const { return W.data() + static_cast<std::size_t>(j) * grid.N; }
    [[nodiscard]] const double* what_row(int j) const { return What.data() + static_cast<std::size_t>(j) * grid.N; }
    [[nodiscard]] const double* x_row(int j) const { return X.data() + static_cast<std::size_t>(j) * (grid.N + 1); }
};

// Draw the exact joint Gaussian (W, What) at the grid times through index
// `up_to` by multiplying fresh normals with the Cholesky factor, plus the
// independent increments dB of the second Brownian motion. Consumes exactly
// (N + up_to) + up_to normals per sample.
inline void sample_paths_into(PathBundle& b, const CovarianceFactor& factor, NormalSampler& rng, int up_to = -1) {
    const int N = b.grid.N;
    if (factor.n() != 2 * N) throw std::invalid_argument("sample_paths: factor size does not match grid");
    if (up_to < 0) up_to = N;
    if (up_to < 1 || up_to > N) throw std::invalid_argument("sample_paths: up_to out of range");
    b.upto = up_to;
    const double sdt = std::sqrt(b.grid.dt());
    const int nz = N + up_to;
    std::vector<double> z(static_cast<std::size_t>(nz));
    const Matrix& L = factor.L;

    // Process samples eight at a time with the triangular solve laid out
    // lane-per-sample: the c loop broadcasts one factor entry against eight
    // contiguous normals, which vectorizes, while each lane still accumulates
    // in the exact order of the scalar tail below — results are bitwise
    // independent of where a sample lands. Normals are consumed per sample in
    // the same order either way: nz levels first, then up_to increments.
    constexpr int B = 8;
    std::vector<double> zt(static_cast<std::size_t>(nz) * B);
    std::vector<double> wt(static_cast<std::size_t>(up_to) * B);
    std::vector<double> ht(static_cast<std::size_t>(up_to) * B);
    int j0 = 0;
    for (; j0 + B <= b.J; j0 += B) {
        for (int l = 0; l < B; ++l) {
            rng.fill(z.data(), nz);
            for (int c = 0; c < nz; ++c) zt[static_cast<std::size_t>(c) * B + l] = z[c];
            double* dbj = b.dB.data() + static_cast<std::size_t>(j0 + l) * N;
            for (int i = 0; i < up_to; ++i) dbj[i] = sdt * rng.next();
        }
        for (int i = 0; i < up_to; ++i) {
            const double* row = L.row(i);
            double acc[B] = {0.0};
            for (int c = 0; c <= i; ++c) {
                const double rc = row[c];
                const double* zl = zt.data() + static_cast<std::size_t>(c) * B;
                for (int l = 0; l < B; ++l) acc[l] += rc * zl[l];
            }
            double* wl = wt.data() + static_cast<std::size_t>(i) * B;
            for (int l = 0; l < B; ++l) wl[l] = acc[l];
        }
        for (int i = 0; i < up_to; ++i) {
            const double* row = L.row(N + i);
            double acc[B] = {0.0};
            for (int c = 0; c <= N + i; ++c) {
                const double rc = row[c];
                const double* zl = zt.data() + static_cast<std::size_t>(c) * B;
                for (int l = 0; l < B; ++l) acc[l] += rc * zl[l];
            }
            double* hl = ht.data() + static_cast<std::size_t>(i) * B;
            for (int l = 0; l < B; ++l) hl[l] = acc[l];
        }
        for (int l = 0; l < B; ++l) {
            double* wj = b.W.data() + static_cast<std::size_t>(j0 + l) * N;
            double* hj = b.What.data() + static_cast<std::size_t>(j0 + l) * N;
            double* dwj = b.dW.data() + static_cast<std::size_t>(j0 + l) * N;
            double prev = 0.0;
            for (int i = 0; i < up_to; ++i) {
                wj[i] = wt[static_cast<std::size_t>(i) * B + l];
                hj[i] = ht[static_cast<std::size_t>(i) * B + l];
                dwj[i] = wj[i] - prev;
                prev = wj[i];
            }
        }
    }

    for (int j = j0; j < b.J; ++j) {
        rng.fill(z.data(), nz);
        double* wj = b.W.data() + static_cast<std::size_t>(j) * N;
        double* hj = b.What.data() + static_cast<std::size_t>(j) * N;
        for (int i = 0; i < up_to; ++i) {
            const double* row = L.row(i);
            double acc = 0.0;
            for (int c = 0; c <= i; ++c) acc += row[c] * z[c];
            wj[i] = acc;
        }
        for (int i = 0; i < up_to; ++i) {
            const double* row = L.row(N + i);
            double acc = 0.0;
            const int len = N + i;
            for (int c = 0; c <= len; ++c) acc += row[c] * z[c];
            hj[i] = acc;
        }
        double* dwj = b.dW.data() + static_cast<std::size_t>(j) * N;
        double prev = 0.0;
        for (int i = 0; i < up_to; ++i) {
            dwj[i] = wj[i] - prev;
            prev = wj[i];
        }
        double* dbj = b.dB.data() + static_cast<std::size_t>(j) * N;
        for (int i = 0; i < up_to; ++i) dbj[i] = sdt * rng.next();
    }
}

inline PathBundle sample_paths(const CovarianceFactor& factor, const GridSpec& grid, int J, uint64_t seed,
                               int up_to = -1) {
    PathBundle b(grid, J);
    NormalSampler rng(seed);
    sample_paths_into(b, factor, rng, up_to);
    return b;
}

// V_t = xi * exp(eta * What_t - eta^2/2 * t^{2H}); the Wick correction uses
// the exact variance t^{2H}, so E V_t = xi identically.
inline void bergomi_variance(PathBundle& b, const ModelParams& p) {
    const int N = b.grid.N;
    std::vector<double> drift(N);
    for (int i = 0; i < b.upto; ++i)
        drift[i] = -0.5 * p.eta * p.eta * std::pow(b.grid.t(i + 1), 2.0 * p.H);
    for (int j = 0; j < b.J; ++j) {
        const double* hj = b.What.data() + static_cast<std::size_t>(j) * N;
        double* vj = b.V.data() + static_cast<std::size_t>(j) * (N + 1);
        vj[0] = p.xi;
        for (int i = 0; i < b.upto; ++i) vj[i + 1] = p.xi * fast_exp(p.eta * hj[i] + drift[i]);
    }
}

// Rough Heston variance by explicit Volterra discretization with left-point
// coefficients and truncation V+ = max(V, 0):
//   V_{t_{i+1}} = v0 + sum_{l<=i} K(t_{i+1}-t_l) [lam (theta - V+_{t_l}) dt
//                                                 + zeta sqrt(V+_{t_l}) dW_l]
// using the same dW increments that drive the log-price.
inline void rough_heston_variance(PathBundle& b, const RoughHestonParams& p) {
    validate(p);
    const int N = b.grid.N;
    const double dt = b.grid.dt();
    const double ginv = 1.0 / std::tgamma(p.alpha);
    // kernel[k] = K((k+1) dt), k = 0..N-1
    std::vector<double> kernel(N);
    for (int k = 0; k < N; ++k) kernel[k] = std::pow((k + 1) * dt, p.alpha - 1.0) * ginv;
    std::vector<double> raw(N + 1);
    for (int j = 0; j < b.J; ++j) {
        const double* dwj = b.dW.data() + static_cast<std::size_t>(j) * N;
        double* vj = b.V.data() + static_cast<std::size_t>(j) * (N + 1);
        raw[0] = p.v0;
        for (int i = 0; i < b.upto; ++i) {
            double acc = p.v0;
            for (int l = 0; l <= i; ++l) {
                const double vp = std::max(raw[l], 0.0);
                acc += kernel[i - l] * (p.lam * (p.theta - vp) * dt + p.zeta * std::sqrt(vp) * dwj[l]);
            }
            raw[i + 1] = acc;
        }
        for (int i = 0; i <= b.upto; ++i) vj[i] = std::max(raw[i], 0.0);
    }
}

}  // namespace rvol
