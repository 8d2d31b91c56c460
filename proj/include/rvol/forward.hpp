#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rvol/model.hpp"
#include "rvol/paths.hpp"

namespace rvol {

// Euler step for the drift-removed log price, left-point variance:
//   X_{i+1} = X_i - V_i/2 dt + sqrt(V_i) (rho dW_i + sqrt(1-rho^2) dB_i).
// With normal increments this makes exp(X) an exact discrete martingale.
inline void euler_logprice(PathBundle& b, const ModelParams& p) {
    const int N = b.grid.N;
    const double dt = b.grid.dt();
    const double rho = p.rho;
    const double rhobar = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const double x0 = p.x0();
    for (int j = 0; j < b.J; ++j) {
        const double* vj = b.V.data() + static_cast<std::size_t>(j) * (N + 1);
        const double* dwj = b.dW.data() + static_cast<std::size_t>(j) * N;
        const double* dbj = b.dB.data() + static_cast<std::size_t>(j) * N;
        double* xj = b.X.data() + static_cast<std::size_t>(j) * (N + 1);
        xj[0] = x0;
        for (int i = 0; i < b.upto; ++i) {
            const double v = vj[i];
            if (!(v >= 0.0)) throw std::runtime_error("euler_logprice: negative variance");
            xj[i + 1] = xj[i] - 0.5 * v * dt + std::sqrt(v) * (rho * dwj[i] + rhobar * dbj[i]);
        }
    }
}

// Exercise value at time t in the drift-removed coordinate: S_t = e^{x + r t}.
inline double payoff_running(const PayoffSpec& payoff, const ModelParams& p, double t, double x) {
    return std::max(payoff.strike - std::exp(x + p.r * t), 0.0);
}

// Terminal condition of the backward equation: (K - S_T)+ as a function of X_T.
inline double payoff_terminal(const PayoffSpec& payoff, const ModelParams& p, double T, double xT) {
    return payoff_running(payoff, p, T, xT);
}

inline void simulate_bundle_into(PathBundle& b, const CovarianceFactor& factor, const ModelParams& p,
                                 NormalSampler& rng, int up_to = -1) {
    sample_paths_into(b, factor, rng, up_to);
    bergomi_variance(b, p);
    euler_logprice(b, p);
}

// Convenience: Gaussian draw + Bergomi variance + Euler log price in one call.
inline PathBundle simulate_bundle(const CovarianceFactor& factor, const ModelParams& p, const GridSpec& grid,
                                  int J, uint64_t seed, int up_to = -1) {
    PathBundle b(grid, J);
    NormalSampler rng(seed);
    simulate_bundle_into(b, factor, p, rng, up_to);
    return b;
}

}  // namespace rvol
