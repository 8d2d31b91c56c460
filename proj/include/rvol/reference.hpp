#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rvol/covariance.hpp"
#include "rvol/forward.hpp"
#include "rvol/grid.hpp"
#include "rvol/model.hpp"
#include "rvol/numerics.hpp"
#include "rvol/paths.hpp"

namespace rvol {

struct McResult {
    double price = 0.0;
    double std_err = 0.0;
    int samples = 0;
};

// Plain Monte Carlo European put on the identical path machinery (exact joint
// Gaussian grid values + left-point Euler log price), so discretization bias
// matches the backward scheme's forward leg. Chunked to bound memory.
inline McResult mc_european_put(const ModelParams& model, const PayoffSpec& payoff, const GridSpec& grid,
                                const CovarianceFactor& factor, int samples, uint64_t seed) {
    validate(model);
    validate(payoff);
    if (samples < 2) throw std::invalid_argument("mc_european_put: need at least 2 samples");
    const double disc = std::exp(-model.r * grid.T);
    const int chunk = std::min(samples, 20000);
    PathBundle b(grid, chunk);
    NormalSampler rng(seed);
    // Welford accumulation over the raw payoffs, discounted once at the end.
    // Keeping the per-sample value free of any multiply matters: fp contraction
    // would otherwise fuse it into the update and a constant payoff would no
    // longer report an exactly zero standard error.
    double mean = 0.0, m2 = 0.0;
    long count = 0;
    int done = 0;
    while (done < samples) {
        const int n = std::min(chunk, samples - done);
        if (n != b.J) b = PathBundle(grid, n);
        simulate_bundle_into(b, factor, model, rng);
        for (int j = 0; j < n; ++j) {
            const double v = payoff_terminal(payoff, model, grid.T, b.x(j, grid.N));
            ++count;
            const double delta = v - mean;
            mean += delta / count;
            m2 += delta * (v - mean);
        }
        done += n;
    }
    McResult res;
    res.samples = samples;
    res.price = disc * mean;
    res.std_err = disc * std::sqrt(m2 / (samples - 1) / samples);
    return res;
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double black_scholes_put(double s0, double strike, double r, double sigma, double T) {
    if (!(s0 > 0.0) || !(strike > 0.0) || !(T > 0.0))
        throw std::invalid_argument("black_scholes_put: s0, strike, T must be positive");
    if (!(sigma > 0.0)) return std::max(strike * std::exp(-r * T) - s0, 0.0);
    const double sq = sigma * std::sqrt(T);
    const double d1 = (std::log(s0 / strike) + (r + 0.5 * sigma * sigma) * T) / sq;
    const double d2 = d1 - sq;
    return strike * std::exp(-r * T) * norm_cdf(-d2) - s0 * norm_cdf(-d1);
}

// Cox-Ross-Rubinstein binomial American put:
//   u = exp(sigma sqrt(dt)), d = 1/u, p = (exp(r dt) - d)/(u - d).
inline double crr_american_put(double s0, double strike, double r, double sigma, double T, int steps = 2000) {
    if (!(s0 > 0.0) || !(strike > 0.0) || !(T > 0.0) || !(sigma > 0.0))
        throw std::invalid_argument("crr_american_put: s0, strike, sigma, T must be positive");
    if (steps < 1) throw std::invalid_argument("crr_american_put: steps must be positive");
    const double dt = T / steps;
    const double u = std::exp(sigma * std::sqrt(dt));
    const double d = 1.0 / u;
    const double p = (std::exp(r * dt) - d) / (u - d);
    if (!(p > 0.0) || !(p < 1.0))
        throw std::invalid_argument("crr_american_put: risk-neutral probability outside (0,1)");
    const double disc = std::exp(-r * dt);
    std::vector<double> value(steps + 1);
    for (int k = 0; k <= steps; ++k) {
        const double s = s0 * std::pow(u, 2.0 * k - steps);
        value[k] = std::max(strike - s, 0.0);
    }
    for (int i = steps - 1; i >= 0; --i) {
        for (int k = 0; k <= i; ++k) {
            const double cont = disc * (p * value[k + 1] + (1.0 - p) * value[k]);
            const double s = s0 * std::pow(u, 2.0 * k - i);
            value[k] = std::max(cont, strike - s);
        }
    }
    return value[0];
}

}  // namespace rvol
