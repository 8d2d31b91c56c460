#pragma once

#include <cmath>
#include <stdexcept>

namespace rvol {

// Rough Bergomi dynamics under the pricing measure:
//   V_t = xi * exp(eta * What_t - eta^2/2 * t^{2H}),   What = Riemann-Liouville fBm,
//   X_t = log S_t - r t,  dX = sqrt(V) (rho dW + sqrt(1-rho^2) dB) - V/2 dt.
struct ModelParams {
    double H = 0.07;
    double eta = 1.9;
    double rho = -0.9;
    double xi = 0.09;
    double r = 0.05;
    double s0 = 100.0;

    [[nodiscard]] double x0() const { return std::log(s0); }
};

inline void validate(const ModelParams& p) {
    if (!(p.H > 0.0) || !(p.H <= 0.5)) throw std::invalid_argument("ModelParams: H must lie in (0, 1/2]");
    if (!(p.eta >= 0.0)) throw std::invalid_argument("ModelParams: eta must be nonnegative");
    if (!(std::abs(p.rho) <= 1.0)) throw std::invalid_argument("ModelParams: |rho| must be at most 1");
    if (!(p.xi >= 0.0)) throw std::invalid_argument("ModelParams: xi must be nonnegative");
    if (!std::isfinite(p.r)) throw std::invalid_argument("ModelParams: r must be finite");
    if (!(p.s0 > 0.0)) throw std::invalid_argument("ModelParams: s0 must be positive");
}

// Rough Heston variance: dV = lam (theta - V) dt_alpha-convolved ... concretely
//   V_t = v0 + int_0^t K(t-s) [lam (theta - V_s) ds + zeta sqrt(V_s) dW_s],
//   K(u) = u^{alpha-1} / Gamma(alpha), alpha in (1/2, 1).
struct RoughHestonParams {
    double v0 = 0.04;
    double lam = 0.3;
    double theta = 0.04;
    double zeta = 0.3;
    double alpha = 0.6;
};

inline void validate(const RoughHestonParams& p) {
    if (!(p.v0 >= 0.0)) throw std::invalid_argument("RoughHestonParams: v0 must be nonnegative");
    if (!(p.lam >= 0.0)) throw std::invalid_argument("RoughHestonParams: lam must be nonnegative");
    if (!(p.theta >= 0.0)) throw std::invalid_argument("RoughHestonParams: theta must be nonnegative");
    if (!(p.zeta >= 0.0)) throw std::invalid_argument("RoughHestonParams: zeta must be nonnegative");
    if (!(p.alpha > 0.5) || !(p.alpha < 1.0))
        throw std::invalid_argument("RoughHestonParams: alpha must lie in (1/2, 1)");
}

// Put payoff family: terminal (K - S_T)+ and running (K - S_t)+ in the
// drift-removed log coordinate S_t = exp(x + r t).
struct PayoffSpec {
    double strike = 100.0;
};

inline void validate(const PayoffSpec& p) {
    if (!(p.strike > 0.0)) throw std::invalid_argument("PayoffSpec: strike must be positive");
}

}  // namespace rvol
