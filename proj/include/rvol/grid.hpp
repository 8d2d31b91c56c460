#pragma once

#include <cmath>
#include <stdexcept>

namespace rvol {

// Uniform time grid t_i = i*T/N, i = 0..N.
struct GridSpec {
    double T = 1.0;
    int N = 20;

    GridSpec() = default;
    GridSpec(double horizon, int steps) : T(horizon), N(steps) {
        if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("GridSpec: T must be positive");
        if (N < 1) throw std::invalid_argument("GridSpec: N must be at least 1");
    }

    [[nodiscard]] double dt() const { return T / N; }
    [[nodiscard]] double t(int i) const { return T * static_cast<double>(i) / N; }
};

}  // namespace rvol
