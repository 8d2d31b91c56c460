#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rvol/numerics.hpp"
#include "rvol/rng.hpp"

namespace rvol {

// One-hidden-layer perceptron, sigmoid activation, scalar affine output.
// Flat parameter storage [W1 (m x d, row-major) | b1 (m) | w2 (m) | b2],
// so finite-difference checks and Adam can treat p as a single vector.
struct NetworkParams {
    int d_in = 0;
    int m = 0;
    std::vector<double> p;

    NetworkParams() = default;
    NetworkParams(int d, int hidden) : d_in(d), m(hidden), p(n_params(d, hidden), 0.0) {
        if (d < 1 || hidden < 1) throw std::invalid_argument("NetworkParams: dimensions must be positive");
    }

    static int n_params(int d, int m) { return m * d + m + m + 1; }
    [[nodiscard]] int n_params() const { return n_params(d_in, m); }

    double* w1() { return p.data(); }
    [[nodiscard]] const double* w1() const { return p.data(); }
    double* b1() { return p.data() + m * d_in; }
    [[nodiscard]] const double* b1() const { return p.data() + m * d_in; }
    double* w2() { return p.data() + m * d_in + m; }
    [[nodiscard]] const double* w2() const { return p.data() + m * d_in + m; }
    double& b2() { return p[m * d_in + 2 * m]; }
    [[nodiscard]] double b2() const { return p[m * d_in + 2 * m]; }
};

// Glorot-uniform weights, zero biases.
inline NetworkParams init_network(int d_in, int m, uint64_t seed) {
    NetworkParams net(d_in, m);
    Xoshiro256pp gen(seed);
    const double lim1 = std::sqrt(6.0 / (d_in + m));
    const double lim2 = std::sqrt(6.0 / (m + 1));
    double* w1 = net.w1();
    for (int i = 0; i < m * d_in; ++i) w1[i] = lim1 * (2.0 * gen.uniform01() - 1.0);
    double* w2 = net.w2();
    for (int k = 0; k < m; ++k) w2[k] = lim2 * (2.0 * gen.uniform01() - 1.0);
    return net;
}

// Batch forward pass. X is [J][d_in] row-major; writes out[J] and the
// post-sigmoid hidden activations hidden[J][m] (needed by backward_batch).
inline void forward_batch(const NetworkParams& net, const double* X, int J, double* out, double* hidden) {
    const int d = net.d_in, m = net.m;
    const double* w1 = net.w1();
    const double* b1 = net.b1();
    const double* w2 = net.w2();
    const double b2 = net.b2();
    // Three flat passes instead of one fused loop: pre-activations as
    // accumulate-along-m with transposed weights (contiguous stores, no
    // horizontal sums), then one branch-free 8-wide sigmoid sweep, then the
    // output reduction. Fused into one loop all of it runs scalar and the
    // sigmoid's divisions dominate the whole forward.
    std::vector<double> w1t(static_cast<std::size_t>(d) * m);
    for (int k = 0; k < m; ++k)
        for (int c = 0; c < d; ++c)
            w1t[static_cast<std::size_t>(c) * m + k] = w1[static_cast<std::size_t>(k) * d + c];
    for (int j = 0; j < J; ++j) {
        const double* x = X + static_cast<std::size_t>(j) * d;
        double* h = hidden + static_cast<std::size_t>(j) * m;
        for (int k = 0; k < m; ++k) h[k] = b1[k];
        for (int c = 0; c < d; ++c) {
            const double xc = x[c];
            const double* wrow = w1t.data() + static_cast<std::size_t>(c) * m;
            for (int k = 0; k < m; ++k) h[k] += xc * wrow[k];
        }
    }
    sigmoid_inplace(hidden, static_cast<std::size_t>(J) * m);
    for (int j = 0; j < J; ++j) {
        const double* h = hidden + static_cast<std::size_t>(j) * m;
        double acc = b2;
        for (int k = 0; k < m; ++k) acc += w2[k] * h[k];
        out[j] = acc;
    }
}

inline double forward_one(const NetworkParams& net, const double* x) {
    std::vector<double> h(net.m);
    double out = 0.0;
    forward_batch(net, x, 1, &out, h.data());
    return out;
}

// Gradient of (1/J) sum_j outgrad[j] * f(x_j) with respect to every
// parameter, reusing the hidden activations cached by forward_batch.
// Layout of `grads` matches NetworkParams::p.
inline void backward_batch(const NetworkParams& net, const double* X, int J, const double* hidden,
                           const double* outgrad, std::vector<double>& grads) {
    const int d = net.d_in, m = net.m;
    grads.assign(net.n_params(), 0.0);
    double* gw1 = grads.data();
    double* gb1 = grads.data() + m * d;
    double* gw2 = grads.data() + m * d + m;
    double& gb2 = grads[m * d + 2 * m];
    const double* w2 = net.w2();
    for (int j = 0; j < J; ++j) {
        const double og = outgrad[j];
        const double* x = X + static_cast<std::size_t>(j) * d;
        const double* h = hidden + static_cast<std::size_t>(j) * m;
        gb2 += og;
        for (int k = 0; k < m; ++k) {
            const double hk = h[k];
            gw2[k] += og * hk;
            const double s = og * w2[k] * hk * (1.0 - hk);
            gb1[k] += s;
            double* grow = gw1 + static_cast<std::size_t>(k) * d;
            for (int c = 0; c < d; ++c) grow[c] += s * x[c];
        }
    }
    const double inv = 1.0 / J;
    for (double& g : grads) g *= inv;
}

struct AdamState {
    std::vector<double> m, v;
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(int n_params) : m(n_params, 0.0), v(n_params, 0.0) {}
};

inline void adam_step(NetworkParams& net, const std::vector<double>& grads, AdamState& st, double lr) {
    if (static_cast<int>(grads.size()) != net.n_params() || grads.size() != st.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    ++st.t;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const double g = grads[i];
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        const double mhat = st.m[i] / c1;
        const double vhat = st.v[i] / c2;
        net.p[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

// The triple trained at one backward step: value and the two martingale
// coefficient networks. Step i sees 1+2i inputs; hidden width i+1 keeps the
// layer at roughly half of (inputs + outputs).
struct StepNetworks {
    int step = 0;
    NetworkParams u, z, zt;
};

inline StepNetworks make_step_networks(int step, uint64_t seed) {
    if (step < 0) throw std::invalid_argument("make_step_networks: step must be nonnegative");
    const int d = 1 + 2 * step;
    const int m = step + 1;
    StepNetworks s;
    s.step = step;
    s.u = init_network(d, m, derive_stream(seed, 0x75, step));
    s.z = init_network(d, m, derive_stream(seed, 0x7a, step));
    s.zt = init_network(d, m, derive_stream(seed, 0x74, step));
    return s;
}

// Checkpoint format: one CSV per solve. Lines are either
//   dims,<step>,<net>,<d_in>,<m>        (net in {u,z,zt})
// or
//   param,<step>,<net>,<index>,<value>  (index into the flat layout)
inline void save_networks(const std::string& path, const std::vector<StepNetworks>& nets) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_networks: cannot open " + path);
    out.precision(17);
    for (const auto& s : nets) {
        const NetworkParams* ps[3] = {&s.u, &s.z, &s.zt};
        const char* names[3] = {"u", "z", "zt"};
        for (int n = 0; n < 3; ++n) {
            out << "dims," << s.step << ',' << names[n] << ',' << ps[n]->d_in << ',' << ps[n]->m << '\n';
            for (int i = 0; i < ps[n]->n_params(); ++i)
                out << "param," << s.step << ',' << names[n] << ',' << i << ',' << ps[n]->p[i] << '\n';
        }
    }
    if (!out) throw std::runtime_error("save_networks: write failed for " + path);
}

inline std::vector<StepNetworks> load_networks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_networks: cannot open " + path);
    std::vector<StepNetworks> nets;
    auto net_of = [&](int step, const std::string& name) -> NetworkParams& {
        while (static_cast<int>(nets.size()) <= step) {
            StepNetworks s;
            s.step = static_cast<int>(nets.size());
            nets.push_back(std::move(s));
        }
        if (name == "u") return nets[step].u;
        if (name == "z") return nets[step].z;
        if (name == "zt") return nets[step].zt;
        throw std::runtime_error("load_networks: unknown network tag " + name);
    };
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string kind, step_s, name, a, b;
        if (!std::getline(ss, kind, ',') || !std::getline(ss, step_s, ',') || !std::getline(ss, name, ',') ||
            !std::getline(ss, a, ',') || !std::getline(ss, b, ','))
            throw std::runtime_error("load_networks: malformed line: " + line);
        const int step = std::stoi(step_s);
        NetworkParams& net = net_of(step, name);
        if (kind == "dims") {
            net = NetworkParams(std::stoi(a), std::stoi(b));
        } else if (kind == "param") {
            const int idx = std::stoi(a);
            if (idx < 0 || idx >= net.n_params())
                throw std::runtime_error("load_networks: parameter index out of range");
            net.p[idx] = std::stod(b);
        } else {
            throw std::runtime_error("load_networks: unknown record kind " + kind);
        }
    }
    return nets;
}

}  // namespace rvol
