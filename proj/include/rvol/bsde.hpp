#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rvol/covariance.hpp"
#include "rvol/forward.hpp"
#include "rvol/grid.hpp"
#include "rvol/model.hpp"
#include "rvol/nn.hpp"
#include "rvol/paths.hpp"
#include "rvol/rng.hpp"

namespace rvol {

enum class SchemeKind { European, AmericanPenalty, AmericanReflect };

inline const char* scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::European: return "european";
        case SchemeKind::AmericanPenalty: return "american-penalty";
        case SchemeKind::AmericanReflect: return "american-reflect";
    }
    return "?";
}

struct DriverSpec {
    SchemeKind kind = SchemeKind::European;
    double penalty = 0.0;  // intensity of the penalisation term, AmericanPenalty only
};

// Generator of the backward equation. European and reflected schemes carry the
// plain discounting term; the penalty scheme adds penalty * (g_t - y)+ which
// pushes the solution above the exercise value as the intensity grows.
inline double driver_eval(const DriverSpec& d, const ModelParams& p, const PayoffSpec& payoff, double t,
                          double x, double y) {
    double f = -p.r * y;
    if (d.kind == SchemeKind::AmericanPenalty) {
        const double g = payoff_running(payoff, p, t, x);
        if (g > y) f += d.penalty * (g - y);
    }
    return f;
}

// One-step Euler target: H = y - F dt + z db + zt dw. The z network pairs
// with the increment of the price-only Brownian motion B, the zt network with
// the increment of W driving the variance.
inline double step_target(double y, double f, double dt, double z, double db, double zt, double dw) {
    return y - f * dt + z * db + zt * dw;
}

struct SchemeConfig {
    int J = 10000;            // mini-batch trajectories per iteration
    double lr = 5e-3;         // Adam learning rate
    int max_iters = 3000;     // per-step iteration cap
    int min_iters = 100;      // never stop before this many iterations
    int check_interval = 50;  // loss window length for the plateau test
    double rel_tol = 1e-3;    // stop when windowed loss improves less than this (relative)
    int runs = 20;            // independent repetitions
    uint64_t seed = 823969;   // master seed; every stream below derives from it
    bool fixed_sample = false;   // reuse one batch per run instead of fresh draws
    bool calibrate_output = true;  // start the output layers at the first batch's target mean/spread
    int threads = 0;             // 0 = hardware concurrency
    int quad_nodes = 240;        // covariance quadrature
    bool retain_networks = false;
    bool record_loss = false;
};

inline void validate(const SchemeConfig& c) {
    if (c.J < 2) throw std::invalid_argument("SchemeConfig: J must be at least 2");
    if (!(c.lr > 0.0)) throw std::invalid_argument("SchemeConfig: lr must be positive");
    if (c.check_interval < 1) throw std::invalid_argument("SchemeConfig: check_interval must be positive");
    if (c.min_iters < 1 || c.max_iters < c.min_iters)
        throw std::invalid_argument("SchemeConfig: need max_iters >= min_iters >= 1");
    if (!(c.rel_tol >= 0.0)) throw std::invalid_argument("SchemeConfig: rel_tol must be nonnegative");
    if (c.runs < 1) throw std::invalid_argument("SchemeConfig: runs must be positive");
    if (c.threads < 0) throw std::invalid_argument("SchemeConfig: threads must be nonnegative");
    if (c.quad_nodes < 200)
        throw std::invalid_argument("SchemeConfig: quad_nodes must be at least 200 for the singular kernel");
}

struct TrainingDivergence : std::runtime_error {
    int step;
    int iter;
    TrainingDivergence(int s, int it)
        : std::runtime_error("training loss diverged at step " + std::to_string(s) + ", iteration " +
                             std::to_string(it)),
          step(s),
          iter(it) {}
};

struct TrainStats {
    int iters = 0;
    double final_loss = 0.0;
    std::vector<std::pair<int, double>> trace;  // (iteration, windowed loss), if recorded
};

struct RunResult {
    double price = 0.0;
    std::vector<TrainStats> steps;      // indexed by step, 0..N-1
    std::vector<StepNetworks> nets;     // only if retain_networks
};

struct SolveResult {
    std::vector<RunResult> runs;

    [[nodiscard]] std::vector<double> prices() const {
        std::vector<double> p;
        p.reserve(runs.size());
        for (const auto& r : runs) p.push_back(r.price);
        return p;
    }
    [[nodiscard]] double mean() const { return mean_stddev(prices()).first; }
    // relative standard deviation across runs: sample std / mean
    [[nodiscard]] double rsd() const {
        auto [m, s] = mean_stddev(prices());
        return m == 0.0 ? 0.0 : s / std::abs(m);
    }
};

namespace detail {

// Affine recalibration of a network's output layer over a batch: scale the
// output weights so the response spread matches target_std (pass a
// nonpositive value, or feed a spread-free batch such as step 0's constant
// input, to skip the scaling), then shift the output bias so the batch mean
// of the full response equals target_mean. Freshly initialized output layers
// have spread O(1) while backward targets carry the payoff scale; Adam at a
// fixed learning rate needs thousands of iterations to grow across that gap,
// and during the growth the batch mean of the prediction drifts far from the
// target mean, which the backward recursion then propagates into the price.
// Starting at the right scale and mean removes that transient. The shift
// acts on the whole response, not just the bias term: after scaling, the
// hidden layer contributes a batch mean of its own that a bare bias reset
// would leave in place.
inline void calibrate_output(NetworkParams& net, const double* X, int J, double* out, double* hidden,
                             double target_mean, double target_std) {
    forward_batch(net, X, J, out, hidden);
    double mean = 0.0;
    for (int j = 0; j < J; ++j) mean += out[j];
    mean /= J;
    if (target_std > 0.0) {
        double var = 0.0;
        for (int j = 0; j < J; ++j) var += (out[j] - mean) * (out[j] - mean);
        const double s0 = std::sqrt(var / J);
        if (s0 > 1e-9) {
            const double f = target_std / s0;
            double* w2 = net.w2();
            for (int k = 0; k < net.m; ++k) w2[k] *= f;
            mean = net.b2() + f * (mean - net.b2());
        }
    }
    net.b2() += target_mean - mean;
}

// Fixed affine normalization of the raw network inputs (x, W_{t_1..t_i},
// What_{t_1..t_i}). Scales are deterministic functions of grid and model
// (sqrt(xi t), sqrt(t), t^H), so this is a reparametrization the first affine
// layer absorbs; it keeps Glorot-initialized sigmoids in their active range.
struct FeatureScaler {
    double x0 = 0.0;
    std::vector<double> inv_x, inv_w, inv_h;  // indexed by grid point 1..N (entry 0 unused)

    FeatureScaler() = default;
    FeatureScaler(const ModelParams& p, const GridSpec& g) {
        x0 = p.x0();
        inv_x.assign(g.N + 1, 1.0);
        inv_w.assign(g.N + 1, 1.0);
        inv_h.assign(g.N + 1, 1.0);
        for (int i = 1; i <= g.N; ++i) {
            const double t = g.t(i);
            inv_x[i] = 1.0 / std::max(std::sqrt(p.xi * t), 1e-6);
            inv_w[i] = 1.0 / std::sqrt(t);
            inv_h[i] = 1.0 / std::pow(t, p.H);
        }
    }

    [[nodiscard]] static int dim(int step) { return 1 + 2 * step; }

    // F: [J][1+2*step] row-major
    void assemble(const PathBundle& b, int step, double* F) const {
        const int d = dim(step);
        const int N = b.grid.N;
        const double ix = step >= 1 ? inv_x[step] : 1.0;
        for (int j = 0; j < b.J; ++j) {
            double* f = F + static_cast<std::size_t>(j) * d;
            f[0] = (b.x(j, step) - x0) * ix;
            const double* wr = b.W.data() + static_cast<std::size_t>(j) * N;
            const double* hr = b.What.data() + static_cast<std::size_t>(j) * N;
            for (int k = 1; k <= step; ++k) {
                f[k] = wr[k - 1] * inv_w[k];
                f[step + k] = hr[k - 1] * inv_h[k];
            }
        }
    }
};

// One independent repetition of the backward induction.
class BackwardRun {
  public:
    BackwardRun(const ModelParams& model, const PayoffSpec& payoff, const GridSpec& grid,
                const CovarianceFactor& factor, const DriverSpec& driver, const SchemeConfig& cfg,
                uint64_t run_seed)
        : model_(model),
          payoff_(payoff),
          grid_(grid),
          factor_(factor),
          driver_(driver),
          cfg_(cfg),
          seed_(run_seed),
          scaler_(model, grid),
          bundle_(grid, cfg.J) {
        const int N = grid_.N;
        const std::size_t J = cfg_.J;
        feat_.resize(J * FeatureScaler::dim(N));
        feat_next_.resize(J * FeatureScaler::dim(N));
        hid_u_.resize(J * N);
        hid_z_.resize(J * N);
        hid_zt_.resize(J * N);
        hid_t_.resize(J * (N + 1));
        out_u_.resize(J);
        out_z_.resize(J);
        out_zt_.resize(J);
        targets_.resize(J);
        og_u_.resize(J);
        og_z_.resize(J);
        og_zt_.resize(J);
    }

    RunResult run() {
        const int N = grid_.N;
        nets_.clear();
        nets_.resize(N);
        RunResult res;
        res.steps.resize(N);
        if (cfg_.fixed_sample) {
            NormalSampler rng(derive_stream(seed_, kTagPaths, 0));
            simulate_bundle_into(bundle_, factor_, model_, rng, N);
        }
        for (int i = N - 1; i >= 0; --i) {
            nets_[i] = make_step_networks(i, derive_stream(seed_, kTagInit, i));
            res.steps[i] = train_step(i);
        }
        // value at the origin; the only input of the step-0 nets is x = x0,
        // which normalizes to zero.
        const double f0 = 0.0;
        double price = forward_one(nets_[0].u, &f0);
        if (driver_.kind == SchemeKind::AmericanReflect)
            price = std::max(price, payoff_running(payoff_, model_, 0.0, model_.x0()));
        res.price = price;
        if (cfg_.retain_networks) res.nets = std::move(nets_);
        nets_.clear();
        return res;
    }

  private:
    static constexpr uint64_t kTagPaths = 0x70;
    static constexpr uint64_t kTagInit = 0x6e;

    void compute_targets(int i) {
        const int N = grid_.N;
        const int J = cfg_.J;
        if (i + 1 == N) {
            for (int j = 0; j < J; ++j) targets_[j] = payoff_terminal(payoff_, model_, grid_.T, bundle_.x(j, N));
            return;
        }
        scaler_.assemble(bundle_, i + 1, feat_next_.data());
        forward_batch(nets_[i + 1].u, feat_next_.data(), J, targets_.data(), hid_t_.data());
        if (driver_.kind == SchemeKind::AmericanReflect) {
            const double tn = grid_.t(i + 1);
            for (int j = 0; j < J; ++j) {
                const double g = payoff_running(payoff_, model_, tn, bundle_.x(j, i + 1));
                if (g > targets_[j]) targets_[j] = g;
            }
        }
    }

    TrainStats train_step(int i) {
        const int J = cfg_.J;
        const double dt = grid_.dt();
        const double ti = grid_.t(i);
        StepNetworks& nets = nets_[i];
        AdamState st_u(nets.u.n_params()), st_z(nets.z.n_params()), st_zt(nets.zt.n_params());
        NormalSampler rng(derive_stream(seed_, kTagPaths, 1 + i));
        TrainStats stats;
        double window_sum = 0.0;
        int window_n = 0;
        double prev_window = -1.0;
        const bool fresh = !cfg_.fixed_sample;

        for (int iter = 1; iter <= cfg_.max_iters; ++iter) {
            if (fresh) {
                simulate_bundle_into(bundle_, factor_, model_, rng, i + 1);
                compute_targets(i);
                scaler_.assemble(bundle_, i, feat_.data());
            } else if (iter == 1) {
                compute_targets(i);
                scaler_.assemble(bundle_, i, feat_.data());
            }
            if (iter == 1 && cfg_.calibrate_output) {
                double tm = 0.0;
                for (int j = 0; j < J; ++j) tm += targets_[j];
                tm /= J;
                double tv = 0.0, cb = 0.0, cw = 0.0;
                for (int j = 0; j < J; ++j) {
                    const double c = targets_[j] - tm;
                    tv += c * c;
                    cb += c * bundle_.db(j, i);
                    cw += c * bundle_.dw(j, i);
                }
                calibrate_output(nets.u, feat_.data(), J, out_u_.data(), hid_u_.data(), tm,
                                 std::sqrt(tv / J));
                // Start the coefficient networks at the batch regression
                // level, the increment loadings Cov(target, dB)/dt and
                // Cov(target, dW)/dt; their state dependence then grows from
                // the usual small random init. A wrong coefficient level
                // cannot bias the value net (the increments are independent
                // of every step-i input), it only slows the residual-variance
                // decay, so the plain covariance estimate is a safe start.
                calibrate_output(nets.z, feat_.data(), J, out_z_.data(), hid_z_.data(), cb / (J * dt), -1.0);
                calibrate_output(nets.zt, feat_.data(), J, out_zt_.data(), hid_zt_.data(), cw / (J * dt),
                                 -1.0);
            }

            forward_batch(nets.u, feat_.data(), J, out_u_.data(), hid_u_.data());
            forward_batch(nets.z, feat_.data(), J, out_z_.data(), hid_z_.data());
            forward_batch(nets.zt, feat_.data(), J, out_zt_.data(), hid_zt_.data());

            double loss = 0.0;
            const double pen = driver_.penalty;
            const bool penalized = driver_.kind == SchemeKind::AmericanPenalty;
            for (int j = 0; j < J; ++j) {
                const double y = out_u_[j];
                const double x = bundle_.x(j, i);
                const double db = bundle_.db(j, i);
                const double dw = bundle_.dw(j, i);
                double f = -model_.r * y;
                double dh_dy = 1.0 + model_.r * dt;
                if (penalized) {
                    const double g = payoff_running(payoff_, model_, ti, x);
                    if (g > y) {
                        f += pen * (g - y);
                        dh_dy += pen * dt;
                    }
                }
                const double h = step_target(y, f, dt, out_z_[j], db, out_zt_[j], dw);
                const double resid = targets_[j] - h;
                loss += resid * resid;
                og_u_[j] = -2.0 * resid * dh_dy;
                og_z_[j] = -2.0 * resid * db;
                og_zt_[j] = -2.0 * resid * dw;
            }
            loss /= J;
            if (!std::isfinite(loss)) throw TrainingDivergence(i, iter);

            backward_batch(nets.u, feat_.data(), J, hid_u_.data(), og_u_.data(), grads_);
            adam_step(nets.u, grads_, st_u, cfg_.lr);
            backward_batch(nets.z, feat_.data(), J, hid_z_.data(), og_z_.data(), grads_);
            adam_step(nets.z, grads_, st_z, cfg_.lr);
            backward_batch(nets.zt, feat_.data(), J, hid_zt_.data(), og_zt_.data(), grads_);
            adam_step(nets.zt, grads_, st_zt, cfg_.lr);

            window_sum += loss;
            ++window_n;
            stats.iters = iter;
            if (window_n == cfg_.check_interval) {
                const double cur = window_sum / window_n;
                window_sum = 0.0;
                window_n = 0;
                if (cfg_.record_loss) stats.trace.emplace_back(iter, cur);
                stats.final_loss = cur;
                if (prev_window >= 0.0 && iter >= cfg_.min_iters && prev_window - cur < cfg_.rel_tol * prev_window)
                    break;
                prev_window = cur;
            }
        }
        if (window_n > 0) stats.final_loss = window_sum / window_n;
        return stats;
    }

    const ModelParams& model_;
    const PayoffSpec& payoff_;
    const GridSpec& grid_;
    const CovarianceFactor& factor_;
    const DriverSpec& driver_;
    const SchemeConfig& cfg_;
    uint64_t seed_;
    FeatureScaler scaler_;
    PathBundle bundle_;
    std::vector<StepNetworks> nets_;
    std::vector<double> feat_, feat_next_, hid_u_, hid_z_, hid_zt_, hid_t_;
    std::vector<double> out_u_, out_z_, out_zt_, targets_, og_u_, og_z_, og_zt_, grads_;
};

}  // namespace detail

using ProgressFn = std::function<void(int run_index, double price)>;

// Backward induction over the grid, repeated cfg.runs times with independent
// derived seeds. Runs execute on a small thread pool; results depend only on
// the per-run seeds, never on scheduling.
inline SolveResult solve_scheme(const DriverSpec& driver, const ModelParams& model, const PayoffSpec& payoff,
                                const GridSpec& grid, const SchemeConfig& cfg, const ProgressFn& progress = {}) {
    validate(model);
    validate(payoff);
    validate(cfg);
    if (driver.kind == SchemeKind::AmericanPenalty && !(driver.penalty > 0.0))
        throw std::invalid_argument("solve_scheme: penalty intensity must be positive");

    const Matrix cov = build_covariance(grid, model.H, cfg.quad_nodes);
    const CovarianceFactor factor = factorize(cov);

    SolveResult res;
    res.runs.resize(cfg.runs);
    int nthreads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
    nthreads = std::max(1, std::min(nthreads, cfg.runs));

    std::atomic<int> next{0};
    std::mutex mu;
    std::exception_ptr err;
    auto worker = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= cfg.runs) break;
            try {
                detail::BackwardRun br(model, payoff, grid, factor, driver, cfg,
                                       derive_stream(cfg.seed, 0x52, r));
                RunResult rr = br.run();
                const double price = rr.price;
                res.runs[r] = std::move(rr);
                if (progress) {
                    std::lock_guard<std::mutex> lock(mu);
                    progress(r, price);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!err) err = std::current_exception();
                break;
            }
        }
    };
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (int k = 0; k < nthreads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);
    return res;
}

inline SolveResult solve_european(const ModelParams& model, const PayoffSpec& payoff, const GridSpec& grid,
                                  const SchemeConfig& cfg, const ProgressFn& progress = {}) {
    return solve_scheme({SchemeKind::European, 0.0}, model, payoff, grid, cfg, progress);
}

inline SolveResult solve_american_penalty(const ModelParams& model, const PayoffSpec& payoff,
                                          const GridSpec& grid, double penalty, const SchemeConfig& cfg,
                                          const ProgressFn& progress = {}) {
    return solve_scheme({SchemeKind::AmericanPenalty, penalty}, model, payoff, grid, cfg, progress);
}

inline SolveResult solve_american_reflect(const ModelParams& model, const PayoffSpec& payoff,
                                          const GridSpec& grid, const SchemeConfig& cfg,
                                          const ProgressFn& progress = {}) {
    return solve_scheme({SchemeKind::AmericanReflect, 0.0}, model, payoff, grid, cfg, progress);
}

// European solves across a ladder of grid resolutions (same horizon).
inline std::vector<std::pair<int, SolveResult>> convergence_study(const ModelParams& model,
                                                                  const PayoffSpec& payoff, double T,
                                                                  const std::vector<int>& step_counts,
                                                                  const SchemeConfig& cfg,
                                                                  const ProgressFn& progress = {}) {
    std::vector<std::pair<int, SolveResult>> out;
    out.reserve(step_counts.size());
    for (int n : step_counts) {
        GridSpec grid(T, n);
        out.emplace_back(n, solve_european(model, payoff, grid, cfg, progress));
    }
    return out;
}

}  // namespace rvol
