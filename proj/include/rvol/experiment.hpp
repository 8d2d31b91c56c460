#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rvol/bsde.hpp"
#include "rvol/config.hpp"
#include "rvol/nn.hpp"
#include "rvol/reference.hpp"
#include "rvol/report.hpp"

namespace rvol {

namespace detail {

inline std::string ensure_out_dir(const ExperimentConfig& cfg) {
    const std::string dir = cfg.effective_out_dir();
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// price: backward deep scheme for each configured strike
// ---------------------------------------------------------------------------

inline void run_price(const ExperimentConfig& cfg, std::ostream& log) {
    validate(cfg);
    const std::string dir = detail::ensure_out_dir(cfg);
    const std::string chash = hash_hex(fnv1a64(canonical_text(cfg)));
    const ModelParams model = cfg.model();
    const GridSpec grid = cfg.grid();
    SchemeConfig scfg = cfg.scheme_config();
    scfg.record_loss = cfg.record_loss;
    const DriverSpec driver = cfg.driver();

    std::vector<SummaryRow> summary;
    std::vector<RunRow> run_rows;
    std::vector<LossRow> loss_rows;
    for (double strike : cfg.strikes) {
        const PayoffSpec payoff{strike};
        log << "[price] " << cfg.scheme << " strike=" << format_sig6(strike) << " runs=" << scfg.runs
            << std::endl;
        const SolveResult res =
            solve_scheme(driver, model, payoff, grid, scfg, [&](int r, double price) {
                log << "[price]   run " << (r + 1) << '/' << scfg.runs << " price=" << format_sig6(price)
                    << std::endl;
            });
        summary.push_back({cfg.scheme, strike, res.mean(), res.rsd(), scfg.runs, scfg.seed, chash});
        for (int r = 0; r < scfg.runs; ++r) {
            run_rows.push_back({r, strike, cfg.scheme, res.runs[r].price, scfg.seed, chash});
            if (cfg.record_loss)
                for (std::size_t s = 0; s < res.runs[r].steps.size(); ++s)
                    for (const auto& [iter, loss] : res.runs[r].steps[s].trace)
                        loss_rows.push_back({static_cast<int>(s), iter, loss, strike, r});
        }
        log << "[price] " << cfg.scheme << " strike=" << format_sig6(strike)
            << " mean=" << format_sig6(res.mean()) << " rsd=" << format_sig6(res.rsd()) << std::endl;
    }
    write_summary_csv(detail::join(dir, "summary.csv"), summary);
    write_runs_csv(detail::join(dir, "runs.csv"), run_rows);
    if (cfg.record_loss) write_loss_csv(detail::join(dir, "losses.csv"), loss_rows, scfg.seed, chash);
    log << "[price] wrote " << detail::join(dir, "summary.csv") << std::endl;
}

// ---------------------------------------------------------------------------
// reference: Monte Carlo on the same path machinery, binomial tree, or the
// closed form, for each configured strike
// ---------------------------------------------------------------------------

inline void run_reference(const ExperimentConfig& cfg, std::ostream& log) {
    validate(cfg);
    const std::string dir = detail::ensure_out_dir(cfg);
    const std::string chash = hash_hex(fnv1a64(canonical_text(cfg)));
    const ModelParams model = cfg.model();
    const GridSpec grid = cfg.grid();

    std::vector<SummaryRow> summary;
    std::vector<RunRow> run_rows;
    if (cfg.method == "mc") {
        const Matrix cov = build_covariance(grid, model.H, cfg.quad_nodes);
        const CovarianceFactor factor = factorize(cov);
        for (double strike : cfg.strikes) {
            const PayoffSpec payoff{strike};
            std::vector<double> prices(cfg.runs);
            for (int r = 0; r < cfg.runs; ++r) {
                const McResult mc = mc_european_put(model, payoff, grid, factor, cfg.mc_samples,
                                                    derive_stream(cfg.seed, 0x6d, r));
                prices[r] = mc.price;
                run_rows.push_back({r, strike, "mc-reference", mc.price, cfg.seed, chash});
            }
            const auto [mean, sd] = mean_stddev(prices);
            const double rsd = mean == 0.0 ? 0.0 : sd / std::abs(mean);
            summary.push_back({"mc-reference", strike, mean, rsd, cfg.runs, cfg.seed, chash});
            log << "[reference] mc strike=" << format_sig6(strike) << " mean=" << format_sig6(mean)
                << " rsd=" << format_sig6(rsd) << std::endl;
        }
    } else {
        const double sigma = cfg.effective_sigma();
        for (double strike : cfg.strikes) {
            const double price = cfg.method == "crr"
                                     ? crr_american_put(model.s0, strike, model.r, sigma, cfg.T, cfg.crr_steps)
                                     : black_scholes_put(model.s0, strike, model.r, sigma, cfg.T);
            summary.push_back({cfg.method, strike, price, 0.0, 1, cfg.seed, chash});
            run_rows.push_back({0, strike, cfg.method, price, cfg.seed, chash});
            log << "[reference] " << cfg.method << " strike=" << format_sig6(strike)
                << " price=" << format_sig6(price) << std::endl;
        }
    }
    write_summary_csv(detail::join(dir, "reference_summary.csv"), summary);
    write_runs_csv(detail::join(dir, "reference_runs.csv"), run_rows);
    log << "[reference] wrote " << detail::join(dir, "reference_summary.csv") << std::endl;
}

// ---------------------------------------------------------------------------
// convergence: European solves across a ladder of grid resolutions
// ---------------------------------------------------------------------------

inline void run_convergence(const ExperimentConfig& cfg, std::ostream& log) {
    validate(cfg);
    const std::string dir = detail::ensure_out_dir(cfg);
    const std::string chash = hash_hex(fnv1a64(canonical_text(cfg)));
    const ModelParams model = cfg.model();
    const SchemeConfig scfg = cfg.scheme_config();

    std::vector<ConvergenceRow> rows;
    std::vector<RunRow> run_rows;
    for (double strike : cfg.strikes) {
        const PayoffSpec payoff{strike};
        for (int n : cfg.step_counts) {
            log << "[convergence] strike=" << format_sig6(strike) << " steps=" << n << std::endl;
            const GridSpec grid(cfg.T, n);
            const SolveResult res = solve_european(model, payoff, grid, scfg);
            rows.push_back({n, strike, res.mean(), res.rsd(), scfg.runs, scfg.seed, chash});
            for (int r = 0; r < scfg.runs; ++r)
                run_rows.push_back({r, strike, "european-n" + std::to_string(n), res.runs[r].price,
                                    scfg.seed, chash});
            log << "[convergence] strike=" << format_sig6(strike) << " steps=" << n
                << " mean=" << format_sig6(res.mean()) << " rsd=" << format_sig6(res.rsd()) << std::endl;
        }
    }
    write_convergence_csv(detail::join(dir, "convergence.csv"), rows);
    write_runs_csv(detail::join(dir, "convergence_runs.csv"), run_rows);
    log << "[convergence] wrote " << detail::join(dir, "convergence.csv") << std::endl;
}

// ---------------------------------------------------------------------------
// path-study: distribution of the learned value at an interior grid time,
// spot pinned to s0, over fresh driving-noise histories
// ---------------------------------------------------------------------------

struct PathStudyResult {
    double mean = 0.0;
    double stddev = 0.0;
    std::optional<double> pinned_mean;
    std::optional<double> pinned_stddev;
    int samples = 0;
    int step = 0;
};

inline PathStudyResult run_path_study(const ExperimentConfig& cfg, std::ostream& log) {
    validate(cfg);
    const std::string dir = detail::ensure_out_dir(cfg);
    const std::string chash = hash_hex(fnv1a64(canonical_text(cfg)));
    const ModelParams model = cfg.model();
    const GridSpec grid = cfg.grid();

    // evaluation time must sit on the grid
    const double k_real = cfg.eval_time / grid.dt();
    const int k = static_cast<int>(std::lround(k_real));
    if (std::abs(k_real - k) > 1e-9 || k < 0 || k > grid.N)
        throw ConfigError("eval_time must be a grid point (multiple of T/N)");

    std::vector<StepNetworks> nets;
    if (!cfg.checkpoint.empty() && !cfg.retrain) {
        log << "[path-study] loading networks from " << cfg.checkpoint << std::endl;
        nets = load_networks(cfg.checkpoint);
        if (static_cast<int>(nets.size()) != grid.N)
            throw ConfigError("checkpoint step count does not match N");
    } else {
        SchemeConfig scfg = cfg.scheme_config();
        scfg.runs = 1;
        scfg.retain_networks = true;
        const PayoffSpec payoff{cfg.strikes.front()};
        log << "[path-study] training " << cfg.scheme << " strike=" << format_sig6(cfg.strikes.front())
            << std::endl;
        SolveResult res = solve_scheme(cfg.driver(), model, payoff, grid, scfg);
        nets = std::move(res.runs[0].nets);
        if (!cfg.checkpoint.empty()) {
            save_networks(cfg.checkpoint, nets);
            log << "[path-study] saved networks to " << cfg.checkpoint << std::endl;
        }
    }

    const PayoffSpec payoff{cfg.strikes.front()};
    const Matrix cov = build_covariance(grid, model.H, cfg.quad_nodes);
    const CovarianceFactor factor = factorize(cov);
    const int n = cfg.eval_samples;
    const detail::FeatureScaler scaler(model, grid);
    const bool reflect = cfg.driver().kind == SchemeKind::AmericanReflect;
    const double tk = grid.t(k);
    const double exercise = payoff_running(payoff, model, tk, model.x0());

    std::vector<double> values(n), pinned;
    PathBundle b = sample_paths(factor, grid, n, derive_stream(cfg.seed, 0x79), std::max(k, 1));
    // bundle X never simulated here: the study pins x to log(s0), i.e. spot
    // s0 e^{r t} at the evaluation time, so the x feature is identically zero.
    const int dk = detail::FeatureScaler::dim(k);
    if (nets[k].u.d_in != dk) throw ConfigError("checkpoint input width does not match the evaluation step");
    std::vector<double> feat(static_cast<std::size_t>(n) * dk);
    std::vector<double> hidden(static_cast<std::size_t>(n) * std::max(1, nets[k].u.m));
    scaler.assemble(b, k, feat.data());
    for (int j = 0; j < n; ++j) feat[static_cast<std::size_t>(j) * dk] = 0.0;
    if (k == 0) {
        const double f0 = 0.0;
        values.assign(n, forward_one(nets[0].u, &f0));
    } else {
        forward_batch(nets[k].u, feat.data(), n, values.data(), hidden.data());
    }
    if (reflect)
        for (double& v : values) v = std::max(v, exercise);

    if (cfg.pin_variance) {
        if (k < 1) throw ConfigError("pin_variance requires an interior evaluation time");
        // V(t_k) = v* fixes the terminal fBm input: What = (log(v*/xi) + eta^2/2 t^{2H})/eta
        if (!(model.eta > 0.0) || !(model.xi > 0.0))
            throw ConfigError("pin_variance requires eta > 0 and xi > 0");
        const double what_pin =
            (std::log(*cfg.pin_variance / model.xi) + 0.5 * model.eta * model.eta * std::pow(tk, 2.0 * model.H)) /
            model.eta;
        const double scaled = what_pin * scaler.inv_h[k];
        for (int j = 0; j < n; ++j) feat[static_cast<std::size_t>(j) * dk + 2 * k] = scaled;
        pinned.resize(n);
        forward_batch(nets[k].u, feat.data(), n, pinned.data(), hidden.data());
        if (reflect)
            for (double& v : pinned) v = std::max(v, exercise);
    }

    PathStudyResult out;
    out.samples = n;
    out.step = k;
    auto [m, s] = mean_stddev(values);
    out.mean = m;
    out.stddev = s;
    if (!pinned.empty()) {
        auto [pm, ps] = mean_stddev(pinned);
        out.pinned_mean = pm;
        out.pinned_stddev = ps;
    }

    {
        auto csv = open_report(detail::join(dir, "path_study_values.csv"));
        csv << (pinned.empty() ? "sample,value,seed,config_hash\n" : "sample,value,value_pinned,seed,config_hash\n");
        for (int j = 0; j < n; ++j) {
            csv << j << ',' << format_sig6(values[j]);
            if (!pinned.empty()) csv << ',' << format_sig6(pinned[j]);
            csv << ',' << cfg.seed << ',' << chash << '\n';
        }
    }
    {
        auto csv = open_report(detail::join(dir, "path_study_summary.csv"));
        csv << "variant,mean,stddev,samples,eval_time,seed,config_hash\n";
        csv << "free," << format_sig6(out.mean) << ',' << format_sig6(out.stddev) << ',' << n << ','
            << format_sig6(tk) << ',' << cfg.seed << ',' << chash << '\n';
        if (out.pinned_mean)
            csv << "pinned," << format_sig6(*out.pinned_mean) << ',' << format_sig6(*out.pinned_stddev) << ','
                << n << ',' << format_sig6(tk) << ',' << cfg.seed << ',' << chash << '\n';
    }
    log << "[path-study] free mean=" << format_sig6(out.mean) << " stddev=" << format_sig6(out.stddev)
        << std::endl;
    if (out.pinned_mean)
        log << "[path-study] pinned mean=" << format_sig6(*out.pinned_mean)
            << " stddev=" << format_sig6(*out.pinned_stddev) << std::endl;
    log << "[path-study] wrote " << detail::join(dir, "path_study_summary.csv") << std::endl;
    return out;
}

// ---------------------------------------------------------------------------
// validate: fast self-checks of the numerical core; returns overall success
// ---------------------------------------------------------------------------

inline bool run_validate(const ExperimentConfig& cfg, std::ostream& log) {
    validate(cfg);
    const ModelParams model = cfg.model();
    bool all_ok = true;
    auto report = [&](const char* name, bool ok, const std::string& detail) {
        log << (ok ? "[ok]   " : "[FAIL] ") << name;
        if (!detail.empty()) log << "  " << detail;
        log << std::endl;
        all_ok = all_ok && ok;
    };

    if (cfg.check_covariance) {
        const GridSpec grid(cfg.T, cfg.N);
        const Matrix cov = build_covariance(grid, model.H, cfg.quad_nodes);
        double ident = 0.0;
        const int N = grid.N;
        for (int i = 0; i < N; ++i) {
            const double t = grid.t(i + 1);
            ident = std::max(ident, std::abs(cov(i, i) - t));
            ident = std::max(ident, std::abs(cov(N + i, N + i) - std::pow(t, 2.0 * model.H)));
            for (int j = 0; j < N; ++j) {
                ident = std::max(ident, std::abs(cov(i, j) - std::min(t, grid.t(j + 1))));
                ident = std::max(ident,
                                 std::abs(cov(i, N + j) - cov_brownian_fractional(t, grid.t(j + 1), model.H)));
                ident = std::max(ident, std::abs(cov(i, j) - cov(j, i)));
                ident = std::max(ident, std::abs(cov(N + i, N + j) - cov(N + j, N + i)));
            }
        }
        const CovarianceFactor f = factorize(cov);
        double recon = 0.0;
        for (int i = 0; i < 2 * N; ++i)
            for (int j = 0; j <= i; ++j) {
                double acc = 0.0;
                for (int c = 0; c <= j; ++c) acc += f.L(i, c) * f.L(j, c);
                recon = std::max(recon, std::abs(acc - cov(i, j)));
            }
        std::ostringstream d;
        d << "identity_err=" << format_sig6(ident) << " recon_err=" << format_sig6(recon)
          << " jitter=" << format_sig6(f.jitter);
        report("covariance identities + factorization", ident < 1e-8 && recon < 1e-10 && f.jitter == 0.0,
               d.str());
    }

    if (cfg.check_gradients) {
        double max_rel = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            const uint64_t s = derive_stream(cfg.seed, 0x67, trial);
            NetworkParams net = init_network(3, 4, s);
            const int J = 7;
            std::vector<double> X(J * 3), og(J), hidden(J * 4), out(J);
            NormalSampler rng(derive_stream(s, 1));
            rng.fill(X.data(), J * 3);
            rng.fill(og.data(), J);
            forward_batch(net, X.data(), J, out.data(), hidden.data());
            std::vector<double> grads;
            backward_batch(net, X.data(), J, hidden.data(), og.data(), grads);
            auto scalar = [&]() {
                forward_batch(net, X.data(), J, out.data(), hidden.data());
                double acc = 0.0;
                for (int j = 0; j < J; ++j) acc += og[j] * out[j];
                return acc / J;
            };
            const double h = 1e-5;
            for (int ip = 0; ip < net.n_params(); ++ip) {
                const double keep = net.p[ip];
                net.p[ip] = keep + h;
                const double up = scalar();
                net.p[ip] = keep - h;
                const double dn = scalar();
                net.p[ip] = keep;
                const double fd = (up - dn) / (2.0 * h);
                const double rel = std::abs(fd - grads[ip]) / std::max(1e-8, std::abs(fd));
                max_rel = std::max(max_rel, rel);
            }
        }
        report("backprop vs central differences", max_rel < 1e-5, "max_rel=" + format_sig6(max_rel));
    }

    if (cfg.check_martingale) {
        const GridSpec grid(cfg.T, cfg.N);
        const Matrix cov = build_covariance(grid, model.H, cfg.quad_nodes);
        const CovarianceFactor f = factorize(cov);
        const int J = 30000;
        const PathBundle b = simulate_bundle(f, model, grid, J, derive_stream(cfg.seed, 0x76));
        bool ok = true;
        std::ostringstream d;
        // Wick exponential has unit mean at every grid time
        for (int i = 1; i <= grid.N && model.xi > 0.0; ++i) {
            double m = 0.0, s2 = 0.0;
            for (int j = 0; j < J; ++j) m += b.v(j, i);
            m /= J;
            for (int j = 0; j < J; ++j) s2 += sqr(b.v(j, i) - m);
            const double se = std::sqrt(s2 / (J - 1) / J);
            if (std::abs(m - model.xi) > 4.0 * se) {
                ok = false;
                d << "V mean off at t=" << format_sig6(grid.t(i)) << " ";
            }
        }
        // exp(X) is an exact discrete martingale
        double m = 0.0, s2 = 0.0;
        for (int j = 0; j < J; ++j) m += std::exp(b.x(j, grid.N));
        m /= J;
        for (int j = 0; j < J; ++j) s2 += sqr(std::exp(b.x(j, grid.N)) - m);
        const double se = std::sqrt(s2 / (J - 1) / J);
        if (std::abs(m - model.s0) > 4.0 * se) {
            ok = false;
            d << "exp(X_T) mean " << format_sig6(m) << " vs " << format_sig6(model.s0);
        }
        report("unit-mean variance + martingale spot", ok, d.str());
    }

    if (cfg.check_determinism) {
        ExperimentConfig tiny = cfg;
        tiny.N = 3;
        tiny.J = 400;
        tiny.runs = 2;
        tiny.max_iters = 60;
        tiny.min_iters = 20;
        tiny.check_interval = 10;
        tiny.strikes = {cfg.strikes.front()};
        auto solve_text = [&](int threads) {
            SchemeConfig sc = tiny.scheme_config();
            sc.threads = threads;
            const GridSpec grid(tiny.T, tiny.N);
            const SolveResult res =
                solve_scheme(tiny.driver(), tiny.model(), PayoffSpec{tiny.strikes.front()}, grid, sc);
            std::ostringstream o;
            o << std::setprecision(17);
            for (const auto& r : res.runs) o << r.price << '\n';
            return o.str();
        };
        const std::string a = solve_text(1);
        const std::string b = solve_text(1);
        const std::string c = solve_text(2);
        report("determinism (repeat + thread count)", a == b && a == c, "");
    }

    return all_ok;
}

}  // namespace rvol
