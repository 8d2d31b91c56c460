#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rvol/bsde.hpp"
#include "rvol/grid.hpp"
#include "rvol/model.hpp"

namespace rvol {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat key = value configuration ('#' starts a comment). Unknown keys are
// rejected so typos cannot silently fall back to defaults.
struct ExperimentConfig {
    // model
    double H = 0.07;
    double eta = 1.9;
    double rho = -0.9;
    double xi = 0.09;
    double r = 0.05;
    double s0 = 100.0;
    double T = 1.0;
    int N = 20;

    // scheme selection
    std::string scheme = "european";  // european | american-penalty | american-reflect
    double penalty = 10000.0;
    std::vector<double> strikes = {90.0, 100.0, 110.0, 120.0};

    // training
    int J = 10000;
    double lr = 5e-3;
    int max_iters = 3000;
    int min_iters = 100;
    int check_interval = 50;
    double rel_tol = 1e-3;
    int runs = 20;
    uint64_t seed = 823969;
    bool fixed_sample = false;
    bool calibrate_output = true;
    int threads = 0;
    int quad_nodes = 240;
    bool record_loss = false;

    // reference command
    std::string method = "mc";  // mc | crr | bs
    int mc_samples = 100000;
    int crr_steps = 2000;
    double sigma = -1.0;  // <0 means sqrt(xi)

    // convergence command
    std::vector<int> step_counts = {5, 10, 20};

    // path-study command
    double eval_time = 0.5;
    int eval_samples = 10000;
    std::optional<double> pin_variance;
    std::string checkpoint;
    bool retrain = true;

    // validate command toggles
    bool check_covariance = true;
    bool check_gradients = true;
    bool check_martingale = true;
    bool check_determinism = true;

    std::optional<std::string> out_dir;

    [[nodiscard]] double effective_sigma() const { return sigma > 0.0 ? sigma : std::sqrt(xi); }

    [[nodiscard]] std::string effective_out_dir() const {
        if (out_dir) return *out_dir;
        if (const char* env = std::getenv("RVOL_OUT_DIR"); env && *env) return env;
        return ".";
    }

    [[nodiscard]] ModelParams model() const { return {H, eta, rho, xi, r, s0}; }
    [[nodiscard]] GridSpec grid() const { return {T, N}; }
    [[nodiscard]] SchemeConfig scheme_config() const {
        SchemeConfig c;
        c.J = J;
        c.lr = lr;
        c.max_iters = max_iters;
        c.min_iters = min_iters;
        c.check_interval = check_interval;
        c.rel_tol = rel_tol;
        c.runs = runs;
        c.seed = seed;
        c.fixed_sample = fixed_sample;
        c.calibrate_output = calibrate_output;
        c.threads = threads;
        c.quad_nodes = quad_nodes;
        c.record_loss = record_loss;
        return c;
    }
    [[nodiscard]] DriverSpec driver() const {
        if (scheme == "european") return {SchemeKind::European, 0.0};
        if (scheme == "american-penalty") return {SchemeKind::AmericanPenalty, penalty};
        if (scheme == "american-reflect") return {SchemeKind::AmericanReflect, 0.0};
        throw ConfigError("unknown scheme: " + scheme);
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse number from '" + v + "'");
    }
}

inline int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return static_cast<int>(d);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse integer from '" + v + "'");
    }
}

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long d = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse unsigned integer from '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': cannot parse boolean from '" + v + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F item) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) throw ConfigError("config key '" + key + "': empty list element");
        out.push_back(item(key, tok));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

}  // namespace detail

inline void apply_config_entry(ExperimentConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "H") c.H = parse_double(key, value);
    else if (key == "eta") c.eta = parse_double(key, value);
    else if (key == "rho") c.rho = parse_double(key, value);
    else if (key == "xi") c.xi = parse_double(key, value);
    else if (key == "r") c.r = parse_double(key, value);
    else if (key == "s0") c.s0 = parse_double(key, value);
    else if (key == "T") c.T = parse_double(key, value);
    else if (key == "N") c.N = parse_int(key, value);
    else if (key == "scheme") c.scheme = value;
    else if (key == "penalty") c.penalty = parse_double(key, value);
    else if (key == "strikes") c.strikes = parse_list<double>(key, value, parse_double);
    else if (key == "J") c.J = parse_int(key, value);
    else if (key == "lr") c.lr = parse_double(key, value);
    else if (key == "max_iters") c.max_iters = parse_int(key, value);
    else if (key == "min_iters") c.min_iters = parse_int(key, value);
    else if (key == "check_interval") c.check_interval = parse_int(key, value);
    else if (key == "rel_tol") c.rel_tol = parse_double(key, value);
    else if (key == "runs") c.runs = parse_int(key, value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else if (key == "fixed_sample") c.fixed_sample = parse_bool(key, value);
    else if (key == "calibrate_output") c.calibrate_output = parse_bool(key, value);
    else if (key == "threads") c.threads = parse_int(key, value);
    else if (key == "quad_nodes") c.quad_nodes = parse_int(key, value);
    else if (key == "record_loss") c.record_loss = parse_bool(key, value);
    else if (key == "method") c.method = value;
    else if (key == "mc_samples") c.mc_samples = parse_int(key, value);
    else if (key == "crr_steps") c.crr_steps = parse_int(key, value);
    else if (key == "sigma") c.sigma = parse_double(key, value);
    else if (key == "step_counts") c.step_counts = parse_list<int>(key, value, parse_int);
    else if (key == "eval_time") c.eval_time = parse_double(key, value);
    else if (key == "eval_samples") c.eval_samples = parse_int(key, value);
    else if (key == "pin_variance") {
        if (value == "none") c.pin_variance.reset();
        else c.pin_variance = parse_double(key, value);
    }
    else if (key == "checkpoint") c.checkpoint = value;
    else if (key == "retrain") c.retrain = parse_bool(key, value);
    else if (key == "check_covariance") c.check_covariance = parse_bool(key, value);
    else if (key == "check_gradients") c.check_gradients = parse_bool(key, value);
    else if (key == "check_martingale") c.check_martingale = parse_bool(key, value);
    else if (key == "check_determinism") c.check_determinism = parse_bool(key, value);
    else if (key == "out_dir") c.out_dir = value;
    else throw ConfigError("unknown config key: " + key);
}

inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        apply_config_entry(c, key, value);
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// Checks that cut across individual fields; field-level parsing already
// rejected malformed scalars.
inline void validate(const ExperimentConfig& c) {
    try {
        validate(c.model());
        (void)c.grid();
        validate(c.scheme_config());
        (void)c.driver();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.strikes.empty()) throw ConfigError("strikes must not be empty");
    for (double k : c.strikes)
        if (!(k > 0.0)) throw ConfigError("strikes must be positive");
    if (c.scheme == "american-penalty" && !(c.penalty > 0.0)) throw ConfigError("penalty must be positive");
    if (c.method != "mc" && c.method != "crr" && c.method != "bs")
        throw ConfigError("method must be one of mc, crr, bs");
    if (c.mc_samples < 2) throw ConfigError("mc_samples must be at least 2");
    if (c.crr_steps < 1) throw ConfigError("crr_steps must be positive");
    for (int n : c.step_counts)
        if (n < 1) throw ConfigError("step_counts must be positive");
    if (!(c.eval_time >= 0.0) || !(c.eval_time <= c.T)) throw ConfigError("eval_time must lie in [0, T]");
    if (c.eval_samples < 2) throw ConfigError("eval_samples must be at least 2");
    if (c.pin_variance && !(*c.pin_variance > 0.0)) throw ConfigError("pin_variance must be positive");
}

// Canonical text of every effective setting, in fixed order; the report hash
// is computed over this string.
inline std::string canonical_text(const ExperimentConfig& c) {
    std::ostringstream o;
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    o << "H=" << num(c.H) << '\n' << "J=" << c.J << '\n' << "N=" << c.N << '\n' << "T=" << num(c.T) << '\n';
    o << "check_covariance=" << c.check_covariance << '\n';
    o << "check_determinism=" << c.check_determinism << '\n';
    o << "check_gradients=" << c.check_gradients << '\n';
    o << "check_interval=" << c.check_interval << '\n';
    o << "check_martingale=" << c.check_martingale << '\n';
    o << "checkpoint=" << c.checkpoint << '\n';
    o << "calibrate_output=" << c.calibrate_output << '\n';
    o << "crr_steps=" << c.crr_steps << '\n';
    o << "eta=" << num(c.eta) << '\n';
    o << "eval_samples=" << c.eval_samples << '\n';
    o << "eval_time=" << num(c.eval_time) << '\n';
    o << "fixed_sample=" << c.fixed_sample << '\n';
    o << "lr=" << num(c.lr) << '\n';
    o << "max_iters=" << c.max_iters << '\n';
    o << "mc_samples=" << c.mc_samples << '\n';
    o << "method=" << c.method << '\n';
    o << "min_iters=" << c.min_iters << '\n';
    o << "out_dir=" << c.effective_out_dir() << '\n';
    o << "penalty=" << num(c.penalty) << '\n';
    o << "pin_variance=" << (c.pin_variance ? num(*c.pin_variance) : "none") << '\n';
    o << "quad_nodes=" << c.quad_nodes << '\n';
    o << "r=" << num(c.r) << '\n';
    o << "record_loss=" << c.record_loss << '\n';
    o << "rel_tol=" << num(c.rel_tol) << '\n';
    o << "retrain=" << c.retrain << '\n';
    o << "rho=" << num(c.rho) << '\n';
    o << "runs=" << c.runs << '\n';
    o << "s0=" << num(c.s0) << '\n';
    o << "scheme=" << c.scheme << '\n';
    o << "seed=" << c.seed << '\n';
    o << "sigma=" << num(c.sigma) << '\n';
    o << "step_counts=";
    for (std::size_t i = 0; i < c.step_counts.size(); ++i) o << (i ? "," : "") << c.step_counts[i];
    o << '\n';
    o << "strikes=";
    for (std::size_t i = 0; i < c.strikes.size(); ++i) o << (i ? "," : "") << num(c.strikes[i]);
    o << '\n';
    o << "threads=" << c.threads << '\n';
    o << "xi=" << num(c.xi) << '\n';
    return o.str();
}

}  // namespace rvol
