#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvol {

// Six significant digits everywhere so reports are compact and byte-stable.
inline std::string format_sig6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// FNV-1a over the canonical config text; reports carry it so any row can be
// traced back to the exact configuration that produced it.
inline uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct SummaryRow {
    std::string scheme;
    double strike = 0.0;
    double mean = 0.0;
    double rsd = 0.0;
    int runs = 0;
    uint64_t seed = 0;
    std::string config_hash;
};

struct RunRow {
    int run = 0;
    double strike = 0.0;
    std::string scheme;
    double price = 0.0;
    uint64_t seed = 0;
    std::string config_hash;
};

struct LossRow {
    int step = 0;
    int iteration = 0;
    double loss = 0.0;
    double strike = 0.0;
    int run = 0;
};

inline std::ofstream open_report(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open report file " + path);
    return out;
}

inline void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    auto out = open_report(path);
    out << "scheme,strike,mean,rsd,runs,seed,config_hash\n";
    for (const auto& r : rows)
        out << r.scheme << ',' << format_sig6(r.strike) << ',' << format_sig6(r.mean) << ','
            << format_sig6(r.rsd) << ',' << r.runs << ',' << r.seed << ',' << r.config_hash << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline void write_runs_csv(const std::string& path, const std::vector<RunRow>& rows) {
    auto out = open_report(path);
    out << "run,strike,scheme,price,seed,config_hash\n";
    for (const auto& r : rows)
        out << r.run << ',' << format_sig6(r.strike) << ',' << r.scheme << ',' << format_sig6(r.price) << ','
            << r.seed << ',' << r.config_hash << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows, uint64_t seed,
                           const std::string& config_hash) {
    auto out = open_report(path);
    out << "step,iteration,loss,strike,run,seed,config_hash\n";
    for (const auto& r : rows)
        out << r.step << ',' << r.iteration << ',' << format_sig6(r.loss) << ',' << format_sig6(r.strike)
            << ',' << r.run << ',' << seed << ',' << config_hash << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

// Convergence ladder rows: one per (step count, strike).
struct ConvergenceRow {
    int steps = 0;
    double strike = 0.0;
    double mean = 0.0;
    double rsd = 0.0;
    int runs = 0;
    uint64_t seed = 0;
    std::string config_hash;
};

inline void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRow>& rows) {
    auto out = open_report(path);
    out << "steps,strike,mean,rsd,runs,seed,config_hash\n";
    for (const auto& r : rows)
        out << r.steps << ',' << format_sig6(r.strike) << ',' << format_sig6(r.mean) << ','
            << format_sig6(r.rsd) << ',' << r.runs << ',' << r.seed << ',' << r.config_hash << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace rvol
