#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rvol/config.hpp"
#include "rvol/experiment.hpp"
#include "rvol/reference.hpp"
#include "rvol/report.hpp"

using namespace rvol;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("rvol_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    [[nodiscard]] std::string str(const std::string& name = "") const {
        return name.empty() ? path.string() : (path / name).string();
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

// mean column of the summary row for one scheme + strike
double summary_mean(const std::string& text, const std::string& scheme, const std::string& strike) {
    for (const auto& row : csv_rows(text))
        if (row.size() >= 3 && row[0] == scheme && row[1] == strike) return std::stod(row[2]);
    FAIL("no summary row for " << scheme << " strike " << strike);
    return 0.0;
}

ExperimentConfig tiny_price_config(const std::string& out) {
    ExperimentConfig c;
    c.N = 2;
    c.J = 300;
    c.runs = 2;
    c.max_iters = 40;
    c.min_iters = 20;
    c.check_interval = 10;
    c.strikes = {100.0};
    c.threads = 1;
    c.out_dir = out;
    return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// closed-form and lattice reference prices (frozen against an independent
// high-precision implementation)
// ---------------------------------------------------------------------------

TEST_CASE("Black-Scholes put closed form") {
    CHECK(black_scholes_put(100, 100, 0.05, 0.3, 1.0) == Catch::Approx(9.3541972361).margin(1e-9));
    CHECK(black_scholes_put(100, 90, 0.05, 0.3, 1.0) == Catch::Approx(5.3080902919).margin(1e-9));
    CHECK(black_scholes_put(100, 120, 0.05, 0.3, 1.0) == Catch::Approx(21.0515284910).margin(1e-9));
    // zero volatility degenerates to the discounted forward payoff
    CHECK(black_scholes_put(100, 120, 0.05, 0.0, 1.0) == Catch::Approx(14.1475309401).margin(1e-9));
    CHECK(black_scholes_put(100, 90, 0.05, 0.0, 1.0) == 0.0);
}

TEST_CASE("binomial American put values") {
    // three-step tree, hand-checkable
    CHECK(crr_american_put(100, 100, 0.05, 0.3, 1.0, 3) == Catch::Approx(10.6794897473).margin(1e-9));
    // coarse 20-step tree
    CHECK(crr_american_put(100, 90, 0.05, 0.3, 1.0, 20) == Catch::Approx(5.6168).margin(1e-4));
    CHECK(crr_american_put(100, 100, 0.05, 0.3, 1.0, 20) == Catch::Approx(9.7980).margin(1e-4));
    CHECK(crr_american_put(100, 110, 0.05, 0.3, 1.0, 20) == Catch::Approx(15.6720).margin(1e-4));
    CHECK(crr_american_put(100, 120, 0.05, 0.3, 1.0, 20) == Catch::Approx(22.7501).margin(1e-4));
    // dense tree
    CHECK(crr_american_put(100, 90, 0.05, 0.3, 1.0) == Catch::Approx(5.551720).margin(1e-5));
    CHECK(crr_american_put(100, 100, 0.05, 0.3, 1.0) == Catch::Approx(9.869392).margin(1e-5));
    CHECK(crr_american_put(100, 110, 0.05, 0.3, 1.0) == Catch::Approx(15.617739).margin(1e-5));
    CHECK(crr_american_put(100, 120, 0.05, 0.3, 1.0) == Catch::Approx(22.682083).margin(1e-5));
    // American dominates immediate exercise and the European closed form
    const double am = crr_american_put(100, 110, 0.05, 0.3, 1.0);
    CHECK(am >= 10.0);
    CHECK(am >= black_scholes_put(100, 110, 0.05, 0.3, 1.0));
    // a risk-free rate above the lattice up-move is rejected
    CHECK_THROWS_AS(crr_american_put(100, 100, 10.0, 0.01, 1.0, 4), std::invalid_argument);
}

TEST_CASE("Monte Carlo reference degenerates to the deterministic payoff at xi = 0") {
    ModelParams p;
    p.xi = 0.0;
    GridSpec g(1.0, 20);
    const CovarianceFactor f = factorize(build_covariance(g, p.H));
    const McResult mc = mc_european_put(p, PayoffSpec{120.0}, g, f, 5000, 7);
    CHECK(mc.price == Catch::Approx(14.1475309401).margin(1e-9));
    CHECK(mc.std_err == Catch::Approx(0.0).margin(1e-12));
    CHECK(mc.samples == 5000);
}

TEST_CASE("Monte Carlo reference is seed-deterministic") {
    ModelParams p;
    GridSpec g(1.0, 10);
    const CovarianceFactor f = factorize(build_covariance(g, p.H));
    const McResult a = mc_european_put(p, PayoffSpec{100.0}, g, f, 4000, 55);
    const McResult b = mc_european_put(p, PayoffSpec{100.0}, g, f, 4000, 55);
    const McResult c = mc_european_put(p, PayoffSpec{100.0}, g, f, 4000, 56);
    CHECK(a.price == b.price);
    CHECK(a.price != c.price);
    CHECK(a.std_err > 0.0);
}

// ---------------------------------------------------------------------------
// report helpers
// ---------------------------------------------------------------------------

TEST_CASE("six-significant-digit formatting") {
    CHECK(format_sig6(12.18435999) == "12.1844");
    CHECK(format_sig6(0.5) == "0.5");
    CHECK(format_sig6(-7.80611119) == "-7.80611");
    CHECK(format_sig6(100000.0) == "100000");
}

TEST_CASE("FNV-1a matches its published test vectors") {
    CHECK(fnv1a64("") == 14695981039346656037ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
    CHECK(hash_hex(0) == "0000000000000000");
    CHECK(hash_hex(0xdeadbeefull) == "00000000deadbeef");
}

TEST_CASE("summary and run CSV layout") {
    TempDir tmp("report");
    write_summary_csv(tmp.str("s.csv"), {{"european", 100.0, 7.80611, 0.00123, 20, 823969, "abc123"}});
    CHECK(slurp(tmp.str("s.csv")) ==
          "scheme,strike,mean,rsd,runs,seed,config_hash\n"
          "european,100,7.80611,0.00123,20,823969,abc123\n");
    write_runs_csv(tmp.str("r.csv"), {{3, 90.0, "american-penalty", 5.5053, 1, "h"}});
    CHECK(slurp(tmp.str("r.csv")) ==
          "run,strike,scheme,price,seed,config_hash\n"
          "3,90,american-penalty,5.5053,1,h\n");
    write_convergence_csv(tmp.str("c.csv"), {{10, 100.0, 7.8, 0.001, 20, 5, "h2"}});
    CHECK(slurp(tmp.str("c.csv")) ==
          "steps,strike,mean,rsd,runs,seed,config_hash\n"
          "10,100,7.8,0.001,20,5,h2\n");
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

TEST_CASE("config defaults and parsing") {
    const ExperimentConfig c = parse_config("");
    CHECK(c.H == 0.07);
    CHECK(c.N == 20);
    CHECK(c.scheme == "european");
    CHECK(c.strikes == std::vector<double>{90.0, 100.0, 110.0, 120.0});
    CHECK(c.seed == 823969);
    CHECK_FALSE(c.pin_variance);
    CHECK_NOTHROW(validate(c));

    const ExperimentConfig d = parse_config(
        "# comment line\n"
        "  H = 0.3   # trailing comment\n"
        "scheme = american-penalty\n"
        "penalty=40\n"
        "strikes = 95, 105\n"
        "fixed_sample = yes\n"
        "pin_variance = 0.0825\n"
        "step_counts = 5,10\n"
        "seed = 17\n");
    CHECK(d.H == 0.3);
    CHECK(d.scheme == "american-penalty");
    CHECK(d.penalty == 40.0);
    CHECK(d.strikes == std::vector<double>{95.0, 105.0});
    CHECK(d.fixed_sample);
    REQUIRE(d.pin_variance);
    CHECK(*d.pin_variance == 0.0825);
    CHECK(d.step_counts == std::vector<int>{5, 10});
    CHECK(d.seed == 17);
    CHECK(parse_config("pin_variance = none").pin_variance == std::nullopt);
}

TEST_CASE("config rejects malformed input") {
    CHECK_THROWS_AS(parse_config("unknown_key = 1"), ConfigError);
    CHECK_THROWS_AS(parse_config("H = abc"), ConfigError);
    CHECK_THROWS_AS(parse_config("H 0.1"), ConfigError);
    CHECK_THROWS_AS(parse_config("= 3"), ConfigError);
    CHECK_THROWS_AS(parse_config("strikes = 90,,100"), ConfigError);
    CHECK_THROWS_AS(parse_config("fixed_sample = maybe"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/rvol.cfg"), ConfigError);
}

TEST_CASE("config validation catches cross-field problems") {
    auto bad = [](const std::string& text) {
        const ExperimentConfig c = parse_config(text);
        CHECK_THROWS_AS(validate(c), ConfigError);
    };
    bad("scheme = bermudan");
    bad("H = 0.7");
    bad("method = lattice");
    bad("eval_time = 2.0");  // beyond T = 1
    bad("strikes = 0");
    bad("pin_variance = -1");
    bad("scheme = american-penalty\npenalty = 0");
    bad("quad_nodes = 50");
}

TEST_CASE("canonical text is stable, sensitive, and re-parseable") {
    const ExperimentConfig a = parse_config("seed = 99");
    const ExperimentConfig b = parse_config("seed = 99");
    ExperimentConfig c = parse_config("seed = 100");
    CHECK(canonical_text(a) == canonical_text(b));
    CHECK(canonical_text(a) != canonical_text(c));
    // canonical text is itself valid config: reparse and get the same canon
    const ExperimentConfig back = parse_config(canonical_text(a));
    CHECK(canonical_text(back) == canonical_text(a));
}

TEST_CASE("effective sigma and output directory") {
    ExperimentConfig c;
    CHECK(c.effective_sigma() == Catch::Approx(0.3));
    c.sigma = 0.25;
    CHECK(c.effective_sigma() == 0.25);

    unsetenv("RVOL_OUT_DIR");
    CHECK(c.effective_out_dir() == ".");
    setenv("RVOL_OUT_DIR", "/tmp/rvol_env_dir", 1);
    CHECK(c.effective_out_dir() == "/tmp/rvol_env_dir");
    c.out_dir = "/tmp/explicit";
    CHECK(c.effective_out_dir() == "/tmp/explicit");
    unsetenv("RVOL_OUT_DIR");
}

// ---------------------------------------------------------------------------
// experiment runners (tiny configurations, CSV contracts)
// ---------------------------------------------------------------------------

TEST_CASE("reference runner reproduces the coarse lattice through the CSV") {
    TempDir tmp("ref_crr");
    ExperimentConfig cfg;
    cfg.method = "crr";
    cfg.crr_steps = 20;
    cfg.out_dir = tmp.str();
    std::ostringstream log;
    run_reference(cfg, log);

    const std::string text = slurp(tmp.str("reference_summary.csv"));
    CHECK(text.find("scheme,strike,mean,rsd,runs,seed,config_hash\n") == 0);
    CHECK(summary_mean(text, "crr", "90") == Catch::Approx(5.6168).margin(1e-4));
    CHECK(summary_mean(text, "crr", "100") == Catch::Approx(9.7980).margin(1e-4));
    CHECK(summary_mean(text, "crr", "110") == Catch::Approx(15.6720).margin(1e-4));
    CHECK(summary_mean(text, "crr", "120") == Catch::Approx(22.7501).margin(1e-4));
    CHECK(count_lines(slurp(tmp.str("reference_runs.csv"))) == 5);
}

TEST_CASE("reference runner closed form and Monte Carlo modes") {
    TempDir tmp("ref_bs");
    ExperimentConfig cfg;
    cfg.method = "bs";
    cfg.strikes = {100.0};
    cfg.out_dir = tmp.str();
    std::ostringstream log;
    run_reference(cfg, log);
    CHECK(summary_mean(slurp(tmp.str("reference_summary.csv")), "bs", "100") ==
          Catch::Approx(9.3541972361).margin(1e-4));

    ExperimentConfig mc;
    mc.method = "mc";
    mc.mc_samples = 2000;
    mc.runs = 2;
    mc.N = 5;
    mc.strikes = {100.0};
    mc.out_dir = tmp.str();
    run_reference(mc, log);
    const std::string runs = slurp(tmp.str("reference_runs.csv"));
    CHECK(count_lines(runs) == 3);
    CHECK(runs.find("mc-reference") != std::string::npos);
}

TEST_CASE("price runner writes summary, runs, and loss files deterministically") {
    TempDir tmp_a("price_a"), tmp_b("price_b");
    ExperimentConfig a = tiny_price_config(tmp_a.str());
    a.record_loss = true;
    std::ostringstream log;
    run_price(a, log);
    REQUIRE(fs::exists(tmp_a.path / "summary.csv"));
    REQUIRE(fs::exists(tmp_a.path / "runs.csv"));
    REQUIRE(fs::exists(tmp_a.path / "losses.csv"));
    const std::string sa = slurp(tmp_a.str("summary.csv"));
    CHECK(count_lines(sa) == 2);  // header + one strike
    CHECK(count_lines(slurp(tmp_a.str("runs.csv"))) == 3);
    CHECK(count_lines(slurp(tmp_a.str("losses.csv"))) >= 2);

    // identical configuration except the out_dir: identical price content.
    // out_dir feeds the config hash, so compare everything before that column.
    ExperimentConfig b = tiny_price_config(tmp_b.str());
    b.record_loss = true;
    run_price(b, log);
    auto strip_hash = [](std::string text) {
        std::string out;
        std::stringstream ss(text);
        std::string line;
        while (std::getline(ss, line)) out += line.substr(0, line.rfind(',')) + "\n";
        return out;
    };
    CHECK(strip_hash(slurp(tmp_a.str("summary.csv"))) == strip_hash(slurp(tmp_b.str("summary.csv"))));
    CHECK(strip_hash(slurp(tmp_a.str("runs.csv"))) == strip_hash(slurp(tmp_b.str("runs.csv"))));

    // byte-identical on a true re-run into the same directory
    const std::string before = slurp(tmp_a.str("summary.csv"));
    run_price(a, log);
    CHECK(slurp(tmp_a.str("summary.csv")) == before);
}

TEST_CASE("convergence runner emits one row per step count and strike") {
    TempDir tmp("conv");
    ExperimentConfig cfg = tiny_price_config(tmp.str());
    cfg.step_counts = {1, 2};
    std::ostringstream log;
    run_convergence(cfg, log);
    const std::string text = slurp(tmp.str("convergence.csv"));
    CHECK(text.find("steps,strike,mean,rsd,runs,seed,config_hash\n") == 0);
    CHECK(count_lines(text) == 3);
    CHECK(text.find("\n1,100,") != std::string::npos);
    CHECK(text.find("\n2,100,") != std::string::npos);
}

TEST_CASE("path study trains, saves, reloads, and pins the variance input") {
    TempDir tmp("pstudy");
    ExperimentConfig cfg = tiny_price_config(tmp.str());
    cfg.N = 4;
    cfg.eval_time = 0.5;  // grid point 2 of 4
    cfg.eval_samples = 400;
    cfg.pin_variance = 0.0825;
    cfg.checkpoint = tmp.str("nets.csv");
    cfg.retrain = true;
    std::ostringstream log;
    const PathStudyResult first = run_path_study(cfg, log);
    CHECK(first.step == 2);
    CHECK(first.samples == 400);
    CHECK(std::isfinite(first.mean));
    CHECK(first.stddev >= 0.0);
    REQUIRE(first.pinned_mean);
    CHECK(std::isfinite(*first.pinned_mean));
    REQUIRE(fs::exists(tmp.path / "nets.csv"));
    REQUIRE(fs::exists(tmp.path / "path_study_summary.csv"));
    const std::string summary = slurp(tmp.str("path_study_summary.csv"));
    CHECK(summary.find("free,") != std::string::npos);
    CHECK(summary.find("pinned,") != std::string::npos);

    // reload path: same networks, same evaluation seed, same numbers
    cfg.retrain = false;
    const PathStudyResult second = run_path_study(cfg, log);
    CHECK(second.mean == first.mean);
    CHECK(second.stddev == first.stddev);

    ExperimentConfig off = cfg;
    off.eval_time = 0.3;  // not on a 4-step grid over [0, 1]
    CHECK_THROWS_AS(run_path_study(off, log), ConfigError);
}

TEST_CASE("path study pins the log-price input to the spot, not to stale buffers") {
    // Craft a checkpoint whose step-1 value net is sigmoid(10 * x_feature):
    // evaluated at the pinned spot the x feature is exactly zero, so every
    // sample must come out at sigmoid(0) = 0.5 with zero spread.
    TempDir tmp("pstudy_x");
    std::vector<StepNetworks> nets(2);
    nets[0].step = 0;
    nets[0].u = NetworkParams(1, 1);
    nets[0].z = NetworkParams(1, 1);
    nets[0].zt = NetworkParams(1, 1);
    nets[1].step = 1;
    nets[1].u = NetworkParams(3, 2);
    nets[1].z = NetworkParams(3, 2);
    nets[1].zt = NetworkParams(3, 2);
    nets[1].u.w1()[0] = 10.0;  // weight on the x feature only
    nets[1].u.w2()[0] = 1.0;
    save_networks(tmp.str("nets.csv"), nets);

    ExperimentConfig cfg;
    cfg.N = 2;
    cfg.eval_time = 0.5;
    cfg.eval_samples = 200;
    cfg.checkpoint = tmp.str("nets.csv");
    cfg.retrain = false;
    cfg.out_dir = tmp.str();
    std::ostringstream log;
    const PathStudyResult res = run_path_study(cfg, log);
    CHECK(res.mean == Catch::Approx(0.5).margin(1e-12));
    CHECK(res.stddev == Catch::Approx(0.0).margin(1e-12));

    // same shape but weight on the Brownian feature: the spread must be real
    nets[1].u.w1()[0] = 0.0;
    nets[1].u.w1()[1] = 5.0;
    save_networks(tmp.str("nets.csv"), nets);
    const PathStudyResult spread = run_path_study(cfg, log);
    CHECK(spread.stddev > 0.05);
}

TEST_CASE("validate runner passes on a small but honest configuration") {
    ExperimentConfig cfg;
    cfg.N = 6;
    cfg.strikes = {100.0};
    cfg.threads = 1;
    std::ostringstream log;
    CHECK(run_validate(cfg, log));
    const std::string text = log.str();
    CHECK(text.find("[ok]") != std::string::npos);
    CHECK(text.find("[FAIL]") == std::string::npos);
}
