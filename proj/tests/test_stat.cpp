#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rvol/forward.hpp"
#include "rvol/reference.hpp"

// Statistical checks on large batches. Bounds are multiples of the measured
// standard error (4-4.5 sigma), so a correct implementation fails only with
// negligible probability and any real bias trips them by a wide margin.
// Seeds are fixed, so outcomes are reproducible.

using namespace rvol;

namespace {

struct MeanSe {
    double mean;
    double se;
};

MeanSe mean_se(const std::vector<double>& x) {
    auto [m, s] = mean_stddev(x);
    return {m, s / std::sqrt(static_cast<double>(x.size()))};
}

}  // namespace

TEST_CASE("sampled Gaussian levels have the exact model moments") {
    ModelParams p;
    GridSpec g(1.0, 20);
    const CovarianceFactor f = factorize(build_covariance(g, p.H));
    const int J = 100000;
    PathBundle b = sample_paths(f, g, J, 20260822);

    std::vector<double> wT(J), hT(J), w1h1(J);
    for (int j = 0; j < J; ++j) {
        wT[j] = b.w(j, g.N);
        hT[j] = b.what(j, g.N);
        w1h1[j] = b.w(j, g.N) * b.what(j, g.N);
    }

    // E W_T = 0, Var W_T = T
    const auto w = mean_se(wT);
    CHECK(std::abs(w.mean) < 4.0 * std::sqrt(1.0 / J));
    auto [wm, ws] = mean_stddev(wT);
    CHECK(ws * ws == Catch::Approx(1.0).margin(0.02));

    // Var What_T = T^{2H} = 1 at T = 1
    auto [hm, hs] = mean_stddev(hT);
    CHECK(std::abs(hm) < 4.0 * std::sqrt(1.0 / J));
    CHECK(hs * hs == Catch::Approx(1.0).margin(0.02));

    // Cov(W_T, What_T) = sqrt(2H)/(H+1/2) at T = 1, frozen offline
    const auto c = mean_se(w1h1);
    CHECK(c.mean == Catch::Approx(0.656431120486656).margin(4.5 * c.se));
}

TEST_CASE("variance process has unit-normalized mean at every grid time") {
    ModelParams p;
    GridSpec g(1.0, 20);
    const CovarianceFactor f = factorize(build_covariance(g, p.H));
    const int J = 100000;
    PathBundle b = sample_paths(f, g, J, 909090901);
    bergomi_variance(b, p);

    for (int i = 1; i <= g.N; ++i) {
        std::vector<double> v(J);
        for (int j = 0; j < J; ++j) v[j] = b.v(j, i);
        const auto s = mean_se(v);
        INFO("grid index " << i << ": mean " << s.mean << " se " << s.se);
        CHECK(std::abs(s.mean - p.xi) < 4.5 * s.se);
    }
}

TEST_CASE("discounted spot is a martingale under the discrete scheme") {
    ModelParams p;
    GridSpec g(1.0, 20);
    const CovarianceFactor f = factorize(build_covariance(g, p.H));
    const int J = 100000;
    PathBundle b = sample_paths(f, g, J, 424242);
    bergomi_variance(b, p);
    euler_logprice(b, p);

    // E exp(X_{t_i}) = s0 holds exactly for the left-point Euler scheme
    for (int i : {5, 10, 20}) {
        std::vector<double> s(J);
        for (int j = 0; j < J; ++j) s[j] = std::exp(b.x(j, i));
        const auto st = mean_se(s);
        INFO("grid index " << i << ": mean " << st.mean << " se " << st.se);
        CHECK(std::abs(st.mean - p.s0) < 4.0 * st.se);
    }
}

TEST_CASE("flat-volatility Monte Carlo agrees with the closed form") {
    ModelParams p;
    p.eta = 0.0;  // variance frozen at xi: exact lognormal dynamics
    GridSpec g(1.0, 20);
    const CovarianceFactor f = factorize(build_covariance(g, p.H));
    const McResult mc = mc_european_put(p, PayoffSpec{100.0}, g, f, 200000, 777001);
    const double exact = black_scholes_put(100.0, 100.0, p.r, std::sqrt(p.xi), 1.0);
    INFO("mc " << mc.price << " +- " << mc.std_err << " vs " << exact);
    CHECK(std::abs(mc.price - exact) < 4.0 * mc.std_err);
    CHECK(mc.std_err < 0.05);
}

TEST_CASE("put prices increase with strike and undercut their payoff ceiling") {
    ModelParams p;
    GridSpec g(1.0, 20);
    const CovarianceFactor f = factorize(build_covariance(g, p.H));
    double prev = 0.0;
    for (double k : {90.0, 100.0, 110.0, 120.0}) {
        const McResult mc = mc_european_put(p, PayoffSpec{k}, g, f, 50000, 13);
        CHECK(mc.price > prev);
        CHECK(mc.price < k * std::exp(-p.r));  // bounded by the discounted strike
        prev = mc.price;
    }
}
