#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mace/metrics.hpp"

using namespace mace;

namespace {

// quadratic-time drawdown oracle: scan every peak/trough pair of log wealth
double drawdown_oracle(const VectorXd& r) {
    const Eigen::Index T = r.size();
    VectorXd logw(T + 1);
    logw(0) = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) logw(t + 1) = logw(t) + std::log1p(r(t));
    double dd = 0.0;
    for (Eigen::Index i = 0; i <= T; ++i)
        for (Eigen::Index j = i; j <= T; ++j) dd = std::max(dd, logw(i) - logw(j));
    return dd;
}

}  // namespace

TEST_CASE("forecast R^2 pins the square-loss comparison") {
    VectorXd y(4), pm(4);
    y << 1, 2, 3, 4;
    pm.setConstant(2.5);
    CHECK(oos_r2(y, y, pm) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(oos_r2(y, pm, pm) == doctest::Approx(0.0).epsilon(1e-15));
    VectorXd f(4);
    f << 1.5, 2.5, 2.5, 3.5;  // MSE = 0.25, benchmark MSE = 1.25
    CHECK(oos_r2(y, f, pm) == doctest::Approx(0.8).epsilon(1e-12));
    // worse than the benchmark goes negative
    VectorXd bad = VectorXd::Constant(4, 10.0);
    CHECK(oos_r2(y, bad, pm) < 0.0);
    CHECK_THROWS_AS(oos_r2(y, f, VectorXd::Ones(3)), std::invalid_argument);
    CHECK_THROWS_AS(oos_r2(y, f, y), std::invalid_argument);  // zero benchmark MSE
}

TEST_CASE("annualization and Sharpe recompute from first principles") {
    VectorXd r = 0.01 * testutil::gaussian_matrix(300, 1, 3).col(0);
    CHECK(annualized_return(r, 252.0) == doctest::Approx(r.mean() * 252.0).epsilon(1e-15));
    const double sd = std::sqrt((r.array() - r.mean()).square().sum() / (r.size() - 1));
    CHECK(sharpe_ratio(r, 252.0) ==
          doctest::Approx(r.mean() / sd * std::sqrt(252.0)).epsilon(1e-12));
    CHECK(sharpe_ratio(r, 12.0) ==
          doctest::Approx(r.mean() / sd * std::sqrt(12.0)).epsilon(1e-12));
    CHECK_THROWS_AS(sharpe_ratio(VectorXd::Ones(10), 252.0), std::invalid_argument);
}

TEST_CASE("omega ratio against brute force and its threshold monotonicity") {
    VectorXd r = 0.02 * testutil::gaussian_matrix(200, 1, 4).col(0);
    for (double theta : {0.0, 0.001, -0.003}) {
        double up = 0.0, down = 0.0;
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            const double d = r(i) - theta;
            (d > 0.0 ? up : down) += std::fabs(d);
        }
        CHECK(omega_ratio(r, theta) == doctest::Approx(up / down).epsilon(1e-12));
    }
    // raising the hurdle can only lower the ratio
    double prev = omega_ratio(r, -0.05);
    for (double theta = -0.04; theta < 0.05; theta += 0.01) {
        const double cur = omega_ratio(r, theta);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
    }
    // all gains above the hurdle: infinite, flagged as such in the bundle
    VectorXd wins = VectorXd::Constant(10, 0.01);
    wins(3) = 0.02;
    CHECK(std::isinf(omega_ratio(wins, 0.0)));
    MetricsBundle b = compute_metrics(wins, 252.0, 0.0);
    CHECK_FALSE(b.omega_finite);
}

TEST_CASE("max drawdown matches the quadratic oracle") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> norm(0.0, 0.03);
    for (int rep = 0; rep < 5; ++rep) {
        VectorXd r(120);
        for (Eigen::Index t = 0; t < r.size(); ++t) r(t) = norm(rng);
        CHECK(max_drawdown(r) == doctest::Approx(drawdown_oracle(r)).epsilon(1e-12));
    }
}

TEST_CASE("max drawdown frozen example and recovery invariance") {
    VectorXd r(3);
    r << 1.0, -0.5, 1.0;  // wealth 1 -> 2 -> 1 -> 2: trough is half the peak
    CHECK(max_drawdown(r) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // a later rally cannot shrink a realized drawdown
    VectorXd r2(4);
    r2 << 1.0, -0.5, 1.0, 5.0;
    CHECK(max_drawdown(r2) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(max_drawdown(VectorXd::Constant(5, 0.01)) == 0.0);
    VectorXd wipe(2);
    wipe << 0.5, -1.0;
    CHECK_THROWS_AS(max_drawdown(wipe), std::invalid_argument);
}

TEST_CASE("skewness and kurtosis on crafted shapes") {
    // symmetric two-point spread: zero skew, kurtosis 1 (raw moment)
    VectorXd sym(4);
    sym << -1, 1, -1, 1;
    CHECK(skewness(sym) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kurtosis(sym) == doctest::Approx(1.0).epsilon(1e-12));
    // standard normal sample: skew near 0, raw kurtosis near 3
    VectorXd g = testutil::gaussian_matrix(20000, 1, 5).col(0);
    CHECK(std::fabs(skewness(g)) < 0.1);
    CHECK(kurtosis(g) == doctest::Approx(3.0).epsilon(0.05));
    // a single large outlier drives kurtosis up
    VectorXd fat = g.head(1000);
    fat(500) = 30.0;
    CHECK(kurtosis(fat) > 100.0);
}

TEST_CASE("metrics bundle fields agree with the standalone functions") {
    VectorXd r = 0.01 * testutil::gaussian_matrix(250, 1, 6).col(0);
    MetricsBundle b = compute_metrics(r, 12.0, 0.0005);
    CHECK(b.n == 250);
    CHECK(b.mean == r.mean());
    CHECK(b.annualized_return == annualized_return(r, 12.0));
    CHECK(b.sharpe == sharpe_ratio(r, 12.0));
    CHECK(b.omega == omega_ratio(r, 0.0005));
    CHECK(b.omega_threshold == 0.0005);
    CHECK(b.max_drawdown == max_drawdown(r));
    CHECK(b.skewness == skewness(r));
    CHECK(b.kurtosis == kurtosis(r));
    CHECK_THROWS_AS(compute_metrics(r.head(3), 12.0, 0.0), std::invalid_argument);
}

TEST_CASE("date slices use inclusive bounds and recombine by pooled MSE") {
    const Eigen::Index T = 40;
    VectorXd y = testutil::gaussian_matrix(T, 1, 7).col(0);
    VectorXd f = y + 0.3 * testutil::gaussian_matrix(T, 1, 8).col(0);
    VectorXd pm = VectorXd::Constant(T, y.mean());
    auto dates = testutil::make_dates(T);

    std::vector<SliceSpec> specs{
        {"first", dates[0], dates[19], false},
        {"second", dates[20], dates[T - 1], false},
        {"full", dates[0], dates[T - 1], false},
        {"anti_first", dates[0], dates[19], true},
    };
    auto res = slice_r2(y, f, pm, dates, specs);
    REQUIRE(res.size() == 4);
    CHECK(res[0].n == 20);  // inclusive on both ends
    CHECK(res[1].n == 20);
    CHECK(res[2].n == 40);
    CHECK(res[3].n == 20);
    CHECK(res[3].r2 == doctest::Approx(res[1].r2).epsilon(1e-15));  // complement = second half

    // pooled squared errors across complementary slices rebuild the total
    auto sse_pm = [&](Eigen::Index lo, Eigen::Index n) {
        return (y.segment(lo, n) - pm.segment(lo, n)).squaredNorm();
    };
    const double sse_model_total = (1.0 - res[2].r2) * sse_pm(0, 40);
    const double sse_model_parts =
        (1.0 - res[0].r2) * sse_pm(0, 20) + (1.0 - res[1].r2) * sse_pm(20, 20);
    CHECK(sse_model_total == doctest::Approx(sse_model_parts).epsilon(1e-12));

    CHECK_THROWS_AS(slice_r2(y, f, pm, dates, {{"bad", dates[5], dates[1], false}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(slice_r2(y, f, pm, dates, {{"tiny", dates[3], dates[3], false}}),
                    std::invalid_argument);
}

TEST_CASE("AR(1) regression recovers persistence within HAC bands") {
    const Eigen::Index T = 4000;
    std::mt19937_64 rng(99);
    std::normal_distribution<double> norm(0.0, 1.0);
    VectorXd s(T);
    s(0) = 0.0;
    const double phi = 0.35, c = 0.2;
    for (Eigen::Index t = 1; t < T; ++t) {
        const double scale = (t % 150 < 75) ? 1.8 : 0.6;  // regime heteroskedasticity
        s(t) = c + phi * s(t - 1) + scale * norm(rng);
    }
    Ar1Result r = ar1_hac(s);
    CHECK(r.n == T - 1);
    CHECK(r.hac_lags > 0);
    CHECK(std::fabs(r.phi - phi) < 3.0 * r.se_phi);
    CHECK(std::fabs(r.intercept - c) < 3.0 * r.se_intercept);
    // fixed-lag override is honored
    Ar1Result r0 = ar1_hac(s, 0);
    CHECK(r0.hac_lags == 0);
    CHECK(r0.phi == r.phi);
    CHECK(r0.se_phi != r.se_phi);
    CHECK_THROWS_AS(ar1_hac(VectorXd::Ones(5)), std::invalid_argument);
}

TEST_CASE("random baseline is deterministic and well-formed") {
    const Eigen::Index T = 200, N = 4;
    ReturnsPanel panel = testutil::make_panel(0.01 * testutil::gaussian_matrix(T, N, 10));

    BaselineConfig cfg;
    cfg.n_random = 6;
    cfg.nonneg = true;
    cfg.horizon = 1;
    cfg.max_lag = 5;
    cfg.use_marx = true;
    cfg.train_end = 150;
    cfg.seed = 424242;
    cfg.include_stocks = true;
    cfg.forest.n_trees = 25;
    cfg.forest.min_node_size = 8;
    cfg.forest.block_size = 10;
    cfg.forest.n_threads = 1;

    BaselineResult a = random_baseline(panel, nullptr, cfg);
    BaselineResult b = random_baseline(panel, nullptr, cfg);
    REQUIRE(a.portfolios.size() == 6);
    REQUIRE(a.stocks.size() == 4);
    for (std::size_t i = 0; i < a.portfolios.size(); ++i) {
        CHECK(a.portfolios[i].train_r2_oob == b.portfolios[i].train_r2_oob);
        CHECK(a.portfolios[i].oos_r2 == b.portfolios[i].oos_r2);
        CHECK(std::isfinite(a.portfolios[i].oos_r2));
        CHECK(a.portfolios[i].train_r2_oob < 1.0);
    }
    for (std::size_t j = 0; j < a.stocks.size(); ++j) {
        CHECK(a.stocks[j].id == panel.assets[j]);
        CHECK(std::isfinite(a.stocks[j].oos_r2));
    }
    // reported top index is the training-R^2 argmax
    REQUIRE(a.top_train_index >= 0);
    for (const auto& d : a.portfolios)
        CHECK(d.train_r2_oob <=
              a.portfolios[static_cast<std::size_t>(a.top_train_index)].train_r2_oob);

    // a different seed draws different portfolios
    BaselineConfig cfg2 = cfg;
    cfg2.seed = 7;
    cfg2.include_stocks = false;
    BaselineResult c = random_baseline(panel, nullptr, cfg2);
    bool any_diff = false;
    for (std::size_t i = 0; i < c.portfolios.size(); ++i)
        any_diff = any_diff || c.portfolios[i].oos_r2 != a.portfolios[i].oos_r2;
    CHECK(any_diff);
    CHECK(c.stocks.empty());
}

TEST_CASE("random baseline accepts exogenous features and guards its config") {
    const Eigen::Index T = 120, N = 3;
    ReturnsPanel panel = testutil::make_panel(0.01 * testutil::gaussian_matrix(T, N, 11));
    FeatureMatrix X;
    X.values = testutil::gaussian_matrix(T, 4, 12);
    X.names = {"f0", "f1", "f2", "f3"};
    X.dates = panel.dates;

    BaselineConfig cfg;
    cfg.n_random = 3;
    cfg.train_end = 90;
    cfg.seed = 5;
    cfg.include_stocks = false;
    cfg.forest.n_trees = 20;
    cfg.forest.min_node_size = 6;
    cfg.forest.block_size = 8;
    cfg.forest.n_threads = 1;

    BaselineResult r = random_baseline(panel, &X, cfg);
    REQUIRE(r.portfolios.size() == 3);
    for (const auto& d : r.portfolios) CHECK(std::isfinite(d.oos_r2));

    BaselineConfig bad = cfg;
    bad.n_random = 0;
    CHECK_THROWS_AS(random_baseline(panel, &X, bad), ConfigError);
    bad = cfg;
    bad.train_end = T;
    CHECK_THROWS_AS(random_baseline(panel, &X, bad), ConfigError);
    bad = cfg;
    bad.horizon = 0;
    CHECK_THROWS_AS(random_baseline(panel, &X, bad), ConfigError);
}
