#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "mace/stats.hpp"

using namespace mace;

namespace {

// independent sandwich-estimator oracle written directly from the formula
MatrixXd hac_oracle(const MatrixXd& X, const VectorXd& e, int L) {
    const Eigen::Index T = X.rows(), K = X.cols();
    MatrixXd S = MatrixXd::Zero(K, K);
    for (Eigen::Index t = 0; t < T; ++t)
        S += e(t) * e(t) * X.row(t).transpose() * X.row(t);
    for (int l = 1; l <= L; ++l) {
        const double w = 1.0 - static_cast<double>(l) / (L + 1);
        for (Eigen::Index t = l; t < T; ++t) {
            MatrixXd g = e(t) * e(t - l) * X.row(t).transpose() * X.row(t - l);
            S += w * (g + g.transpose());
        }
    }
    MatrixXd inv = (X.transpose() * X).inverse();
    return inv * S * inv;
}

}  // namespace

TEST_CASE("ols recovers noiseless coefficients exactly") {
    MatrixXd X = testutil::gaussian_matrix(80, 3, 42);
    VectorXd beta(3);
    beta << 1.5, -2.0, 0.25;
    VectorXd y = X * beta;
    y.array() += 0.7;
    RegressionResult r = ols(y, X, true);
    CHECK(r.coef(0) == doctest::Approx(0.7).epsilon(1e-10));
    for (int j = 0; j < 3; ++j)
        CHECK(r.coef(j + 1) == doctest::Approx(beta(j)).epsilon(1e-10));
    CHECK(r.r2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ols agrees with the normal equations") {
    MatrixXd X = testutil::gaussian_matrix(120, 4, 5);
    VectorXd y = testutil::gaussian_matrix(120, 1, 6).col(0);
    RegressionResult r = ols(y, X, false);
    VectorXd oracle = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    CHECK((r.coef - oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("rank-deficient design is rejected") {
    MatrixXd X = testutil::gaussian_matrix(50, 2, 9);
    MatrixXd X2(50, 3);
    X2 << X, X.col(0);  // exact copy of column 0
    VectorXd y = testutil::gaussian_matrix(50, 1, 10).col(0);
    CHECK_THROWS_AS(ols(y, X2, false), FitError);
    CHECK_THROWS_AS(ols(VectorXd::Ones(5), MatrixXd::Ones(5, 9), false), FitError);
}

TEST_CASE("newey-west with zero lags equals the white sandwich") {
    MatrixXd X = testutil::gaussian_matrix(200, 2, 11);
    VectorXd y = testutil::gaussian_matrix(200, 1, 12).col(0);
    RegressionResult r = ols(y, X, true);
    MatrixXd cov = newey_west(r, 0);
    MatrixXd oracle = hac_oracle(r.design, r.residuals, 0);
    CHECK((cov - oracle).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.hac_lags == 0);
}

TEST_CASE("newey-west matches the bartlett oracle at positive lags") {
    MatrixXd X = testutil::gaussian_matrix(150, 2, 21);
    VectorXd y = testutil::gaussian_matrix(150, 1, 22).col(0);
    RegressionResult r = ols(y, X, true);
    for (int L : {1, 2, 5}) {
        MatrixXd cov = newey_west(r, L);
        MatrixXd oracle = hac_oracle(r.design, r.residuals, L);
        CHECK((cov - oracle).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("rule-of-thumb truncation") {
    CHECK(newey_west_auto_lags(100) == 4);
    CHECK(newey_west_auto_lags(10000) == 11);
    CHECK(newey_west_auto_lags(50) == 3);  // 4 * 0.5^(2/9) = 3.42
}

TEST_CASE("ar1 coefficient is recovered within sampling error") {
    VectorXd z = testutil::ar1_series(20000, 0.5, 31);
    MatrixXd X(z.size() - 1, 1);
    X.col(0) = z.head(z.size() - 1);
    RegressionResult r = ols(z.tail(z.size() - 1), X, true);
    newey_west(r, newey_west_auto_lags(z.size() - 1));
    CHECK(std::fabs(r.coef(1) - 0.5) < 3.0 * r.se_hac(1));
}

TEST_CASE("significance stars") {
    CHECK(significance_stars(1.0, 0.1) == "***");
    CHECK(significance_stars(2.0, 1.0) == "**");
    CHECK(significance_stars(1.7, 1.0) == "*");
    CHECK(significance_stars(0.5, 1.0) == "");
    CHECK(normal_pvalue(0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(normal_pvalue(1.0, 0.0), std::invalid_argument);
}
