#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mace/ridge.hpp"

using namespace mace;

namespace {

// independent oracle: projected gradient descent on the same objective
VectorXd pg_nonneg_oracle(const MatrixXd& X, const VectorXd& y, double lambda,
                          int iters = 400000) {
    const MatrixXd G = X.transpose() * X + lambda * MatrixXd::Identity(X.cols(), X.cols());
    const VectorXd b = X.transpose() * y;
    const double L = 2.0 * G.operatorNorm();
    VectorXd w = VectorXd::Zero(X.cols());
    for (int i = 0; i < iters; ++i) {
        const VectorXd grad = 2.0 * (G * w - b);
        w = (w - grad / L).cwiseMax(0.0);
    }
    return w;
}

MatrixXd design(Eigen::Index T, Eigen::Index N, std::uint64_t seed) {
    return testutil::gaussian_matrix(T, N, seed);
}

}  // namespace

TEST_CASE("unconstrained ridge matches the closed form") {
    const MatrixXd X = design(60, 8, 1);
    const VectorXd y = design(60, 1, 2).col(0);
    const double lambda = 3.7;
    RidgeConfig cfg;
    cfg.intercept = false;

    RidgeSolution sol = solve_ridge(X, y, lambda, cfg);
    const MatrixXd A =
        X.transpose() * X + lambda * MatrixXd::Identity(8, 8);
    const VectorXd oracle = A.fullPivLu().solve(X.transpose() * y);
    CHECK((sol.w - oracle).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("intercept stays unpenalized") {
    const MatrixXd X = design(80, 5, 3);
    VectorXd y = design(80, 1, 4).col(0);
    y.array() += 5.0;  // big level the intercept must absorb
    RidgeConfig cfg;
    cfg.intercept = true;

    RidgeSolution sol = solve_ridge(X, y, 1e8, cfg);  // crush the slopes
    CHECK(sol.w.cwiseAbs().maxCoeff() < 1e-4);
    CHECK(sol.intercept == doctest::Approx(y.mean()).epsilon(1e-6));

    // closed form with a penalty mask that spares the intercept
    const double lambda = 2.5;
    RidgeSolution s2 = solve_ridge(X, y, lambda, cfg);
    MatrixXd D(80, 6);
    D.col(0).setOnes();
    D.rightCols(5) = X;
    MatrixXd A = D.transpose() * D;
    for (int j = 1; j < 6; ++j) A(j, j) += lambda;
    const VectorXd oracle = A.fullPivLu().solve(D.transpose() * y);
    CHECK(std::fabs(s2.intercept - oracle(0)) < 1e-8);
    CHECK((s2.w - oracle.tail(5)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("observation weights enter the normal equations") {
    const MatrixXd X = design(50, 4, 5);
    const VectorXd y = design(50, 1, 6).col(0);
    VectorXd k = design(50, 1, 7).col(0).array().abs() + 0.1;
    const double lambda = 0.9;
    RidgeConfig cfg;
    cfg.intercept = false;

    RidgeSolution sol = solve_ridge(X, y, lambda, cfg, k);
    const MatrixXd Xk = X.array().colwise() * k.array();
    const MatrixXd A = X.transpose() * Xk + lambda * MatrixXd::Identity(4, 4);
    const VectorXd oracle = A.fullPivLu().solve(Xk.transpose() * y);
    CHECK((sol.w - oracle).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("lambda zero equals ols and collinearity is reported") {
    const MatrixXd X = design(90, 6, 8);
    const VectorXd y = design(90, 1, 9).col(0);
    RidgeConfig cfg;
    cfg.intercept = false;
    RidgeSolution sol = solve_ridge(X, y, 0.0, cfg);
    const VectorXd oracle = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    CHECK((sol.w - oracle).cwiseAbs().maxCoeff() < 1e-8);

    MatrixXd Xc(90, 7);
    Xc << X, X.col(0);
    CHECK_THROWS_AS(solve_ridge(Xc, y, 0.0, cfg), FitError);
    CHECK_NOTHROW(solve_ridge(Xc, y, 1e-4, cfg));
}

TEST_CASE("nonneg solution matches projected gradient and satisfies kkt") {
    const Eigen::Index T = 70, N = 6;
    const MatrixXd X = design(T, N, 10);
    // target anti-correlated with half the columns so constraints bind
    VectorXd beta(N);
    beta << 1.0, -2.0, 0.5, -1.5, 0.0, 2.0;
    VectorXd y = X * beta + 0.3 * design(T, 1, 11).col(0);
    const double lambda = 1.3;
    RidgeConfig cfg;
    cfg.intercept = false;
    cfg.nonneg = true;

    RidgeSolution sol = solve_ridge(X, y, lambda, cfg);
    const VectorXd oracle = pg_nonneg_oracle(X, y, lambda);
    CHECK((sol.w - oracle).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((sol.w.array() >= 0.0).all());
    CHECK(sol.kkt_residual <= 1e-6);
}

TEST_CASE("nonneg reduces to unconstrained when nothing binds") {
    const Eigen::Index T = 200, N = 5;
    MatrixXd X = design(T, N, 12);
    VectorXd beta = VectorXd::Constant(N, 1.0);
    VectorXd y = X * beta;
    RidgeConfig uncon;
    uncon.intercept = false;
    RidgeConfig nn = uncon;
    nn.nonneg = true;
    const double lambda = 0.5;
    RidgeSolution a = solve_ridge(X, y, lambda, uncon);
    REQUIRE((a.w.array() > 0.0).all());
    RidgeSolution b = solve_ridge(X, y, lambda, nn);
    CHECK((a.w - b.w).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("calibration hits the target r2 and is monotone") {
    const Eigen::Index T = 400, N = 10;
    const MatrixXd X = design(T, N, 13);
    VectorXd beta = design(N, 1, 14).col(0);
    VectorXd y = X * beta + 2.0 * design(T, 1, 15).col(0);
    RidgeConfig cfg;
    cfg.intercept = true;
    cfg.target_r2 = 0.05;

    CalibrationResult cal = calibrate_lambda(X, y, cfg);
    CHECK(cal.target_attained);
    CHECK(std::fabs(cal.attained_r2 - 0.05) <= 1e-3);
    CHECK(cal.lambda >= cfg.lambda_min);
    CHECK(cal.lambda <= cfg.lambda_max);

    // R^2 is non-increasing in lambda
    double prev = 2.0;
    for (double lam : {1e-6, 1e-2, 1.0, 1e2, 1e4, 1e8}) {
        RidgeSolution s = solve_ridge(X, y, lam, cfg);
        const double r2 = ridge_r2(X, y, s);
        CHECK(r2 <= prev + 1e-12);
        prev = r2;
    }
}

TEST_CASE("unattainable target is flagged at the boundary") {
    const Eigen::Index T = 2000, N = 3;
    const MatrixXd X = design(T, N, 16);
    const VectorXd y = design(T, 1, 17).col(0);  // pure noise, max R^2 ~ N/T
    RidgeConfig cfg;
    cfg.target_r2 = 0.5;
    CalibrationResult cal = calibrate_lambda(X, y, cfg);
    CHECK_FALSE(cal.target_attained);
    CHECK(cal.lambda == cfg.lambda_min);
    CHECK(cal.attained_r2 < 0.5);
}

TEST_CASE("variance normalization produces a unit-variance portfolio") {
    const MatrixXd R = 0.01 * design(300, 6, 18);
    VectorXd w = design(6, 1, 19).col(0);
    WeightVector wv = normalize_variance(w, R);
    CHECK(sample_variance(R * wv.w) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(wv.scale_applied == doctest::Approx(1.0 / sample_std(R * w)).epsilon(1e-12));
    CHECK_THROWS_AS(normalize_variance(VectorXd::Zero(6), R), FitError);
}

TEST_CASE("budget rescaling") {
    VectorXd w(3);
    w << 2.0, 1.0, 1.0;
    const VectorXd b = rescale_budget(w);
    CHECK(b.sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(b(0) == doctest::Approx(0.5).epsilon(1e-15));
    VectorXd bad(2);
    bad << 1.0, -1.0;
    CHECK_THROWS_AS(rescale_budget(bad), FitError);
}

TEST_CASE("min-variance weights match the closed form and survive singularity") {
    const MatrixXd R = 0.01 * design(500, 5, 20);
    const VectorXd w = min_variance_weights(R, 0.0);
    MatrixXd centered = R.rowwise() - R.colwise().mean();
    MatrixXd cov = centered.transpose() * centered / 499.0;
    VectorXd oracle = cov.fullPivLu().solve(VectorXd::Ones(5));
    oracle /= oracle.sum();
    CHECK((w - oracle).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));

    MatrixXd dup(500, 6);
    dup << R, R.col(0);  // duplicated asset: singular covariance
    const VectorXd ws = min_variance_weights(dup, 0.0);
    CHECK(ws.allFinite());
    CHECK(ws.sum() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("config guards") {
    RidgeConfig cfg;
    cfg.target_r2 = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RidgeConfig{};
    cfg.lambda_min = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    const MatrixXd X = design(30, 3, 21);
    const VectorXd y = design(30, 1, 22).col(0);
    CHECK_THROWS_AS(solve_ridge(X, y, -1.0, RidgeConfig{}), std::invalid_argument);
    VectorXd bad_w = VectorXd::Constant(30, -1.0);
    CHECK_THROWS_AS(solve_ridge(X, y, 1.0, RidgeConfig{}, bad_w), std::invalid_argument);
}
