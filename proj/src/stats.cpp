#include "mace/stats.hpp"

#include <cmath>

namespace mace {

RegressionResult ols(const VectorXd& y, const MatrixXd& X, bool intercept) {
    const Eigen::Index T = y.size();
    if (X.rows() != T) throw std::invalid_argument("ols: row mismatch");
    MatrixXd D;
    if (intercept) {
        D.resize(T, X.cols() + 1);
        D.col(0).setOnes();
        D.rightCols(X.cols()) = X;
    } else {
        D = X;
    }
    const Eigen::Index K = D.cols();
    if (T <= K) throw FitError("ols: need more rows than columns");

    Eigen::ColPivHouseholderQR<MatrixXd> qr(D);
    qr.setThreshold(1e-10);
    if (qr.rank() < K) throw FitError("ols: rank-deficient design");

    RegressionResult r;
    r.coef = qr.solve(y);
    r.residuals = y - D * r.coef;
    r.design = std::move(D);
    r.has_intercept = intercept;

    const double sst = (y.array() - y.mean()).square().sum();
    const double ssr = r.residuals.squaredNorm();
    r.r2 = (sst > 0.0) ? 1.0 - ssr / sst : 0.0;

    const double sigma2 = ssr / static_cast<double>(T - K);
    MatrixXd xtx_inv = (r.design.transpose() * r.design).ldlt().solve(
        MatrixXd::Identity(K, K));
    r.se_classical = (sigma2 * xtx_inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
    return r;
}

MatrixXd newey_west(RegressionResult& result, int lags) {
    if (lags < 0) throw std::invalid_argument("newey_west: lags must be >= 0");
    const MatrixXd& X = result.design;
    const VectorXd& e = result.residuals;
    const Eigen::Index T = X.rows(), K = X.cols();
    if (e.size() != T) throw std::invalid_argument("newey_west: stale result");

    // score rows x_t * e_t
    MatrixXd score = X.array().colwise() * e.array();

    MatrixXd S = score.transpose() * score;  // lag 0
    for (int l = 1; l <= lags; ++l) {
        if (l >= T) break;
        const double w = 1.0 - static_cast<double>(l) / static_cast<double>(lags + 1);
        MatrixXd G = score.bottomRows(T - l).transpose() * score.topRows(T - l);
        S += w * (G + G.transpose());
    }

    MatrixXd xtx_inv = (X.transpose() * X).ldlt().solve(MatrixXd::Identity(K, K));
    MatrixXd cov = xtx_inv * S * xtx_inv;
    result.se_hac = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    result.hac_lags = lags;
    return cov;
}

int newey_west_auto_lags(Eigen::Index T) {
    if (T < 1) throw std::invalid_argument("newey_west_auto_lags: empty sample");
    return static_cast<int>(std::floor(
        4.0 * std::pow(static_cast<double>(T) / 100.0, 2.0 / 9.0)));
}

double normal_pvalue(double estimate, double se) {
    if (se <= 0.0) throw std::invalid_argument("normal_pvalue: se must be positive");
    const double z = std::fabs(estimate / se);
    return std::erfc(z / std::sqrt(2.0));
}

std::string significance_stars(double estimate, double se) {
    const double p = normal_pvalue(estimate, se);
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.1) return "*";
    return "";
}

}  // namespace mace
