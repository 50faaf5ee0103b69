#pragma once

#include <string>

#include "mace/common.hpp"

namespace mace {

struct RegressionResult {
    VectorXd coef;           // intercept first when fitted with one
    VectorXd se_classical;   // homoskedastic standard errors
    VectorXd se_hac;         // filled by newey_west, empty before
    double r2 = 0.0;         // centered R^2
    VectorXd residuals;
    MatrixXd design;         // the design actually used (incl. intercept col)
    bool has_intercept = false;
    int hac_lags = -1;       // -1 until newey_west runs
};

// OLS via column-pivoted QR. Throws FitError when the design is rank
// deficient or has more columns than rows.
RegressionResult ols(const VectorXd& y, const MatrixXd& X, bool intercept);

// Newey-West covariance with Bartlett weights w_l = 1 - l/(L+1).
// L = 0 reduces to the White heteroskedasticity-robust sandwich.
// Fills result.se_hac and hac_lags; returns the full coefficient covariance.
MatrixXd newey_west(RegressionResult& result, int lags);

// Rule-of-thumb truncation floor(4 * (T/100)^(2/9))
int newey_west_auto_lags(Eigen::Index T);

// significance stars from a two-sided normal test: *** p<0.01, ** p<0.05, * p<0.1
std::string significance_stars(double estimate, double se);

// two-sided normal p-value for estimate/se
double normal_pvalue(double estimate, double se);

}  // namespace mace
