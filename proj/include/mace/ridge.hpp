#pragma once

#include "mace/common.hpp"

namespace mace {

struct RidgeConfig {
    bool nonneg = false;
    bool intercept = true;
    double target_r2 = 0.05;       // in-sample R^2 the penalty is calibrated to
    double lambda_min = 1e-8;
    double lambda_max = 1e12;
    double r2_tol = 1e-3;          // calibration tolerance on R^2
    double cd_tol = 1e-12;         // coordinate-descent max |delta w| stop
    int cd_max_iter = 20000;       // coordinate-descent sweeps
    double kkt_tol = 1e-6;         // certification threshold reported against

    void validate() const;
};

// portfolio weights plus the cumulative scaling applied to them
struct WeightVector {
    VectorXd w;
    double scale_applied = 1.0;
};

struct RidgeSolution {
    VectorXd w;
    double intercept = 0.0;        // zero when fit without one
    double kkt_residual = 0.0;     // max normalized KKT violation (nonneg path)
    int iterations = 0;            // coordinate-descent sweeps used
};

struct CalibrationResult {
    double lambda = 0.0;
    RidgeSolution solution;
    double attained_r2 = 0.0;
    bool target_attained = false;  // false when pinned at a lambda boundary
};

// Minimizes sum_t k_t (y_t - a - w'x_t)^2 + lambda ||w||^2. The intercept a
// is unpenalized and never sign-constrained. Pass an empty obs_weights for
// k_t = 1. Unconstrained solves use the normal equations; nonneg solves use
// cyclic coordinate descent with clipping at zero and are KKT-certified.
RidgeSolution solve_ridge(const MatrixXd& X, const VectorXd& y, double lambda,
                          const RidgeConfig& cfg,
                          const VectorXd& obs_weights = VectorXd());

// weighted centered R^2 of a solution on the data it was fit to
double ridge_r2(const MatrixXd& X, const VectorXd& y, const RidgeSolution& sol,
                const VectorXd& obs_weights = VectorXd());

// Bisection on log lambda over [lambda_min, lambda_max] for the penalty whose
// in-sample R^2 matches cfg.target_r2 within cfg.r2_tol. R^2 is monotone
// non-increasing in lambda. When even the boundary cannot reach the target,
// the boundary solution is returned with target_attained = false.
CalibrationResult calibrate_lambda(const MatrixXd& X, const VectorXd& y,
                                   const RidgeConfig& cfg,
                                   const VectorXd& obs_weights = VectorXd());

// scales w so the portfolio series R*w has sample variance 1 (no demeaning)
WeightVector normalize_variance(const VectorXd& w, const MatrixXd& R);

// scales w to sum to one; errors when the sum is within 1e-10 of zero
VectorXd rescale_budget(const VectorXd& w);

// Minimum-variance weights from the sample covariance of R, shrunk toward
// its own diagonal by delta. A singular solve escalates delta and retries.
VectorXd min_variance_weights(const MatrixXd& R, double delta);

}  // namespace mace
