#pragma once

#include <random>
#include <string>
#include <vector>

#include "mace/data.hpp"
#include "mace/forest.hpp"
#include "mace/ridge.hpp"

namespace mace {

enum class StoppingRule { FixedSMax, EarlyOob, WeightConverged };
enum class FeatureMode { Exogenous, EndogenousLags };
enum class InitMode { EqualWeight, MinVariance };

struct MaceConfig {
    double eta = 0.01;        // learning rate of both smoothing updates
    int s_max = 250;
    StoppingRule stopping = StoppingRule::EarlyOob;
    FeatureMode mode = FeatureMode::EndogenousLags;
    InitMode init = InitMode::EqualWeight;
    int horizon = 1;
    int max_lag = 21;         // endogenous lag depth
    bool use_marx = true;     // MARX rotation of the endogenous lags
    double xi = 0.0;          // minimum-return tilt added to the ridge target
    bool stochastic_weights = false;  // per-iteration gamma observation weights
    double min_var_shrinkage = 0.1;
    double init_subsample = 1.0;      // row share for the min-variance covariance
    double weight_tol = 1e-6;         // max-norm weight convergence stop
    std::uint64_t seed = 0;
    ForestConfig forest;
    RidgeConfig ridge;

    void validate() const;
};

struct IterationRecord {
    int s = 0;
    double insample_mse = 0.0;   // mean squared gap between z_hat and f_hat
    double oob_rmse = 0.0;       // normalized by the target's dispersion
    double weight_delta = 0.0;   // max-norm move of the combination weights
    double lambda = 0.0;
    double ridge_r2 = 0.0;
    bool lambda_at_boundary = false;
    Eigen::Index oob_filled = 0;  // zero-coverage rows filled with full predictions
    double kkt_residual = 0.0;
};

struct MaceModel {
    WeightVector w;           // variance-normalized combination weights
    Forest forest;            // forest of the selected iteration
    VectorXd f_hat;           // smoothed predictor on the aligned target rows
    VectorXd z_hat;           // unit-variance portfolio series over the panel
    std::vector<IterationRecord> history;
    int best_s = 0;
    bool weight_converged = false;
    double lambda = 0.0;      // penalty at the selected iteration

    // replay context
    FeatureMode mode = FeatureMode::EndogenousLags;
    int horizon = 1;
    int max_lag = 21;
    bool use_marx = true;
    bool nonneg = false;
    Eigen::Index aligned_offset = 0;  // panel row of the first aligned target
    std::vector<std::string> asset_names;
    std::vector<std::string> feature_names;
    double train_mean_z = 0.0;        // frozen training mean of the traded series

    void validate() const;

    // weights actually traded: budget-rescaled when the fit was sign
    // constrained, unit-variance scale otherwise
    VectorXd traded_weights() const;
    // converts unit-variance-scale forecasts into traded-scale forecasts
    double traded_scale() const;
};

// equal-weight or shrunk minimum-variance starting portfolio, variance
// normalized over the panel; rows optionally restricts the covariance sample
WeightVector initialize(const ReturnsPanel& panel, const MaceConfig& cfg);

// Alternating fit: forest step on the current portfolio series with block
// out-of-bag predictions, smoothing of the predictor, penalty-calibrated
// (optionally sign-constrained) portfolio step, smoothing plus variance
// normalization of the portfolio series. X supplies exogenous features and
// must share the panel's date axis; endogenous mode rebuilds lag/MARX
// features of the evolving series each iteration and ignores X.
MaceModel fit(const ReturnsPanel& panel, const FeatureMatrix* X, const MaceConfig& cfg);

// per-iteration stochastic observation weights: Gamma(s, 1/s) draws with
// unit mean and variance 1/s while 3s <= s_max, all ones afterwards
VectorXd stochastic_obs_weights(int s, int s_max, Eigen::Index n, std::mt19937_64& rng);

// Causal forecast series over an extended panel (train followed by test
// rows): entry tau holds the forest forecast of the portfolio return at tau,
// built from features dated tau - horizon; NaN where features are undefined.
// Forecasts are in the unit-variance scale of z_hat.
VectorXd forecast_series(const MaceModel& model, const ReturnsPanel& panel,
                         const FeatureMatrix* X);

// === bagging of strategies ===

struct BagOfStrategies {
    std::vector<MaceModel> members;
    std::vector<std::uint64_t> member_seeds;
};

// Each member reruns the fit with a derived seed, minimum-variance
// initialization from a random 70% row subsample, and stochastic
// observation weights switched on.
BagOfStrategies fit_bag(const ReturnsPanel& panel, const FeatureMatrix* X,
                        const MaceConfig& base, int bag_size);

// Collapses member positions into one per-period asset weight matrix:
// row t is the average over members of position(t, b) * member b's traded
// weights. The collapsed portfolio's return replicates the average of the
// members' position-scaled returns exactly.
MatrixXd collapse_bag(const BagOfStrategies& bag, const MatrixXd& positions);

}  // namespace mace
