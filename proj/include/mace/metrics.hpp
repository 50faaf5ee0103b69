#pragma once

#include <string>
#include <vector>

#include "mace/common.hpp"
#include "mace/data.hpp"
#include "mace/forest.hpp"

namespace mace {

struct MetricsBundle {
    Eigen::Index n = 0;
    double periods_per_year = 252.0;
    double mean = 0.0;
    double std_dev = 0.0;
    double annualized_return = 0.0;  // mean * periods_per_year
    double sharpe = 0.0;             // annualized, n-1 std
    double omega = 0.0;              // +inf when no losses below threshold
    bool omega_finite = true;
    double omega_threshold = 0.0;
    double max_drawdown = 0.0;       // max peak-to-trough drop of log wealth
    double skewness = 0.0;
    double kurtosis = 0.0;           // raw fourth standardized moment
};

// forecast-quality comparison against a prevailing-mean benchmark:
// 1 - MSE(model) / MSE(benchmark)
double oos_r2(const VectorXd& realized, const VectorXd& model_forecast,
              const VectorXd& pm_forecast);

double annualized_return(const VectorXd& returns, double periods_per_year);
double sharpe_ratio(const VectorXd& returns, double periods_per_year);
double omega_ratio(const VectorXd& returns, double threshold);
double max_drawdown(const VectorXd& returns);  // on cumulative log wealth
double skewness(const VectorXd& returns);
double kurtosis(const VectorXd& returns);

MetricsBundle compute_metrics(const VectorXd& returns, double periods_per_year,
                              double omega_threshold = 0.0);

// date-range slices of the forecast comparison
struct SliceSpec {
    std::string name;
    std::string from;        // inclusive date tokens
    std::string to;
    bool complement = false; // score everything outside [from, to] instead
};

struct SliceR2 {
    std::string name;
    double r2 = 0.0;
    Eigen::Index n = 0;
};

std::vector<SliceR2> slice_r2(const VectorXd& realized, const VectorXd& model_forecast,
                              const VectorXd& pm_forecast,
                              const std::vector<std::string>& dates,
                              const std::vector<SliceSpec>& slices);

// AR(1) regression of a series on its own first lag with Newey-West
// standard errors (Bartlett kernel, rule-of-thumb truncation by default)
struct Ar1Result {
    double phi = 0.0;
    double se_phi = 0.0;
    double intercept = 0.0;
    double se_intercept = 0.0;
    int hac_lags = 0;
    Eigen::Index n = 0;
};

Ar1Result ar1_hac(const VectorXd& series, int hac_lags = -1);  // -1 = rule of thumb

// correlation between a forecast series and the lagged realized series
double pred_corr(const VectorXd& forecast, const VectorXd& realized_lag1);

// === random-portfolio predictability baseline ===

struct BaselineConfig {
    int n_random = 150;
    bool nonneg = true;        // Dirichlet draws when true, signed normal otherwise
    int horizon = 1;
    int max_lag = 21;          // endogenous lag features when no exogenous X given
    bool use_marx = true;
    ForestConfig forest;
    Eigen::Index train_end = 0;  // rows [0, train_end) train, rest scored
    std::uint64_t seed = 0;
    bool include_stocks = true;
};

struct BaselineDraw {
    std::string id;
    double train_r2_oob = 0.0;  // out-of-bag R^2 on the training window
    double oos_r2 = 0.0;
};

struct BaselineResult {
    std::vector<BaselineDraw> portfolios;
    std::vector<BaselineDraw> stocks;
    int top_train_index = -1;   // portfolio draw with the best training R^2
};

// Fits one forest per random portfolio (and per single stock) and scores
// out-of-sample forecast R^2 against each target's own frozen training mean.
// Pass exogenous features via X, or nullptr for endogenous lag features.
BaselineResult random_baseline(const ReturnsPanel& panel, const FeatureMatrix* X,
                               const BaselineConfig& cfg);

}  // namespace mace
