#pragma once

#include <string>
#include <vector>

#include "mace/common.hpp"

namespace mace {

struct TradingConfig {
    double gamma = 5.0;          // risk aversion in the mean-variance rule
    double position_min = -1.0;  // leverage clamp
    double position_max = 2.0;
    int vol_lookback = 252;      // rolling variance window
    int pm_lookback = 2520;      // prevailing-mean window
    double cost_rate = 0.0;      // proportional cost per unit turnover

    void validate() const;
};

struct BacktestResult {
    std::vector<std::string> dates;
    VectorXd positions;          // omega_t, zero through warm-up
    VectorXd gross;              // omega_t * y_t
    VectorXd net;                // gross minus transaction costs
    VectorXd costs;
    VectorXd turnover;
    MatrixXd effective_weights;  // T x N, omega_t * w_t
    Eigen::Index warmup = 0;     // leading periods with no position
    Eigen::Index n_clamped = 0;  // positions hit the leverage clamp
    std::vector<Eigen::Index> flagged;  // periods with nonpositive turnover denominator
};

// trailing sample statistics; entry t covers the window of up to `lookback`
// observations ending at t (inclusive), so entry t is the forecast for t+1.
// Variance entries need two observations and are NaN before that; means are
// defined from t = 0.
VectorXd rolling_variance(const VectorXd& series, int lookback);
VectorXd rolling_mean(const VectorXd& series, int lookback);

// casts the trailing statistics as causal forecast series: out[t] is the
// forecast for period t, built from observations through t-1 (NaN where
// unavailable)
VectorXd pm_forecasts(const VectorXd& series, int pm_lookback);
VectorXd vol_forecasts(const VectorXd& series, int vol_lookback);

// clamp(y_hat / (gamma * sigma2), position_min, position_max)
double mv_position(double y_hat, double sigma2_hat, const TradingConfig& cfg);

// Accounts an explicit per-period effective-weight path (rows are asset
// exposures): gross_t = weights_t . returns_t, turnover by the drift
// identity, proportional costs, net = gross - costs. The entry point for
// collapsed bagged strategies whose exposures don't factor into a single
// position times fixed weights.
struct WeightPathResult {
    VectorXd gross;
    VectorXd net;
    VectorXd costs;
    VectorXd turnover;
    std::vector<Eigen::Index> flagged;  // nonpositive turnover denominators
};

WeightPathResult account_weight_path(const MatrixXd& effective_weights,
                                     const MatrixXd& asset_returns,
                                     const TradingConfig& cfg);

// Runs the mean-variance rule over a portfolio return series. forecasts[t]
// must be causal (built from information through t-1; NaN = no position).
// The variance in the rule is the trailing sample variance of the realized
// series itself. weights.row(t) are the period-t portfolio weights, used
// with the asset returns for the turnover identity; the first period's
// prior holdings are zero. Nonpositive drift denominators are flagged and
// the period's turnover falls back to full rebuild cost.
BacktestResult run_backtest(const VectorXd& portfolio_returns, const VectorXd& forecasts,
                            const MatrixXd& weights, const MatrixXd& asset_returns,
                            const std::vector<std::string>& dates,
                            const TradingConfig& cfg);

}  // namespace mace
