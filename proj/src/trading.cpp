#include "mace/trading.hpp"

#include <cmath>

namespace mace {

void TradingConfig::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("trading: gamma must be positive");
    if (!(position_min < position_max))
        throw ConfigError("trading: position_min must be below position_max");
    if (vol_lookback < 2) throw ConfigError("trading: vol_lookback must be >= 2");
    if (pm_lookback < 1) throw ConfigError("trading: pm_lookback must be >= 1");
    if (cost_rate < 0.0) throw ConfigError("trading: cost_rate must be >= 0");
}

VectorXd rolling_variance(const VectorXd& series, int lookback) {
    if (lookback < 2) throw std::invalid_argument("rolling_variance: lookback must be >= 2");
    const Eigen::Index T = series.size();
    VectorXd out = VectorXd::Constant(T, std::nan(""));
    for (Eigen::Index t = 1; t < T; ++t) {
        const Eigen::Index first = std::max<Eigen::Index>(0, t - lookback + 1);
        const Eigen::Index n = t - first + 1;
        out(t) = sample_variance(series.segment(first, n));
    }
    return out;
}

VectorXd rolling_mean(const VectorXd& series, int lookback) {
    if (lookback < 1) throw std::invalid_argument("rolling_mean: lookback must be >= 1");
    const Eigen::Index T = series.size();
    VectorXd out = VectorXd::Constant(T, std::nan(""));
    for (Eigen::Index t = 0; t < T; ++t) {
        const Eigen::Index first = std::max<Eigen::Index>(0, t - lookback + 1);
        const Eigen::Index n = t - first + 1;
        out(t) = series.segment(first, n).mean();
    }
    return out;
}

VectorXd pm_forecasts(const VectorXd& series, int pm_lookback) {
    const VectorXd trailing = rolling_mean(series, pm_lookback);
    VectorXd out = VectorXd::Constant(series.size(), std::nan(""));
    for (Eigen::Index t = 1; t < series.size(); ++t) out(t) = trailing(t - 1);
    return out;
}

VectorXd vol_forecasts(const VectorXd& series, int vol_lookback) {
    const VectorXd trailing = rolling_variance(series, vol_lookback);
    VectorXd out = VectorXd::Constant(series.size(), std::nan(""));
    for (Eigen::Index t = 1; t < series.size(); ++t) out(t) = trailing(t - 1);
    return out;
}

double mv_position(double y_hat, double sigma2_hat, const TradingConfig& cfg) {
    cfg.validate();
    if (!std::isfinite(y_hat) || !std::isfinite(sigma2_hat))
        throw std::invalid_argument("mv_position: non-finite input");
    if (!(sigma2_hat > 0.0))
        throw std::invalid_argument("mv_position: sigma2_hat must be positive");
    const double raw = y_hat / (cfg.gamma * sigma2_hat);
    return std::min(std::max(raw, cfg.position_min), cfg.position_max);
}

WeightPathResult account_weight_path(const MatrixXd& effective_weights,
                                     const MatrixXd& asset_returns,
                                     const TradingConfig& cfg) {
    cfg.validate();
    const Eigen::Index T = effective_weights.rows();
    const Eigen::Index N = effective_weights.cols();
    if (asset_returns.rows() != T || asset_returns.cols() != N)
        throw std::invalid_argument("account_weight_path: axis mismatch");
    if (T < 1) throw std::invalid_argument("account_weight_path: empty path");

    WeightPathResult res;
    res.gross = VectorXd::Zero(T);
    res.net = VectorXd::Zero(T);
    res.costs = VectorXd::Zero(T);
    res.turnover = VectorXd::Zero(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        res.gross(t) = effective_weights.row(t).dot(asset_returns.row(t));
        double turn = 0.0;
        if (t == 0) {
            turn = effective_weights.row(0).cwiseAbs().sum();
        } else {
            const auto prev = effective_weights.row(t - 1);
            const double denom = 1.0 + prev.dot(asset_returns.row(t));
            if (denom <= 1e-12) {
                res.flagged.push_back(t);
                turn = effective_weights.row(t).cwiseAbs().sum();
            } else {
                for (Eigen::Index n = 0; n < N; ++n) {
                    const double drift = prev(n) * (1.0 + asset_returns(t, n)) / denom;
                    turn += std::fabs(effective_weights(t, n) - drift);
                }
            }
        }
        res.turnover(t) = turn;
        res.costs(t) = cfg.cost_rate * turn;
        res.net(t) = res.gross(t) - res.costs(t);
    }
    return res;
}

BacktestResult run_backtest(const VectorXd& portfolio_returns, const VectorXd& forecasts,
                            const MatrixXd& weights, const MatrixXd& asset_returns,
                            const std::vector<std::string>& dates,
                            const TradingConfig& cfg) {
    cfg.validate();
    const Eigen::Index T = portfolio_returns.size();
    const Eigen::Index N = asset_returns.cols();
    if (forecasts.size() != T || weights.rows() != T || asset_returns.rows() != T ||
        weights.cols() != N || static_cast<Eigen::Index>(dates.size()) != T)
        throw std::invalid_argument("run_backtest: axis mismatch");
    if (T < 3) throw std::invalid_argument("run_backtest: need at least 3 periods");

    const VectorXd sigma2 = vol_forecasts(portfolio_returns, cfg.vol_lookback);

    BacktestResult res;
    res.dates = dates;
    res.positions = VectorXd::Zero(T);
    res.gross = VectorXd::Zero(T);
    res.net = VectorXd::Zero(T);
    res.costs = VectorXd::Zero(T);
    res.turnover = VectorXd::Zero(T);
    res.effective_weights = MatrixXd::Zero(T, N);

    bool seen_position = false;
    for (Eigen::Index t = 0; t < T; ++t) {
        double omega = 0.0;
        const bool have_var = std::isfinite(sigma2(t)) && sigma2(t) > 0.0;
        const bool have_fc = std::isfinite(forecasts(t));
        if (have_var && have_fc) {
            const double raw = forecasts(t) / (cfg.gamma * sigma2(t));
            omega = std::min(std::max(raw, cfg.position_min), cfg.position_max);
            if (omega != raw) ++res.n_clamped;
            seen_position = true;
        } else if (!seen_position) {
            ++res.warmup;
        } else if (std::isfinite(sigma2(t)) && sigma2(t) <= 0.0) {
            res.flagged.push_back(t);
        }
        res.positions(t) = omega;
        res.gross(t) = omega * portfolio_returns(t);
        res.effective_weights.row(t) = omega * weights.row(t);
    }

    // turnover identity with prior holdings drifted by the period's returns
    WeightPathResult path = account_weight_path(res.effective_weights, asset_returns, cfg);
    res.turnover = std::move(path.turnover);
    res.costs = std::move(path.costs);
    res.net = res.gross - res.costs;
    for (Eigen::Index t : path.flagged) res.flagged.push_back(t);
    return res;
}

}  // namespace mace
