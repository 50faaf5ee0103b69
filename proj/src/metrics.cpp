#include "mace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mace/stats.hpp"

namespace mace {

namespace {

void check_same(const VectorXd& a, const VectorXd& b, const char* what) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(what) + ": length mismatch");
    if (a.size() == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

double mse(const VectorXd& y, const VectorXd& f) {
    return (y - f).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace

double oos_r2(const VectorXd& realized, const VectorXd& model_forecast,
              const VectorXd& pm_forecast) {
    check_same(realized, model_forecast, "oos_r2");
    check_same(realized, pm_forecast, "oos_r2");
    if (!realized.allFinite() || !model_forecast.allFinite() || !pm_forecast.allFinite())
        throw std::invalid_argument("oos_r2: non-finite input");
    const double denom = mse(realized, pm_forecast);
    if (denom <= 0.0)
        throw std::invalid_argument("oos_r2: benchmark MSE is zero");
    return 1.0 - mse(realized, model_forecast) / denom;
}

double annualized_return(const VectorXd& returns, double periods_per_year) {
    if (returns.size() == 0) throw std::invalid_argument("annualized_return: empty");
    return returns.mean() * periods_per_year;
}

double sharpe_ratio(const VectorXd& returns, double periods_per_year) {
    const double sd = sample_std(returns);
    if (!(sd > 0.0))
        throw std::invalid_argument("sharpe_ratio: zero return dispersion");
    return returns.mean() / sd * std::sqrt(periods_per_year);
}

double omega_ratio(const VectorXd& returns, double threshold) {
    if (returns.size() == 0) throw std::invalid_argument("omega_ratio: empty");
    double up = 0.0, down = 0.0;
    for (Eigen::Index i = 0; i < returns.size(); ++i) {
        const double d = returns(i) - threshold;
        if (d > 0.0)
            up += d;
        else
            down -= d;
    }
    if (down == 0.0) return std::numeric_limits<double>::infinity();
    return up / down;
}

double max_drawdown(const VectorXd& returns) {
    if (returns.size() == 0) throw std::invalid_argument("max_drawdown: empty");
    double logw = 0.0, peak = 0.0, dd = 0.0;  // wealth starts at the peak
    for (Eigen::Index i = 0; i < returns.size(); ++i) {
        const double g = 1.0 + returns(i);
        if (!(g > 0.0))
            throw std::invalid_argument("max_drawdown: return <= -100% wipes wealth");
        logw += std::log(g);
        peak = std::max(peak, logw);
        dd = std::max(dd, peak - logw);
    }
    return dd;
}

double skewness(const VectorXd& returns) {
    const Eigen::Index n = returns.size();
    if (n < 3) throw std::invalid_argument("skewness: need >= 3 observations");
    const double m = returns.mean();
    const Eigen::ArrayXd d = returns.array() - m;
    const double m2 = d.square().mean();
    if (!(m2 > 0.0)) throw std::invalid_argument("skewness: zero variance");
    return d.cube().mean() / std::pow(m2, 1.5);
}

double kurtosis(const VectorXd& returns) {
    const Eigen::Index n = returns.size();
    if (n < 4) throw std::invalid_argument("kurtosis: need >= 4 observations");
    const double m = returns.mean();
    const Eigen::ArrayXd d = returns.array() - m;
    const double m2 = d.square().mean();
    if (!(m2 > 0.0)) throw std::invalid_argument("kurtosis: zero variance");
    return d.square().square().mean() / (m2 * m2);
}

MetricsBundle compute_metrics(const VectorXd& returns, double periods_per_year,
                              double omega_threshold) {
    if (returns.size() < 4)
        throw std::invalid_argument("compute_metrics: need >= 4 observations");
    if (!(periods_per_year > 0.0))
        throw std::invalid_argument("compute_metrics: periods_per_year must be positive");
    MetricsBundle b;
    b.n = returns.size();
    b.periods_per_year = periods_per_year;
    b.mean = returns.mean();
    b.std_dev = sample_std(returns);
    b.annualized_return = annualized_return(returns, periods_per_year);
    b.sharpe = sharpe_ratio(returns, periods_per_year);
    b.omega_threshold = omega_threshold;
    b.omega = omega_ratio(returns, omega_threshold);
    b.omega_finite = std::isfinite(b.omega);
    b.max_drawdown = max_drawdown(returns);
    b.skewness = skewness(returns);
    b.kurtosis = kurtosis(returns);
    return b;
}

std::vector<SliceR2> slice_r2(const VectorXd& realized, const VectorXd& model_forecast,
                              const VectorXd& pm_forecast,
                              const std::vector<std::string>& dates,
                              const std::vector<SliceSpec>& slices) {
    check_same(realized, model_forecast, "slice_r2");
    check_same(realized, pm_forecast, "slice_r2");
    if (static_cast<Eigen::Index>(dates.size()) != realized.size())
        throw std::invalid_argument("slice_r2: date axis mismatch");

    std::vector<SliceR2> out;
    out.reserve(slices.size());
    for (const auto& spec : slices) {
        if (spec.from > spec.to)
            throw std::invalid_argument("slice_r2: slice '" + spec.name +
                                        "' has from > to");
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < realized.size(); ++i) {
            const bool inside = !(dates[static_cast<std::size_t>(i)] < spec.from) &&
                                !(spec.to < dates[static_cast<std::size_t>(i)]);
            if (inside != spec.complement) rows.push_back(i);
        }
        if (rows.size() < 2)
            throw std::invalid_argument("slice_r2: slice '" + spec.name +
                                        "' selects fewer than 2 periods");
        VectorXd y(rows.size()), f(rows.size()), p(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            y(static_cast<Eigen::Index>(i)) = realized(rows[i]);
            f(static_cast<Eigen::Index>(i)) = model_forecast(rows[i]);
            p(static_cast<Eigen::Index>(i)) = pm_forecast(rows[i]);
        }
        out.push_back({spec.name, oos_r2(y, f, p), static_cast<Eigen::Index>(rows.size())});
    }
    return out;
}

Ar1Result ar1_hac(const VectorXd& series, int hac_lags) {
    const Eigen::Index T = series.size();
    if (T < 10) throw std::invalid_argument("ar1_hac: need >= 10 observations");
    MatrixXd X(T - 1, 1);
    X.col(0) = series.head(T - 1);
    const VectorXd y = series.tail(T - 1);

    RegressionResult r = ols(y, X, /*intercept=*/true);
    const int L = hac_lags >= 0 ? hac_lags : newey_west_auto_lags(T - 1);
    newey_west(r, L);

    Ar1Result out;
    out.intercept = r.coef(0);
    out.phi = r.coef(1);
    out.se_intercept = r.se_hac(0);
    out.se_phi = r.se_hac(1);
    out.hac_lags = L;
    out.n = T - 1;
    return out;
}

double pred_corr(const VectorXd& forecast, const VectorXd& realized_lag1) {
    return pearson_corr(forecast, realized_lag1);
}

// === random-portfolio baseline ===

namespace {

struct AlignedFit {
    MatrixXd X_train;
    VectorXd y_train;
    MatrixXd X_test;
    VectorXd y_test;
};

// Builds the causal design for one target series over the whole panel and
// splits it at train_end (a row index of the panel). Endogenous mode uses
// lag/MARX features of the target series itself.
AlignedFit align_series(const VectorXd& z, const FeatureMatrix* X, int horizon,
                        int max_lag, bool use_marx, Eigen::Index train_end) {
    const Eigen::Index T = z.size();
    AlignedFit a;
    Eigen::Index origin0;  // forecast origin of feature row 0
    MatrixXd F;
    if (X != nullptr) {
        if (X->rows() != T)
            throw std::invalid_argument("baseline: feature/panel axis mismatch");
        F = X->values;
        origin0 = 0;
    } else {
        FeatureMatrix lf = lag_features(z, {}, max_lag, use_marx);
        F = lf.values;
        origin0 = max_lag - 1;  // lag rows end one step before their anchor
    }
    // feature row i holds what is known at origin0 + i and predicts the
    // target `horizon` steps later
    const Eigen::Index first_target = origin0 + horizon;
    const Eigen::Index usable = T - first_target;
    if (usable < 8) throw DataError("baseline: too few usable rows after alignment");
    const Eigen::Index train_rows =
        std::min(usable, std::max<Eigen::Index>(0, train_end - first_target));
    if (train_rows < 8) throw DataError("baseline: training window too short");
    if (train_rows >= usable) throw DataError("baseline: no test rows after train_end");

    a.X_train = F.topRows(train_rows);
    a.y_train = z.segment(first_target, train_rows);
    a.X_test = F.middleRows(train_rows, usable - train_rows);
    a.y_test = z.segment(first_target + train_rows, usable - train_rows);
    return a;
}

BaselineDraw score_series(const VectorXd& z, const FeatureMatrix* X,
                          const BaselineConfig& cfg, std::uint64_t seed,
                          const std::string& id) {
    AlignedFit a = align_series(z, X, cfg.horizon, cfg.max_lag, cfg.use_marx,
                                cfg.train_end);
    ForestConfig fc = cfg.forest;
    fc.seed = seed;
    Forest f = fit_forest(a.X_train, a.y_train, fc);

    BaselineDraw d;
    d.id = id;
    const double var_train = sample_variance(a.y_train);
    const double rmse = oob_rmse(f, a.X_train, a.y_train);
    d.train_r2_oob = var_train > 0.0 ? 1.0 - rmse * rmse / var_train : 0.0;

    const VectorXd fc_test = predict(f, a.X_test);
    const double pm = z.head(cfg.train_end).mean();  // frozen training mean
    const VectorXd pm_vec = VectorXd::Constant(a.y_test.size(), pm);
    d.oos_r2 = oos_r2(a.y_test, fc_test, pm_vec);
    return d;
}

}  // namespace

BaselineResult random_baseline(const ReturnsPanel& panel, const FeatureMatrix* X,
                               const BaselineConfig& cfg) {
    if (cfg.n_random < 1) throw ConfigError("baseline: n_random must be >= 1");
    if (cfg.train_end < 16 || cfg.train_end >= panel.rows())
        throw ConfigError("baseline: train_end outside the panel");
    if (cfg.horizon < 1) throw ConfigError("baseline: horizon must be >= 1");

    const Eigen::Index N = panel.cols();
    BaselineResult out;
    out.portfolios.reserve(static_cast<std::size_t>(cfg.n_random));

    for (int i = 0; i < cfg.n_random; ++i) {
        std::mt19937_64 rng(derive_seed(cfg.seed, 0xB543, static_cast<std::uint64_t>(i)));
        VectorXd w(N);
        if (cfg.nonneg) {
            std::exponential_distribution<double> exp1(1.0);
            for (Eigen::Index j = 0; j < N; ++j) w(j) = exp1(rng);
            w /= w.sum();  // flat Dirichlet
        } else {
            std::normal_distribution<double> norm(0.0, 1.0);
            for (Eigen::Index j = 0; j < N; ++j) w(j) = norm(rng);
            w /= w.norm();
        }
        const VectorXd z = panel.values * w;
        out.portfolios.push_back(score_series(
            z, X, cfg, derive_seed(cfg.seed, 0xF0BE, static_cast<std::uint64_t>(i)),
            "portfolio_" + std::to_string(i)));
    }
    out.top_train_index = 0;
    for (int i = 1; i < cfg.n_random; ++i)
        if (out.portfolios[static_cast<std::size_t>(i)].train_r2_oob >
            out.portfolios[static_cast<std::size_t>(out.top_train_index)].train_r2_oob)
            out.top_train_index = i;

    if (cfg.include_stocks) {
        out.stocks.reserve(static_cast<std::size_t>(N));
        for (Eigen::Index j = 0; j < N; ++j)
            out.stocks.push_back(score_series(
                panel.values.col(j), X, cfg,
                derive_seed(cfg.seed, 0x57CC, static_cast<std::uint64_t>(j)),
                panel.assets[static_cast<std::size_t>(j)]));
    }
    return out;
}

}  // namespace mace
