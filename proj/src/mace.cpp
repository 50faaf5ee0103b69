#include "mace/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mace {

namespace {

constexpr std::uint64_t kForestStream = 0x464F5245;
constexpr std::uint64_t kKappaStream = 0x4B415050;
constexpr std::uint64_t kInitStream = 0x494E4954;
constexpr std::uint64_t kBagStream = 0x42414747;

Eigen::Index lag_offset(const MaceConfig& cfg) {
    return cfg.mode == FeatureMode::EndogenousLags ? cfg.max_lag : 0;
}

// feature rows aligned with the target slice; endogenous designs are rebuilt
// from the current series, exogenous ones reuse the fixed matrix
MatrixXd aligned_features(const MaceConfig& cfg, const FeatureMatrix* X,
                          const VectorXd& z, Eigen::Index n_aligned,
                          std::vector<std::string>* names_out) {
    if (cfg.mode == FeatureMode::Exogenous) {
        MatrixXd F = X->values.topRows(n_aligned);
        if (names_out) *names_out = X->names;
        return F;
    }
    FeatureMatrix lf = lag_features(z, {}, cfg.max_lag, cfg.use_marx);
    if (names_out) *names_out = lf.names;
    return lf.values.topRows(n_aligned);
}

}  // namespace

void MaceConfig::validate() const {
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("mace: eta must be in (0, 1]");
    if (s_max < 1) throw ConfigError("mace: s_max must be >= 1");
    if (horizon < 1) throw ConfigError("mace: horizon must be >= 1");
    if (mode == FeatureMode::EndogenousLags && max_lag < 1)
        throw ConfigError("mace: max_lag must be >= 1 in endogenous mode");
    if (xi < 0.0) throw ConfigError("mace: xi must be >= 0");
    if (!(min_var_shrinkage >= 0.0 && min_var_shrinkage <= 1.0))
        throw ConfigError("mace: min_var_shrinkage must be in [0, 1]");
    if (!(init_subsample > 0.0 && init_subsample <= 1.0))
        throw ConfigError("mace: init_subsample must be in (0, 1]");
    if (!(weight_tol > 0.0)) throw ConfigError("mace: weight_tol must be positive");
    forest.validate();
    ridge.validate();
}

void MaceModel::validate() const {
    if (w.w.size() == 0 || !w.w.allFinite()) throw FitError("model: invalid weights");
    if (z_hat.size() < 2) throw FitError("model: missing portfolio series");
    const double v = sample_variance(z_hat);
    if (std::fabs(v - 1.0) > 1e-8)
        throw FitError("model: portfolio series variance drifted from 1");
    if (!f_hat.allFinite()) throw FitError("model: non-finite predictor");
    if (best_s < 1 || history.empty()) throw FitError("model: empty history");
}

VectorXd MaceModel::traded_weights() const {
    return nonneg ? rescale_budget(w.w) : w.w;
}

double MaceModel::traded_scale() const {
    if (!nonneg) return 1.0;
    const double s = w.w.sum();
    if (std::fabs(s) < 1e-10)
        throw FitError("model: weights sum to ~0, traded scale undefined");
    return 1.0 / s;
}

WeightVector initialize(const ReturnsPanel& panel, const MaceConfig& cfg) {
    cfg.validate();
    const Eigen::Index T = panel.rows(), N = panel.cols();
    VectorXd w0;
    if (cfg.init == InitMode::EqualWeight) {
        w0 = VectorXd::Constant(N, 1.0 / static_cast<double>(N));
    } else {
        MatrixXd sample = panel.values;
        if (cfg.init_subsample < 1.0) {
            const auto keep = static_cast<Eigen::Index>(
                std::ceil(cfg.init_subsample * static_cast<double>(T)));
            std::mt19937_64 rng(derive_seed(cfg.seed, kInitStream));
            std::vector<Eigen::Index> rows(static_cast<std::size_t>(T));
            std::iota(rows.begin(), rows.end(), 0);
            for (Eigen::Index j = 0; j < keep; ++j) {
                const auto span = static_cast<std::uint64_t>(T - j);
                const auto k = static_cast<std::size_t>(
                    j + static_cast<Eigen::Index>(
                            (static_cast<unsigned __int128>(rng()) * span) >> 64));
                std::swap(rows[static_cast<std::size_t>(j)], rows[k]);
            }
            std::vector<Eigen::Index> chosen(rows.begin(), rows.begin() + keep);
            std::sort(chosen.begin(), chosen.end());
            sample.resize(keep, N);
            for (Eigen::Index i = 0; i < keep; ++i)
                sample.row(i) = panel.values.row(chosen[static_cast<std::size_t>(i)]);
        }
        w0 = min_variance_weights(sample, cfg.min_var_shrinkage);
    }
    // normalization always runs on the full training window
    return normalize_variance(w0, panel.values);
}

VectorXd stochastic_obs_weights(int s, int s_max, Eigen::Index n, std::mt19937_64& rng) {
    if (s < 1 || n < 1) throw std::invalid_argument("stochastic_obs_weights: bad input");
    if (3 * s > s_max) return VectorXd::Ones(n);
    std::gamma_distribution<double> gamma(static_cast<double>(s),
                                          1.0 / static_cast<double>(s));
    VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k(i) = gamma(rng);
    return k;
}

MaceModel fit(const ReturnsPanel& panel, const FeatureMatrix* X, const MaceConfig& cfg) {
    cfg.validate();
    panel.validate();
    const Eigen::Index T = panel.rows();
    const Eigen::Index off = lag_offset(cfg);
    // Endogenous lag rows already end one step before their anchor, so the
    // first reachable target is off + horizon - 1; exogenous rows sit at the
    // forecast origin itself and the first target is plain horizon.
    const Eigen::Index first_target =
        off > 0 ? off + cfg.horizon - 1 : cfg.horizon;
    const Eigen::Index M = T - first_target;  // aligned pairs

    if (cfg.mode == FeatureMode::Exogenous) {
        if (X == nullptr)
            throw ConfigError("mace: exogenous mode needs a feature matrix");
        X->validate();
        if (X->rows() != T || X->dates != panel.dates)
            throw DataError("mace: features must share the panel's date axis");
    }
    if (M < 2 * cfg.forest.min_node_size)
        throw FitError("mace: only " + std::to_string(M) +
                       " aligned rows after lags and horizon; need at least " +
                       std::to_string(2 * cfg.forest.min_node_size));

    WeightVector w0 = initialize(panel, cfg);
    VectorXd w_eff = w0.w;
    VectorXd z = panel.values * w_eff;  // unit variance by construction
    VectorXd f_hat = VectorXd::Zero(M);
    const MatrixXd R_aligned = panel.values.middleRows(off + cfg.horizon, M);

    MaceModel model;
    model.mode = cfg.mode;
    model.horizon = cfg.horizon;
    model.max_lag = cfg.max_lag;
    model.use_marx = cfg.use_marx;
    model.nonneg = cfg.ridge.nonneg;
    model.aligned_offset = first_target;
    model.asset_names = panel.assets;

    RidgeConfig rcfg = cfg.ridge;
    if (cfg.xi > 0.0) rcfg.intercept = false;  // tilt replaces the free level

    struct Snapshot {
        VectorXd w_eff, f_hat, z;
        Forest forest;
        double lambda = 0.0;
        double scale = 1.0;
        int s = 0;
        std::vector<std::string> feature_names;
    } snap;
    double best_rmse = std::numeric_limits<double>::infinity();
    bool have_snap = false;

    double last_scale = w0.scale_applied;
    for (int s = 1; s <= cfg.s_max; ++s) {
        std::vector<std::string> fnames;
        const MatrixXd F = aligned_features(cfg, X, z, M, &fnames);
        const VectorXd y = z.segment(model.aligned_offset, M);

        ForestConfig fcfg = cfg.forest;
        fcfg.seed = derive_seed(cfg.seed, kForestStream, static_cast<std::uint64_t>(s));
        Forest forest = fit_forest(F, y, fcfg);

        OobResult oob = predict_oob(forest, F);
        double sse = 0.0;
        Eigen::Index covered = 0;
        for (Eigen::Index i = 0; i < M; ++i) {
            if (oob.coverage(i) == 0) continue;
            const double e = oob.pred(i) - y(i);
            sse += e * e;
            ++covered;
        }
        if (covered == 0) throw FitError("mace: no out-of-bag coverage; shrink blocks");
        const double y_sd = sample_std(y);
        const double rmse =
            std::sqrt(sse / static_cast<double>(covered)) / std::max(y_sd, 1e-300);
        const Eigen::Index filled = fill_zero_coverage(forest, F, oob);

        const double eta_rhs = (s == 1) ? 1.0 : cfg.eta;
        f_hat = eta_rhs * oob.pred + (1.0 - eta_rhs) * f_hat;

        VectorXd target = f_hat;
        if (cfg.xi > 0.0) target.array() += cfg.xi;
        VectorXd kappa;
        if (cfg.stochastic_weights) {
            std::mt19937_64 krng(
                derive_seed(cfg.seed, kKappaStream, static_cast<std::uint64_t>(s)));
            kappa = stochastic_obs_weights(s, cfg.s_max, M, krng);
            if ((kappa.array() == 1.0).all()) kappa.resize(0);
        }
        CalibrationResult cal = calibrate_lambda(R_aligned, target, rcfg, kappa);

        const VectorXd z_star = panel.values * cal.solution.w;
        VectorXd combo = cfg.eta * z_star + (1.0 - cfg.eta) * z;
        const double sd = sample_std(combo);
        if (!(sd > 1e-12)) throw FitError("mace: degenerate portfolio during update");
        z = combo / sd;
        VectorXd w_new = (cfg.eta * cal.solution.w + (1.0 - cfg.eta) * w_eff) / sd;
        const double delta = (w_new - w_eff).cwiseAbs().maxCoeff();
        w_eff = std::move(w_new);
        last_scale = 1.0 / sd;

        IterationRecord rec;
        rec.s = s;
        rec.insample_mse =
            (z.segment(model.aligned_offset, M) - f_hat).squaredNorm() /
            static_cast<double>(M);
        rec.oob_rmse = rmse;
        rec.weight_delta = delta;
        rec.lambda = cal.lambda;
        rec.ridge_r2 = cal.attained_r2;
        rec.lambda_at_boundary = !cal.target_attained;
        rec.oob_filled = filled;
        rec.kkt_residual = cal.solution.kkt_residual;
        model.history.push_back(rec);

        const bool improved = rmse < best_rmse;
        if (improved) best_rmse = rmse;
        const bool keep = (cfg.stopping == StoppingRule::EarlyOob) ? improved : true;
        if (keep) {
            snap.w_eff = w_eff;
            snap.f_hat = f_hat;
            snap.z = z;
            snap.forest = std::move(forest);
            snap.lambda = cal.lambda;
            snap.scale = last_scale;
            snap.s = s;
            snap.feature_names = std::move(fnames);
            have_snap = true;
        }

        if (delta < cfg.weight_tol) {
            model.weight_converged = true;
            break;
        }
    }
    if (!have_snap) throw FitError("mace: no iteration completed");

    model.w.w = snap.w_eff;
    model.w.scale_applied = snap.scale;
    model.f_hat = snap.f_hat;
    model.z_hat = snap.z;
    model.forest = std::move(snap.forest);
    model.lambda = snap.lambda;
    model.best_s = snap.s;
    model.feature_names = snap.feature_names;
    model.train_mean_z = (panel.values * model.traded_weights()).mean();
    model.validate();
    return model;
}

VectorXd forecast_series(const MaceModel& model, const ReturnsPanel& panel,
                         const FeatureMatrix* X) {
    const Eigen::Index T = panel.rows();
    VectorXd out = VectorXd::Constant(T, std::nan(""));
    if (model.mode == FeatureMode::Exogenous) {
        if (X == nullptr)
            throw ConfigError("forecast_series: exogenous model needs features");
        if (X->rows() != T || X->dates != panel.dates)
            throw DataError("forecast_series: features must share the panel dates");
        if (X->cols() != model.forest.n_features)
            throw DataError("forecast_series: feature count mismatch");
        const Eigen::Index n = T - model.horizon;
        if (n < 1) return out;
        const VectorXd pred = predict(model.forest, X->values.topRows(n));
        for (Eigen::Index t = 0; t < n; ++t) out(t + model.horizon) = pred(t);
        return out;
    }
    if (static_cast<Eigen::Index>(model.asset_names.size()) != panel.cols())
        throw DataError("forecast_series: panel width mismatch");
    const VectorXd z = panel.values * model.w.w;  // unit-variance scale
    const Eigen::Index first = model.max_lag + model.horizon - 1;
    if (T <= first) return out;
    FeatureMatrix lf = lag_features(z, {}, model.max_lag, model.use_marx);
    const Eigen::Index n = T - first;
    const VectorXd pred = predict(model.forest, lf.values.topRows(n));
    for (Eigen::Index i = 0; i < n; ++i) out(first + i) = pred(i);
    return out;
}

BagOfStrategies fit_bag(const ReturnsPanel& panel, const FeatureMatrix* X,
                        const MaceConfig& base, int bag_size) {
    if (bag_size < 2) throw ConfigError("fit_bag: bag_size must be >= 2");
    BagOfStrategies bag;
    bag.members.reserve(static_cast<std::size_t>(bag_size));
    bag.member_seeds.reserve(static_cast<std::size_t>(bag_size));
    for (int b = 0; b < bag_size; ++b) {
        MaceConfig cfg = base;
        cfg.seed = derive_seed(base.seed, kBagStream, static_cast<std::uint64_t>(b));
        cfg.init = InitMode::MinVariance;
        cfg.init_subsample = 0.7;
        cfg.stochastic_weights = true;
        bag.member_seeds.push_back(cfg.seed);
        bag.members.push_back(fit(panel, X, cfg));
    }
    return bag;
}

MatrixXd collapse_bag(const BagOfStrategies& bag, const MatrixXd& positions) {
    const auto B = static_cast<Eigen::Index>(bag.members.size());
    if (B < 1) throw std::invalid_argument("collapse_bag: empty bag");
    if (positions.cols() != B)
        throw std::invalid_argument("collapse_bag: one position column per member");
    const Eigen::Index N = bag.members.front().w.w.size();
    const Eigen::Index T = positions.rows();

    MatrixXd W(N, B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto& m = bag.members[static_cast<std::size_t>(b)];
        if (m.w.w.size() != N)
            throw std::invalid_argument("collapse_bag: member width mismatch");
        W.col(b) = m.traded_weights();
    }
    MatrixXd out(T, N);
    for (Eigen::Index t = 0; t < T; ++t)
        out.row(t) = (W * positions.row(t).transpose()).transpose() /
                     static_cast<double>(B);
    return out;
}

}  // namespace mace
