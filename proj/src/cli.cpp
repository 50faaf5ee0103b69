#include "mace/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mace/data.hpp"
#include "mace/interpret.hpp"
#include "mace/metrics.hpp"
#include "mace/model.hpp"
#include "mace/serialize.hpp"
#include "mace/trading.hpp"

namespace mace::cli {

namespace {

using nlohmann::json;

constexpr std::uint64_t kWindowStream = 0x57494E44;    // expanding-window refits
constexpr std::uint64_t kBaselineStream = 0x42415345;  // random-portfolio draws

// === run configuration ===

struct DataPaths {
    std::string returns_csv;
    std::string features_csv;       // optional
    std::string benchmark_column;   // optional: column traded as the index benchmark
    std::string risk_free_column;   // optional: column used for excess returns
    MissingPolicy missing = MissingPolicy::Reject;
};

struct SplitSpec {
    std::string train_end_date;     // last training date, inclusive
    double train_fraction = -1.0;   // alternative to the date
    bool expanding = false;         // refit on a growing window over the test span
    int step = 3;                   // periods between refits
};

struct BaselineSpec {
    int n_random = 150;
    bool nonneg = true;
    bool include_stocks = true;
};

struct ShapleySpec {
    std::map<std::string, std::vector<std::string>> groups;  // label -> feature names
    int ma_window = 12;
};

struct RunConfig {
    std::string preset;  // recorded for provenance; values below are resolved
    DataPaths data;
    SplitSpec split;
    MaceConfig mace;
    int bag_size = 0;    // >= 2 fits a bag of strategies
    TradingConfig trading;
    std::vector<double> cost_sweep{0.0, 0.001, 0.002, 0.005};
    double periods_per_year = 252.0;
    double omega_threshold = 0.0;
    std::vector<SliceSpec> slices;
    BaselineSpec baseline;
    ShapleySpec shapley;
    std::string output_dir = "runs/out";
    std::uint64_t seed = 0;
    int threads = 0;
};

void apply_preset(RunConfig& c, const std::string& preset) {
    auto daily_common = [&c]() {
        c.mace.eta = 0.01;
        c.mace.s_max = 250;
        c.mace.stopping = StoppingRule::EarlyOob;
        c.mace.mode = FeatureMode::EndogenousLags;
        c.mace.max_lag = 21;
        c.mace.use_marx = true;
        c.mace.ridge.nonneg = false;
        c.mace.ridge.target_r2 = 0.01;
        c.mace.forest.mtry_fraction = 0.1;
        c.mace.forest.min_node_size = 200;
        c.mace.forest.block_size = 42;
        c.mace.forest.subsampling_rate = 0.8;
        c.mace.forest.n_trees = 1500;
        c.trading.gamma = 5.0;
        c.trading.vol_lookback = 252;
        c.trading.pm_lookback = 1000000;  // effectively the expanding mean
        c.periods_per_year = 252.0;
    };
    if (preset == "monthly") {
        c.mace.eta = 0.1;
        c.mace.s_max = 100;
        c.mace.stopping = StoppingRule::FixedSMax;
        c.mace.mode = FeatureMode::Exogenous;
        c.mace.ridge.nonneg = true;
        c.mace.ridge.target_r2 = 0.05;
        c.mace.forest.mtry_fraction = 1.0 / 3.0;
        c.mace.forest.min_node_size = 20;
        c.mace.forest.block_size = 24;
        c.mace.forest.subsampling_rate = 0.8;
        c.mace.forest.n_trees = 500;
        c.trading.gamma = 3.0;
        c.trading.vol_lookback = 60;
        c.trading.pm_lookback = 1000000;
        c.periods_per_year = 12.0;
    } else if (preset == "daily-20" || preset == "daily-50") {
        daily_common();
    } else if (preset == "daily-100") {
        daily_common();
        c.mace.eta = 0.05;
        c.mace.s_max = 500;
    } else {
        throw ConfigError("unknown preset '" + preset +
                          "' (expected monthly, daily-20, daily-50, daily-100)");
    }
}

// === config file parsing (JSON, preset first, file values override) ===

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

MissingPolicy missing_from_token(const std::string& s) {
    if (s == "reject") return MissingPolicy::Reject;
    if (s == "truncate-suffix") return MissingPolicy::TruncateSuffix;
    throw ConfigError("unknown missing policy '" + s + "'");
}

std::string missing_to_token(MissingPolicy p) {
    return p == MissingPolicy::Reject ? "reject" : "truncate-suffix";
}

void parse_mace(const json& j, MaceConfig& m) {
    maybe(j, "eta", m.eta);
    maybe(j, "s_max", m.s_max);
    if (j.contains("stopping"))
        m.stopping = stopping_from_token(j.at("stopping").get<std::string>());
    if (j.contains("mode"))
        m.mode = mode_from_token(j.at("mode").get<std::string>());
    if (j.contains("init"))
        m.init = init_from_token(j.at("init").get<std::string>());
    maybe(j, "horizon", m.horizon);
    maybe(j, "max_lag", m.max_lag);
    maybe(j, "use_marx", m.use_marx);
    maybe(j, "xi", m.xi);
    maybe(j, "stochastic_weights", m.stochastic_weights);
    maybe(j, "min_var_shrinkage", m.min_var_shrinkage);
    maybe(j, "init_subsample", m.init_subsample);
    maybe(j, "weight_tol", m.weight_tol);
    if (j.contains("forest")) {
        const json& f = j.at("forest");
        maybe(f, "n_trees", m.forest.n_trees);
        maybe(f, "mtry_fraction", m.forest.mtry_fraction);
        maybe(f, "min_node_size", m.forest.min_node_size);
        maybe(f, "block_size", m.forest.block_size);
        maybe(f, "subsampling_rate", m.forest.subsampling_rate);
        maybe(f, "n_threads", m.forest.n_threads);
    }
    if (j.contains("ridge")) {
        const json& r = j.at("ridge");
        maybe(r, "nonneg", m.ridge.nonneg);
        maybe(r, "intercept", m.ridge.intercept);
        maybe(r, "target_r2", m.ridge.target_r2);
        maybe(r, "lambda_min", m.ridge.lambda_min);
        maybe(r, "lambda_max", m.ridge.lambda_max);
        maybe(r, "r2_tol", m.ridge.r2_tol);
    }
}

RunConfig parse_config_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    RunConfig c;
    if (j.contains("preset") && !j.at("preset").is_null()) {
        c.preset = j.at("preset").get<std::string>();
        apply_preset(c, c.preset);
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        maybe(d, "returns_csv", c.data.returns_csv);
        maybe(d, "features_csv", c.data.features_csv);
        maybe(d, "benchmark_column", c.data.benchmark_column);
        maybe(d, "risk_free_column", c.data.risk_free_column);
        if (d.contains("missing_policy"))
            c.data.missing =
                missing_from_token(d.at("missing_policy").get<std::string>());
    }
    if (j.contains("split")) {
        const json& s = j.at("split");
        maybe(s, "train_end_date", c.split.train_end_date);
        maybe(s, "train_fraction", c.split.train_fraction);
        maybe(s, "expanding", c.split.expanding);
        maybe(s, "step", c.split.step);
    }
    if (j.contains("mace")) {
        parse_mace(j.at("mace"), c.mace);
        maybe(j.at("mace"), "bag_size", c.bag_size);
    }
    if (j.contains("trading")) {
        const json& t = j.at("trading");
        maybe(t, "gamma", c.trading.gamma);
        maybe(t, "position_min", c.trading.position_min);
        maybe(t, "position_max", c.trading.position_max);
        maybe(t, "vol_lookback", c.trading.vol_lookback);
        maybe(t, "pm_lookback", c.trading.pm_lookback);
        maybe(t, "cost_rate", c.trading.cost_rate);
        maybe(t, "cost_sweep", c.cost_sweep);
    }
    if (j.contains("metrics")) {
        const json& m = j.at("metrics");
        maybe(m, "periods_per_year", c.periods_per_year);
        maybe(m, "omega_threshold", c.omega_threshold);
    }
    if (j.contains("slices")) {
        for (const json& s : j.at("slices")) {
            SliceSpec spec;
            spec.name = s.at("name").get<std::string>();
            spec.from = s.at("from").get<std::string>();
            spec.to = s.at("to").get<std::string>();
            maybe(s, "complement", spec.complement);
            c.slices.push_back(std::move(spec));
        }
    }
    if (j.contains("baseline")) {
        const json& b = j.at("baseline");
        maybe(b, "n_random", c.baseline.n_random);
        maybe(b, "nonneg", c.baseline.nonneg);
        maybe(b, "include_stocks", c.baseline.include_stocks);
    }
    if (j.contains("shapley")) {
        const json& s = j.at("shapley");
        maybe(s, "ma_window", c.shapley.ma_window);
        if (s.contains("groups"))
            c.shapley.groups =
                s.at("groups").get<std::map<std::string, std::vector<std::string>>>();
    }
    maybe(j, "output_dir", c.output_dir);
    maybe(j, "seed", c.seed);
    maybe(j, "threads", c.threads);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: invalid JSON in '" + path + "': " + e.what());
    }
    try {
        return parse_config_json(j);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
}

json config_to_json(const RunConfig& c) {
    json j;
    j["preset"] = c.preset.empty() ? json() : json(c.preset);
    j["data"] = {{"returns_csv", c.data.returns_csv},
                 {"features_csv", c.data.features_csv},
                 {"benchmark_column", c.data.benchmark_column},
                 {"risk_free_column", c.data.risk_free_column},
                 {"missing_policy", missing_to_token(c.data.missing)}};
    j["split"] = {{"train_end_date", c.split.train_end_date},
                  {"train_fraction", c.split.train_fraction},
                  {"expanding", c.split.expanding},
                  {"step", c.split.step}};
    j["mace"] = {{"eta", c.mace.eta},
                 {"s_max", c.mace.s_max},
                 {"stopping", to_token(c.mace.stopping)},
                 {"mode", to_token(c.mace.mode)},
                 {"init", to_token(c.mace.init)},
                 {"horizon", c.mace.horizon},
                 {"max_lag", c.mace.max_lag},
                 {"use_marx", c.mace.use_marx},
                 {"xi", c.mace.xi},
                 {"stochastic_weights", c.mace.stochastic_weights},
                 {"min_var_shrinkage", c.mace.min_var_shrinkage},
                 {"init_subsample", c.mace.init_subsample},
                 {"weight_tol", c.mace.weight_tol},
                 {"bag_size", c.bag_size},
                 {"forest",
                  {{"n_trees", c.mace.forest.n_trees},
                   {"mtry_fraction", c.mace.forest.mtry_fraction},
                   {"min_node_size", c.mace.forest.min_node_size},
                   {"block_size", c.mace.forest.block_size},
                   {"subsampling_rate", c.mace.forest.subsampling_rate},
                   {"n_threads", c.mace.forest.n_threads}}},
                 {"ridge",
                  {{"nonneg", c.mace.ridge.nonneg},
                   {"intercept", c.mace.ridge.intercept},
                   {"target_r2", c.mace.ridge.target_r2},
                   {"lambda_min", c.mace.ridge.lambda_min},
                   {"lambda_max", c.mace.ridge.lambda_max},
                   {"r2_tol", c.mace.ridge.r2_tol}}}};
    j["trading"] = {{"gamma", c.trading.gamma},
                    {"position_min", c.trading.position_min},
                    {"position_max", c.trading.position_max},
                    {"vol_lookback", c.trading.vol_lookback},
                    {"pm_lookback", c.trading.pm_lookback},
                    {"cost_rate", c.trading.cost_rate},
                    {"cost_sweep", c.cost_sweep}};
    j["metrics"] = {{"periods_per_year", c.periods_per_year},
                    {"omega_threshold", c.omega_threshold}};
    json slices = json::array();
    for (const auto& s : c.slices)
        slices.push_back({{"name", s.name},
                          {"from", s.from},
                          {"to", s.to},
                          {"complement", s.complement}});
    j["slices"] = std::move(slices);
    j["baseline"] = {{"n_random", c.baseline.n_random},
                     {"nonneg", c.baseline.nonneg},
                     {"include_stocks", c.baseline.include_stocks}};
    j["shapley"] = {{"ma_window", c.shapley.ma_window},
                    {"groups", c.shapley.groups}};
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    return j;
}

// === dataset loading and splitting ===

struct Dataset {
    ReturnsPanel panel;                    // trading universe
    std::optional<FeatureMatrix> features;
    VectorXd benchmark;                    // size 0 when not configured
    VectorXd risk_free;
};

VectorXd extract_column(ReturnsPanel& p, const std::string& name) {
    const auto it = std::find(p.assets.begin(), p.assets.end(), name);
    if (it == p.assets.end())
        throw ConfigError("column '" + name + "' not found in the returns file");
    const Eigen::Index idx = it - p.assets.begin();
    VectorXd col = p.values.col(idx);
    MatrixXd rest(p.values.rows(), p.values.cols() - 1);
    rest << p.values.leftCols(idx), p.values.rightCols(p.values.cols() - idx - 1);
    p.values = std::move(rest);
    p.assets.erase(it);
    return col;
}

Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.data.returns_csv.empty())
        throw ConfigError("config: data.returns_csv is required");
    IngestOptions opt;
    opt.missing = cfg.data.missing;
    Dataset ds;
    ds.panel = load_returns_csv(cfg.data.returns_csv, opt);
    if (!cfg.data.benchmark_column.empty())
        ds.benchmark = extract_column(ds.panel, cfg.data.benchmark_column);
    if (!cfg.data.risk_free_column.empty())
        ds.risk_free = extract_column(ds.panel, cfg.data.risk_free_column);
    if (ds.panel.cols() < 2)
        throw DataError("fewer than 2 tradable assets remain after extracting "
                        "benchmark/risk-free columns");
    ds.panel.validate();
    if (!cfg.data.features_csv.empty()) {
        IngestOptions fopt;
        fopt.missing = cfg.data.missing;
        fopt.min_columns = 1;
        ds.features = load_features_csv(cfg.data.features_csv, fopt);
        if (ds.features->dates != ds.panel.dates)
            throw DataError("features and returns must share the same date axis");
    }
    if (cfg.mace.mode == FeatureMode::Exogenous && !ds.features)
        throw ConfigError("exogenous mode requires data.features_csv");
    return ds;
}

Eigen::Index resolve_train_end(const RunConfig& cfg, const ReturnsPanel& panel) {
    const bool have_date = !cfg.split.train_end_date.empty();
    const bool have_frac = cfg.split.train_fraction > 0.0;
    if (have_date == have_frac)
        throw ConfigError("config: set exactly one of split.train_end_date / "
                          "split.train_fraction");
    Eigen::Index train_end;
    if (have_date) {
        const std::string& tok = cfg.split.train_end_date;
        if (tok < panel.dates.front() || panel.dates.back() < tok)
            throw ConfigError("split.train_end_date '" + tok +
                              "' is outside the data range [" + panel.dates.front() +
                              ", " + panel.dates.back() + "]");
        train_end = std::upper_bound(panel.dates.begin(), panel.dates.end(), tok) -
                    panel.dates.begin();
    } else {
        if (cfg.split.train_fraction >= 1.0)
            throw ConfigError("split.train_fraction must be in (0, 1)");
        train_end = static_cast<Eigen::Index>(
            std::floor(cfg.split.train_fraction * static_cast<double>(panel.rows())));
    }
    if (train_end < 2 || train_end >= panel.rows())
        throw ConfigError("split leaves no usable train or test window");
    return train_end;
}

struct Window {
    Eigen::Index fit_end = 0;  // rows [0, fit_end) train this refit
    Eigen::Index oos_end = 0;  // rows [fit_end, oos_end) are scored by it
};

std::vector<Window> make_windows(Eigen::Index T, Eigen::Index train_end,
                                 const SplitSpec& split) {
    std::vector<Window> w;
    if (!split.expanding) {
        w.push_back({train_end, T});
        return w;
    }
    if (split.step < 1) throw ConfigError("split.step must be >= 1");
    for (Eigen::Index fit_end = train_end; fit_end < T;
         fit_end += static_cast<Eigen::Index>(split.step))
        w.push_back({fit_end,
                     std::min<Eigen::Index>(T, fit_end + static_cast<Eigen::Index>(
                                                             split.step))});
    return w;
}

std::uint64_t window_seed(const RunConfig& cfg, std::size_t w) {
    // fixed split reuses the config seed so `fit` artifacts match exactly
    if (!cfg.split.expanding && w == 0) return cfg.seed;
    return derive_seed(cfg.seed, kWindowStream, static_cast<std::uint64_t>(w));
}

ReturnsPanel head_panel(const ReturnsPanel& p, Eigen::Index n) {
    ReturnsPanel out;
    out.values = p.values.topRows(n);
    out.dates.assign(p.dates.begin(), p.dates.begin() + n);
    out.assets = p.assets;
    out.validate();
    return out;
}

FeatureMatrix head_features(const FeatureMatrix& x, Eigen::Index n) {
    FeatureMatrix out;
    out.values = x.values.topRows(n);
    out.dates.assign(x.dates.begin(), x.dates.begin() + n);
    out.names = x.names;
    out.validate();
    return out;
}

// === output plumbing ===

std::string fmt_double(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class RunDir {
public:
    RunDir(std::string dir, std::string command)
        : dir_(std::move(dir)), command_(std::move(command)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create output directory '" + dir_ + "'");
    }

    std::string path(const std::string& name) const { return dir_ + "/" + name; }

    void write_text(const std::string& name, const std::string& body) {
        std::ofstream out(path(name), std::ios::binary);
        if (!out) throw IoError("cannot write '" + path(name) + "'");
        out << body;
        if (!out) throw IoError("write failed for '" + path(name) + "'");
        files_.push_back(name);
    }

    void write_json(const std::string& name, const json& j) {
        write_text(name, j.dump(2) + "\n");
    }

    // manifest.json: every artifact of this run with a content hash
    void finish() {
        json manifest;
        manifest["format_version"] = kArtifactVersion;
        manifest["command"] = command_;
        json files = json::object();
        for (const std::string& name : files_) {
            std::ifstream in(path(name), std::ios::binary);
            if (!in) throw IoError("cannot hash '" + path(name) + "'");
            std::ostringstream ss;
            ss << in.rdbuf();
            const std::string bytes = ss.str();
            char hex[19];
            std::snprintf(hex, sizeof(hex), "0x%016llx",
                          static_cast<unsigned long long>(
                              fnv1a64(bytes.data(), bytes.size())));
            files[name] = {{"bytes", bytes.size()}, {"fnv1a64", hex}};
        }
        manifest["files"] = std::move(files);
        std::ofstream out(path("manifest.json"), std::ios::binary);
        if (!out) throw IoError("cannot write manifest");
        out << manifest.dump(2) << "\n";
    }

private:
    std::string dir_;
    std::string command_;
    std::vector<std::string> files_;
};

std::string history_csv(const std::vector<MaceModel>& members) {
    std::string s =
        "member,s,insample_mse,oob_rmse,weight_delta,lambda,ridge_r2,"
        "lambda_at_boundary,oob_filled,kkt_residual\n";
    for (std::size_t b = 0; b < members.size(); ++b) {
        for (const auto& r : members[b].history) {
            s += std::to_string(b) + "," + std::to_string(r.s) + "," +
                 fmt_double(r.insample_mse) + "," + fmt_double(r.oob_rmse) + "," +
                 fmt_double(r.weight_delta) + "," + fmt_double(r.lambda) + "," +
                 fmt_double(r.ridge_r2) + "," +
                 (r.lambda_at_boundary ? "1" : "0") + "," +
                 std::to_string(r.oob_filled) + "," + fmt_double(r.kkt_residual) +
                 "\n";
        }
    }
    return s;
}

// === strategy construction for the backtest ===

// per-window forest forecasts of an externally fixed portfolio series
VectorXd rf_forecasts_for_series(const VectorXd& y, const Dataset& ds,
                                 const RunConfig& cfg,
                                 const std::vector<Window>& windows,
                                 std::uint64_t salt) {
    const Eigen::Index T = y.size();
    const int h = cfg.mace.horizon;
    VectorXd out = VectorXd::Constant(T, std::nan(""));
    const bool endo = cfg.mace.mode == FeatureMode::EndogenousLags;
    const int L = cfg.mace.max_lag;

    FeatureMatrix full_lags;
    if (endo) full_lags = lag_features(y, {}, L, cfg.mace.use_marx);

    for (std::size_t w = 0; w < windows.size(); ++w) {
        const Eigen::Index fit_end = windows[w].fit_end;
        MatrixXd Xtr;
        VectorXd ytr;
        if (endo) {
            const Eigen::Index n_tr = fit_end - L - h + 1;
            if (n_tr < 2 * cfg.mace.forest.min_node_size)
                throw FitError("benchmark forecasts: training window too short");
            FeatureMatrix lf =
                lag_features(y.head(fit_end), {}, L, cfg.mace.use_marx);
            Xtr = lf.values.topRows(n_tr);
            ytr = y.segment(L + h - 1, n_tr);
        } else {
            const Eigen::Index n_tr = fit_end - h;
            if (n_tr < 2 * cfg.mace.forest.min_node_size)
                throw FitError("benchmark forecasts: training window too short");
            Xtr = ds.features->values.topRows(n_tr);
            ytr = y.segment(h, n_tr);
        }
        ForestConfig fcfg = cfg.mace.forest;
        fcfg.seed = derive_seed(window_seed(cfg, w), salt);
        Forest forest = fit_forest(Xtr, ytr, fcfg);
        for (Eigen::Index tau = fit_end; tau < windows[w].oos_end; ++tau) {
            if (endo) {
                const Eigen::Index row = tau - h - L + 1;
                if (row < 0) continue;
                out(tau) = predict(forest, full_lags.values.row(row))(0);
            } else {
                out(tau) = predict(forest, ds.features->values.row(tau - h))(0);
            }
        }
    }
    return out;
}

VectorXd mask_to_test(VectorXd v, Eigen::Index test_start) {
    for (Eigen::Index t = 0; t < std::min(test_start, v.size()); ++t)
        v(t) = std::nan("");
    return v;
}

// fits (or loads) the MACE model for one window
MaceModel fit_window_model(const Dataset& ds, const RunConfig& cfg,
                           const Window& win, std::uint64_t seed) {
    MaceConfig mc = cfg.mace;
    mc.seed = seed;
    ReturnsPanel train = head_panel(ds.panel, win.fit_end);
    if (mc.mode == FeatureMode::Exogenous) {
        FeatureMatrix fx = head_features(*ds.features, win.fit_end);
        return fit(train, &fx, mc);
    }
    return fit(train, nullptr, mc);
}

BagOfStrategies fit_window_bag(const Dataset& ds, const RunConfig& cfg,
                               const Window& win, std::uint64_t seed) {
    MaceConfig mc = cfg.mace;
    mc.seed = seed;
    ReturnsPanel train = head_panel(ds.panel, win.fit_end);
    if (mc.mode == FeatureMode::Exogenous) {
        FeatureMatrix fx = head_features(*ds.features, win.fit_end);
        return fit_bag(train, &fx, mc, cfg.bag_size);
    }
    return fit_bag(train, nullptr, mc, cfg.bag_size);
}

// forecast series of a fitted model over the full panel, in traded units
VectorXd model_forecasts(const MaceModel& m, const Dataset& ds) {
    const FeatureMatrix* X =
        m.mode == FeatureMode::Exogenous ? &ds.features.value() : nullptr;
    return forecast_series(m, ds.panel, X) * m.traded_scale();
}

// stitched MACE strategy: per-window traded weights, realized series, forecasts
struct MaceStitch {
    VectorXd y;
    VectorXd forecast;
    MatrixXd weights;
    std::vector<MaceModel> window_models;
};

MaceStitch stitch_mace(const Dataset& ds, const RunConfig& cfg,
                       const std::vector<Window>& windows,
                       std::vector<MaceModel> preloaded = {}) {
    const Eigen::Index T = ds.panel.rows();
    const Eigen::Index N = ds.panel.cols();
    MaceStitch st;
    st.y = VectorXd::Zero(T);
    st.forecast = VectorXd::Constant(T, std::nan(""));
    st.weights = MatrixXd::Zero(T, N);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        MaceModel model = w < preloaded.size()
                              ? std::move(preloaded[w])
                              : fit_window_model(ds, cfg, windows[w],
                                                 window_seed(cfg, w));
        const VectorXd tw = model.traded_weights();
        const VectorXd fc = model_forecasts(model, ds);
        if (w == 0) {  // in-sample history replayed with the first window's book
            for (Eigen::Index t = 0; t < windows[0].fit_end; ++t) {
                st.y(t) = ds.panel.values.row(t).dot(tw);
                st.weights.row(t) = tw.transpose();
            }
        }
        for (Eigen::Index t = windows[w].fit_end; t < windows[w].oos_end; ++t) {
            st.y(t) = ds.panel.values.row(t).dot(tw);
            st.weights.row(t) = tw.transpose();
            st.forecast(t) = fc(t);
        }
        st.window_models.push_back(std::move(model));
    }
    return st;
}

json bundle_json(const VectorXd& r, double ppy, double theta) {
    json j;
    const double sd = r.size() > 1 ? sample_std(r) : 0.0;
    if (r.size() < 4 || !(sd > 0.0)) {
        // degenerate (e.g. all-flat) strategies still report what is defined
        j["n"] = r.size();
        j["mean"] = r.size() ? r.mean() : 0.0;
        j["std_dev"] = sd;
        j["annualized_return"] = r.size() ? r.mean() * ppy : 0.0;
        j["sharpe"] = nullptr;
        j["omega"] = nullptr;
        j["omega_finite"] = false;
        j["max_drawdown"] = r.size() ? max_drawdown(r) : 0.0;
        j["skewness"] = nullptr;
        j["kurtosis"] = nullptr;
        j["flat"] = true;
        return j;
    }
    MetricsBundle b = compute_metrics(r, ppy, theta);
    j["n"] = b.n;
    j["mean"] = b.mean;
    j["std_dev"] = b.std_dev;
    j["annualized_return"] = b.annualized_return;
    j["sharpe"] = b.sharpe;
    j["omega"] = b.omega_finite ? json(b.omega) : json();
    j["omega_finite"] = b.omega_finite;
    j["max_drawdown"] = b.max_drawdown;
    j["skewness"] = b.skewness;
    j["kurtosis"] = b.kurtosis;
    j["flat"] = false;
    return j;
}

std::string backtest_csv_with_forecast(const BacktestResult& bt, const VectorXd& fc) {
    std::string s = "date,forecast,position,gross,net,turnover,cost\n";
    for (Eigen::Index t = 0; t < bt.positions.size(); ++t) {
        s += bt.dates[static_cast<std::size_t>(t)] + "," + fmt_double(fc(t)) + "," +
             fmt_double(bt.positions(t)) + "," + fmt_double(bt.gross(t)) + "," +
             fmt_double(bt.net(t)) + "," + fmt_double(bt.turnover(t)) + "," +
             fmt_double(bt.costs(t)) + "\n";
    }
    return s;
}

// === commands ===

void apply_thread_cap(RunConfig& cfg) {
    if (cfg.threads > 0) cfg.mace.forest.n_threads = cfg.threads;
}

int cmd_fit(RunConfig cfg) {
    apply_thread_cap(cfg);
    cfg.mace.validate();
    cfg.trading.validate();
    Dataset ds = load_dataset(cfg);
    const Eigen::Index train_end = resolve_train_end(cfg, ds.panel);
    const Window win{train_end, ds.panel.rows()};

    RunDir out(cfg.output_dir, "fit");
    std::vector<MaceModel> members;
    if (cfg.bag_size >= 2) {
        BagOfStrategies bag = fit_window_bag(ds, cfg, win, cfg.seed);
        out.write_json("bag.json", bag_to_json(bag));
        members = std::move(bag.members);
    } else {
        MaceModel model = fit_window_model(ds, cfg, win, cfg.seed);
        out.write_json("model.json", model_to_json(model));
        members.push_back(std::move(model));
    }
    out.write_text("history.csv", history_csv(members));
    out.write_json("resolved_config.json", config_to_json(cfg));
    out.finish();
    return kExitOk;
}

int cmd_backtest(RunConfig cfg, const std::string& model_path) {
    apply_thread_cap(cfg);
    cfg.mace.validate();
    cfg.trading.validate();
    Dataset ds = load_dataset(cfg);
    const Eigen::Index T = ds.panel.rows();
    const Eigen::Index N = ds.panel.cols();
    const Eigen::Index train_end = resolve_train_end(cfg, ds.panel);
    const std::vector<Window> windows = make_windows(T, train_end, cfg.split);
    const Eigen::Index test_len = T - train_end;

    // optional pre-fitted artifact (fixed split only; expanding refits anyway)
    std::vector<MaceModel> preloaded;
    std::optional<BagOfStrategies> pre_bag;
    if (!model_path.empty()) {
        if (cfg.split.expanding)
            throw ConfigError("expanding backtests refit internally; do not "
                              "pass --model");
        const json art = load_json(model_path);
        const std::string kind = art.value("kind", "");
        if (kind == "mace_bag") {
            pre_bag = bag_from_json(art);
            for (const auto& m : pre_bag->members)
                if (m.asset_names != ds.panel.assets)
                    throw ArtifactError("artifact: asset axis does not match the data");
        } else {
            MaceModel m = model_from_json(art);
            if (m.asset_names != ds.panel.assets)
                throw ArtifactError("artifact: asset axis does not match the data");
            preloaded.push_back(std::move(m));
        }
    }

    struct Scored {
        std::string name;
        BacktestResult bt;
        VectorXd forecast;
        VectorXd y;
    };
    std::vector<Scored> results;

    TradingConfig tc = cfg.trading;

    auto run_strategy = [&](const std::string& name, const VectorXd& y,
                            const VectorXd& fc, const MatrixXd& weights,
                            const MatrixXd& exposure) {
        BacktestResult bt =
            run_backtest(y, mask_to_test(fc, train_end), weights, exposure,
                         ds.panel.dates, tc);
        results.push_back({name, std::move(bt), mask_to_test(fc, train_end), y});
    };

    // --- the MACE strategy (model or bag) ---
    if (cfg.bag_size >= 2 || pre_bag) {
        // one bag per window; members' positions collapse into exact weights
        MatrixXd w_bag = MatrixXd::Zero(T, N);
        VectorXd mean_fc = VectorXd::Constant(T, std::nan(""));
        VectorXd mean_pos = VectorXd::Zero(T);
        VectorXd y_avg = VectorXd::Zero(T);     // average member book, for PM
        MatrixXd w_avg = MatrixXd::Zero(T, N);
        Eigen::Index n_clamped = 0;
        for (std::size_t w = 0; w < windows.size(); ++w) {
            BagOfStrategies bag =
                (w == 0 && pre_bag)
                    ? std::move(*pre_bag)
                    : fit_window_bag(ds, cfg, windows[w], window_seed(cfg, w));
            const auto B = static_cast<Eigen::Index>(bag.members.size());
            MatrixXd positions = MatrixXd::Zero(T, B);
            MatrixXd fcs(T, B);
            TradingConfig free_tc = tc;
            free_tc.cost_rate = 0.0;  // costs apply to the collapsed book only
            for (Eigen::Index b = 0; b < B; ++b) {
                const auto& m = bag.members[static_cast<std::size_t>(b)];
                const VectorXd tw = m.traded_weights();
                VectorXd y_b(T);
                for (Eigen::Index t = 0; t < T; ++t)
                    y_b(t) = ds.panel.values.row(t).dot(tw);
                const VectorXd fc_b =
                    mask_to_test(model_forecasts(m, ds), train_end);
                MatrixXd W_b = tw.transpose().replicate(T, 1);
                BacktestResult bt_b = run_backtest(y_b, fc_b, W_b,
                                                   ds.panel.values,
                                                   ds.panel.dates, free_tc);
                positions.col(b) = bt_b.positions;
                fcs.col(b) = fc_b;
                n_clamped += bt_b.n_clamped;
            }
            MatrixXd collapsed = collapse_bag(bag, positions);
            for (Eigen::Index t = windows[w].fit_end; t < windows[w].oos_end; ++t) {
                w_bag.row(t) = collapsed.row(t);
                mean_fc(t) = fcs.row(t).mean();
                mean_pos(t) = positions.row(t).mean();
            }
            // average member book carries the PM variant and the pre-test history
            VectorXd tw_avg = VectorXd::Zero(N);
            for (const auto& m : bag.members) tw_avg += m.traded_weights();
            tw_avg /= static_cast<double>(bag.members.size());
            const Eigen::Index from = (w == 0) ? 0 : windows[w].fit_end;
            for (Eigen::Index t = from; t < windows[w].oos_end; ++t) {
                y_avg(t) = ds.panel.values.row(t).dot(tw_avg);
                w_avg.row(t) = tw_avg.transpose();
            }
        }
        WeightPathResult path = account_weight_path(w_bag, ds.panel.values, tc);
        Eigen::Index warm = 0;
        while (warm < T && w_bag.row(warm).isZero(0.0)) ++warm;
        BacktestResult bt;
        bt.dates = ds.panel.dates;
        bt.positions = mean_pos;
        bt.gross = std::move(path.gross);
        bt.net = std::move(path.net);
        bt.costs = std::move(path.costs);
        bt.turnover = std::move(path.turnover);
        bt.effective_weights = std::move(w_bag);
        bt.warmup = warm;
        bt.n_clamped = n_clamped;
        bt.flagged = std::move(path.flagged);
        // forecast quality is scored on the average member book, which is
        // what the averaged forecasts target
        results.push_back({"mace_rf", std::move(bt), mean_fc, y_avg});

        run_strategy("mace_pm", y_avg,
                     pm_forecasts(y_avg, tc.pm_lookback), w_avg, ds.panel.values);
    } else {
        MaceStitch st = stitch_mace(ds, cfg, windows, std::move(preloaded));
        run_strategy("mace_rf", st.y, st.forecast, st.weights, ds.panel.values);
        run_strategy("mace_pm", st.y, pm_forecasts(st.y, tc.pm_lookback),
                     st.weights, ds.panel.values);
    }

    // --- equal-weight benchmark ---
    {
        const VectorXd w_ew = VectorXd::Constant(N, 1.0 / static_cast<double>(N));
        const VectorXd y = ds.panel.values * w_ew;
        const MatrixXd W = w_ew.transpose().replicate(T, 1);
        run_strategy("ew_rf", y,
                     rf_forecasts_for_series(y, ds, cfg, windows, 0x45575246),
                     W, ds.panel.values);
        run_strategy("ew_pm", y, pm_forecasts(y, tc.pm_lookback), W,
                     ds.panel.values);
    }

    // --- minimum-variance benchmark (weights refit per window) ---
    {
        VectorXd y = VectorXd::Zero(T);
        MatrixXd W = MatrixXd::Zero(T, N);
        for (std::size_t w = 0; w < windows.size(); ++w) {
            const VectorXd mw = min_variance_weights(
                ds.panel.values.topRows(windows[w].fit_end),
                cfg.mace.min_var_shrinkage);
            const Eigen::Index from = (w == 0) ? 0 : windows[w].fit_end;
            for (Eigen::Index t = from; t < windows[w].oos_end; ++t) {
                y(t) = ds.panel.values.row(t).dot(mw);
                W.row(t) = mw.transpose();
            }
        }
        run_strategy("minvar_rf", y,
                     rf_forecasts_for_series(y, ds, cfg, windows, 0x4D565246),
                     W, ds.panel.values);
        run_strategy("minvar_pm", y, pm_forecasts(y, tc.pm_lookback), W,
                     ds.panel.values);
    }

    // --- index benchmark when a benchmark column is configured ---
    MatrixXd bench_mat;
    if (ds.benchmark.size() == T) {
        bench_mat = ds.benchmark;
        const MatrixXd W = MatrixXd::Ones(T, 1);
        run_strategy("bench_rf", ds.benchmark,
                     rf_forecasts_for_series(ds.benchmark, ds, cfg, windows,
                                             0x42524646),
                     W, bench_mat);
        run_strategy("bench_pm", ds.benchmark,
                     pm_forecasts(ds.benchmark, tc.pm_lookback), W, bench_mat);
    }

    // --- score the test window ---
    RunDir out(cfg.output_dir, "backtest");
    json metrics;
    metrics["format_version"] = kArtifactVersion;
    metrics["train_end_index"] = train_end;
    metrics["test_start_date"] = ds.panel.dates[static_cast<std::size_t>(train_end)];
    metrics["test_length"] = test_len;
    metrics["n_refits"] = windows.size();
    metrics["expanding"] = cfg.split.expanding;

    std::vector<std::string> test_dates(
        ds.panel.dates.begin() + train_end, ds.panel.dates.end());
    json strat_arr = json::array();
    json sweep_json = json::array();

    for (const auto& sc : results) {
        const VectorXd net = sc.bt.net.tail(test_len);
        const VectorXd gross = sc.bt.gross.tail(test_len);
        const VectorXd turn = sc.bt.turnover.tail(test_len);
        json s;
        s["name"] = sc.name;
        s["gross"] = bundle_json(gross, cfg.periods_per_year, cfg.omega_threshold);
        s["net"] = bundle_json(net, cfg.periods_per_year, cfg.omega_threshold);
        if (ds.risk_free.size() == T) {
            const VectorXd excess = net - ds.risk_free.tail(test_len);
            s["net_excess"] =
                bundle_json(excess, cfg.periods_per_year, cfg.omega_threshold);
        }
        s["mean_turnover"] = turn.mean();
        s["n_clamped"] = sc.bt.n_clamped;
        s["n_flagged"] = sc.bt.flagged.size();

        // forecast quality against the strategy's own prevailing mean
        const VectorXd y_test = sc.y.tail(test_len);
        const VectorXd fc_test = sc.forecast.tail(test_len);
        const VectorXd pm_test =
            pm_forecasts(sc.y, tc.pm_lookback).tail(test_len);
        bool scoreable = fc_test.allFinite() && pm_test.allFinite();
        if (scoreable) {
            s["oos_r2"] = oos_r2(y_test, fc_test, pm_test);
            try {
                s["pred_corr"] = pearson_corr(fc_test, y_test);
            } catch (const std::invalid_argument&) {
                s["pred_corr"] = nullptr;
            }
            if (!cfg.slices.empty()) {
                json sl = json::array();
                for (const auto& r :
                     slice_r2(y_test, fc_test, pm_test, test_dates, cfg.slices))
                    sl.push_back({{"name", r.name}, {"r2", r.r2}, {"n", r.n}});
                s["slices"] = std::move(sl);
            }
        } else {
            s["oos_r2"] = nullptr;
            s["pred_corr"] = nullptr;
        }
        strat_arr.push_back(std::move(s));

        out.write_text("backtest_" + sc.name + ".csv",
                       backtest_csv_with_forecast(sc.bt, sc.forecast));
    }
    metrics["strategies"] = std::move(strat_arr);

    // transaction-cost sweep: net returns re-derived at each cost rate
    std::string sweep_csv = "cost_rate,strategy,annualized_net,sharpe_net\n";
    for (double c : cfg.cost_sweep) {
        json row;
        row["cost_rate"] = c;
        json per = json::object();
        for (const auto& sc : results) {
            const VectorXd net_c =
                (sc.bt.gross - c * sc.bt.turnover).tail(test_len);
            const double ann = net_c.mean() * cfg.periods_per_year;
            double sharpe = std::nan("");
            if (net_c.size() > 1 && sample_std(net_c) > 0.0)
                sharpe = sharpe_ratio(net_c, cfg.periods_per_year);
            per[sc.name] = {{"annualized_net", ann},
                            {"sharpe_net", std::isnan(sharpe) ? json() : json(sharpe)}};
            sweep_csv += fmt_double(c) + "," + sc.name + "," + fmt_double(ann) +
                         "," + fmt_double(sharpe) + "\n";
        }
        row["strategies"] = std::move(per);
        sweep_json.push_back(std::move(row));
    }
    metrics["tc_sweep"] = std::move(sweep_json);

    out.write_json("metrics.json", metrics);
    out.write_text("tc_sweep.csv", sweep_csv);
    out.write_json("resolved_config.json", config_to_json(cfg));
    out.finish();
    return kExitOk;
}

int cmd_baseline(RunConfig cfg) {
    apply_thread_cap(cfg);
    cfg.mace.validate();
    Dataset ds = load_dataset(cfg);
    const Eigen::Index train_end = resolve_train_end(cfg, ds.panel);

    BaselineConfig bc;
    bc.n_random = cfg.baseline.n_random;
    bc.nonneg = cfg.baseline.nonneg;
    bc.horizon = cfg.mace.horizon;
    bc.max_lag = cfg.mace.max_lag;
    bc.use_marx = cfg.mace.use_marx;
    bc.forest = cfg.mace.forest;
    bc.train_end = train_end;
    bc.seed = derive_seed(cfg.seed, kBaselineStream);
    bc.include_stocks = cfg.baseline.include_stocks;

    const FeatureMatrix* X =
        cfg.mace.mode == FeatureMode::Exogenous ? &ds.features.value() : nullptr;
    BaselineResult base = random_baseline(ds.panel, X, bc);

    // the model's own OOS forecast quality, scored the same way as the draws
    MaceModel model =
        fit_window_model(ds, cfg, Window{train_end, ds.panel.rows()}, cfg.seed);
    const VectorXd z = ds.panel.values * model.w.w;
    const VectorXd fc = forecast_series(model, ds.panel, X);
    const Eigen::Index test_len = ds.panel.rows() - train_end;
    const VectorXd y_test = z.tail(test_len);
    const VectorXd fc_test = fc.tail(test_len);
    if (!fc_test.allFinite())
        throw FitError("baseline: undefined model forecasts over the test window");
    const VectorXd pm_test =
        VectorXd::Constant(test_len, z.head(train_end).mean());
    const double model_r2 = oos_r2(y_test, fc_test, pm_test);

    Eigen::Index not_above = 0;
    std::vector<double> port_r2;
    for (const auto& d : base.portfolios) {
        port_r2.push_back(d.oos_r2);
        if (d.oos_r2 <= model_r2) ++not_above;
    }
    std::sort(port_r2.begin(), port_r2.end());
    const double median =
        port_r2.size() % 2 == 1
            ? port_r2[port_r2.size() / 2]
            : 0.5 * (port_r2[port_r2.size() / 2 - 1] + port_r2[port_r2.size() / 2]);

    RunDir out(cfg.output_dir, "baseline");
    std::string csv = "kind,id,train_r2_oob,oos_r2\n";
    for (const auto& d : base.portfolios)
        csv += "portfolio," + d.id + "," + fmt_double(d.train_r2_oob) + "," +
               fmt_double(d.oos_r2) + "\n";
    for (const auto& d : base.stocks)
        csv += "stock," + d.id + "," + fmt_double(d.train_r2_oob) + "," +
               fmt_double(d.oos_r2) + "\n";
    out.write_text("baseline.csv", csv);

    json summary;
    summary["format_version"] = kArtifactVersion;
    summary["n_random"] = cfg.baseline.n_random;
    summary["model_oos_r2"] = model_r2;
    summary["model_percentile"] =
        static_cast<double>(not_above) / static_cast<double>(port_r2.size());
    summary["median_random_oos_r2"] = median;
    summary["top_train_index"] = base.top_train_index;
    summary["top_train_oos_r2"] =
        base.portfolios[static_cast<std::size_t>(base.top_train_index)].oos_r2;
    out.write_json("baseline_summary.json", summary);
    out.write_json("resolved_config.json", config_to_json(cfg));
    out.finish();
    return kExitOk;
}

int cmd_shapley(RunConfig cfg) {
    apply_thread_cap(cfg);
    cfg.mace.validate();
    Dataset ds = load_dataset(cfg);
    const Eigen::Index T = ds.panel.rows();
    const Eigen::Index train_end = resolve_train_end(cfg, ds.panel);
    const std::vector<Window> windows = make_windows(T, train_end, cfg.split);
    const int h = cfg.mace.horizon;
    const bool endo = cfg.mace.mode == FeatureMode::EndogenousLags;
    const int L = cfg.mace.max_lag;

    MatrixXd phi;            // stitched test-row attributions
    VectorXd baseline_vec;   // per-row tree baseline (window dependent)
    VectorXd pred_vec;
    std::vector<std::string> feat_names;
    std::vector<std::string> row_dates;
    std::vector<OosWindow> spans;
    MatrixXd dispersion_features;  // window-0 design for the adjusted VI
    Eigen::Index disp_offset = 0;  // its feature-row to target-row shift

    Eigen::Index row_cursor = 0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        MaceModel model =
            fit_window_model(ds, cfg, windows[w], window_seed(cfg, w));
        MatrixXd F_full;
        Eigen::Index shift;  // feature row r pairs with target row r + shift
        if (endo) {
            const VectorXd z = ds.panel.values * model.w.w;
            F_full = lag_features(z, {}, L, model.use_marx).values;
            shift = L + h - 1;
        } else {
            F_full = ds.features->values;
            shift = h;
        }
        const Eigen::Index lo = windows[w].fit_end, hi = windows[w].oos_end;
        MatrixXd F_test(hi - lo, F_full.cols());
        for (Eigen::Index tau = lo; tau < hi; ++tau) {
            const Eigen::Index row = tau - shift;
            if (row < 0)
                throw FitError("shapley: test rows precede the feature design");
            F_test.row(tau - lo) = F_full.row(row);
        }
        std::vector<std::string> dates(
            ds.panel.dates.begin() + lo, ds.panel.dates.begin() + hi);
        ShapleyMatrix sm =
            tree_shapley(model.forest, F_test, model.feature_names, dates);
        if (w == 0) {
            feat_names = sm.names;
            phi.resize(T - train_end, sm.phi.cols());
            baseline_vec.resize(T - train_end);
            pred_vec.resize(T - train_end);
            dispersion_features = std::move(F_full);
            disp_offset = shift;
        } else if (sm.names != feat_names) {
            throw FitError("shapley: feature axis changed between windows");
        }
        phi.middleRows(row_cursor, hi - lo) = sm.phi;
        baseline_vec.segment(row_cursor, hi - lo).setConstant(sm.baseline);
        pred_vec.segment(row_cursor, hi - lo) = sm.prediction;
        for (const auto& d : dates) row_dates.push_back(d);
        spans.push_back({row_cursor, row_cursor + (hi - lo) - 1});
        row_cursor += hi - lo;
    }

    // local accuracy audit across every attributed observation
    double max_gap = 0.0;
    for (Eigen::Index r = 0; r < phi.rows(); ++r)
        max_gap = std::max(max_gap, std::fabs(baseline_vec(r) + phi.row(r).sum() -
                                              pred_vec(r)));
    if (max_gap > 1e-8)
        throw FitError("shapley: local accuracy audit failed (max gap " +
                       std::to_string(max_gap) + ")");

    const VectorXd vi = vi_oos(phi, spans);

    // dispersion adjustment from the first window's design
    const Eigen::Index ins_end = windows[0].fit_end - disp_offset;
    VectorXd vi_adj = vi_adjusted(
        vi, dispersion_features, {0, ins_end - 1},
        {ins_end, dispersion_features.rows() - 1}, cfg.shapley.ma_window);

    RunDir out(cfg.output_dir, "shapley");
    {
        std::string csv = "date,baseline,prediction";
        for (const auto& n : feat_names) csv += ",phi_" + n;
        csv += "\n";
        for (Eigen::Index r = 0; r < phi.rows(); ++r) {
            csv += row_dates[static_cast<std::size_t>(r)] + "," +
                   fmt_double(baseline_vec(r)) + "," + fmt_double(pred_vec(r));
            for (Eigen::Index j = 0; j < phi.cols(); ++j)
                csv += "," + fmt_double(phi(r, j));
            csv += "\n";
        }
        out.write_text("shapley_phi.csv", csv);
    }
    {
        std::string csv = "feature,vi,vi_adjusted\n";
        for (Eigen::Index j = 0; j < vi.size(); ++j)
            csv += feat_names[static_cast<std::size_t>(j)] + "," +
                   fmt_double(vi(j)) + "," + fmt_double(vi_adj(j)) + "\n";
        out.write_text("vi.csv", csv);
    }

    // grouped importance and timeline (groups given as feature-name lists)
    std::vector<std::vector<int>> group_indices;
    std::vector<std::string> group_labels;
    if (!cfg.shapley.groups.empty()) {
        std::map<std::string, std::vector<int>> by_index;
        for (const auto& [label, names] : cfg.shapley.groups) {
            std::vector<int> idx;
            for (const auto& n : names) {
                const auto it =
                    std::find(feat_names.begin(), feat_names.end(), n);
                if (it == feat_names.end())
                    throw ConfigError("shapley group '" + label +
                                      "' references unknown feature '" + n + "'");
                idx.push_back(static_cast<int>(it - feat_names.begin()));
            }
            by_index[label] = idx;
            group_labels.push_back(label);
            group_indices.push_back(std::move(idx));
        }
        std::string csv = "group,vi\n";
        for (const auto& [label, v] : vi_grouped(vi, feat_names, by_index))
            csv += label + "," + fmt_double(v) + "\n";
        out.write_text("vi_grouped.csv", csv);
    }
    {
        const auto tl = group_indices.empty()
                            ? top_contributor_timeline(phi)
                            : top_contributor_timeline(phi, group_indices);
        std::string csv = "date,winner,tie,all_zero\n";
        for (const auto& e : tl) {
            const std::string label =
                group_indices.empty()
                    ? feat_names[static_cast<std::size_t>(e.feature)]
                    : group_labels[static_cast<std::size_t>(e.feature)];
            csv += row_dates[static_cast<std::size_t>(e.row)] + "," + label + "," +
                   (e.tie ? "1" : "0") + "," + (e.all_zero ? "1" : "0") + "\n";
        }
        out.write_text("timeline.csv", csv);
    }
    json summary;
    summary["format_version"] = kArtifactVersion;
    summary["rows"] = phi.rows();
    summary["n_windows"] = windows.size();
    summary["max_local_accuracy_gap"] = max_gap;
    summary["features"] = feat_names;
    out.write_json("shapley_summary.json", summary);
    out.write_json("resolved_config.json", config_to_json(cfg));
    out.finish();
    return kExitOk;
}

int cmd_report(const std::string& dir) {
    const json metrics = load_json(dir + "/metrics.json");
    if (!metrics.contains("strategies"))
        throw ArtifactError("artifact: '" + dir +
                            "/metrics.json' has no strategies section");

    auto cell = [](const json& v) -> std::string {
        if (v.is_null()) return "-";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v.get<double>());
        return buf;
    };

    const std::vector<std::pair<std::string, std::string>> cols = {
        {"oos_r2", "OOS R2"},        {"ann_gross", "AnnRet(g)"},
        {"ann_net", "AnnRet(n)"},    {"sharpe", "Sharpe(n)"},
        {"omega", "Omega(n)"},       {"maxdd", "MaxDD(n)"},
        {"skew", "Skew"},            {"kurt", "Kurt"},
        {"turnover", "Turnover"}};

    std::string csv = "strategy";
    for (const auto& c : cols) csv += "," + c.first;
    csv += "\n";

    std::vector<std::vector<std::string>> table;
    for (const auto& s : metrics.at("strategies")) {
        const json& net = s.at("net");
        const json& gross = s.at("gross");
        std::vector<std::string> row;
        row.push_back(s.at("name").get<std::string>());
        row.push_back(cell(s.at("oos_r2")));
        row.push_back(cell(gross.at("annualized_return")));
        row.push_back(cell(net.at("annualized_return")));
        row.push_back(cell(net.at("sharpe")));
        row.push_back(cell(net.at("omega")));
        row.push_back(cell(net.at("max_drawdown")));
        row.push_back(cell(net.at("skewness")));
        row.push_back(cell(net.at("kurtosis")));
        row.push_back(cell(s.at("mean_turnover")));
        for (std::size_t i = 0; i < row.size(); ++i)
            csv += (i ? "," : "") + row[i];
        csv += "\n";
        table.push_back(std::move(row));
    }

    // fixed-width text rendering
    std::vector<std::size_t> widths(cols.size() + 1, 8);
    widths[0] = 10;
    for (const auto& row : table)
        for (std::size_t i = 0; i < row.size(); ++i)
            widths[i] = std::max(widths[i], row[i].size() + 2);
    std::string txt = "strategy";
    txt.append(widths[0] - 8, ' ');
    for (std::size_t i = 0; i < cols.size(); ++i) {
        txt += cols[i].second;
        txt.append(widths[i + 1] > cols[i].second.size()
                       ? widths[i + 1] - cols[i].second.size()
                       : 1,
                   ' ');
    }
    txt += "\n";
    for (const auto& row : table) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            txt += row[i];
            txt.append(widths[i] > row[i].size() ? widths[i] - row[i].size() : 1,
                       ' ');
        }
        txt += "\n";
    }
    if (metrics.contains("tc_sweep")) {
        txt += "\ntransaction-cost sweep (annualized net)\n";
        for (const auto& row : metrics.at("tc_sweep")) {
            txt += "  c=" + cell(row.at("cost_rate")) + ":";
            for (const auto& [name, v] : row.at("strategies").items())
                txt += "  " + name + "=" + cell(v.at("annualized_net"));
            txt += "\n";
        }
    }

    RunDir out(dir, "report");
    out.write_text("report.csv", csv);
    out.write_text("report.txt", txt);
    out.finish();
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"maximally machine-learnable portfolios: fit, trade, interpret"};
    app.require_subcommand(1);

    std::string config_path, out_override, model_path, report_dir, returns_override;
    std::int64_t seed_override = -1;
    int threads_override = -1;
    int bag_override = -1;
    int n_random_override = -1;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        sub->add_option("-c,--config", config_path, "run configuration JSON")
            ->required(config_required);
        sub->add_option("-o,--out", out_override, "output directory override");
        sub->add_option("--seed", seed_override, "seed override");
        sub->add_option("--threads", threads_override,
                        "cap on worker threads (0 = hardware)");
        sub->add_option("--returns", returns_override, "returns CSV override");
    };

    CLI::App* fit_cmd = app.add_subcommand("fit", "fit a model on the training window");
    add_common(fit_cmd, true);
    fit_cmd->add_option("--bag", bag_override, "bag size override (>= 2 bags)");

    CLI::App* bt_cmd = app.add_subcommand("backtest", "simulate strategies on the test window");
    add_common(bt_cmd, true);
    bt_cmd->add_option("--model", model_path, "pre-fitted model/bag artifact");

    CLI::App* base_cmd = app.add_subcommand("baseline", "random-portfolio predictability baseline");
    add_common(base_cmd, true);
    base_cmd->add_option("--n-random", n_random_override, "number of random portfolios");

    CLI::App* shap_cmd = app.add_subcommand("shapley", "attribution of out-of-sample forecasts");
    add_common(shap_cmd, true);

    CLI::App* report_cmd = app.add_subcommand("report", "render metric tables from a run directory");
    report_cmd->add_option("-c,--config", config_path, "run configuration JSON");
    report_cmd->add_option("-d,--dir", report_dir, "run directory with metrics.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (report_cmd->parsed()) {
            std::string dir = report_dir;
            if (dir.empty()) {
                if (config_path.empty())
                    throw ConfigError("report: pass --dir or --config");
                dir = load_config(config_path).output_dir;
            }
            return cmd_report(dir);
        }

        RunConfig cfg = load_config(config_path);
        if (!out_override.empty()) cfg.output_dir = out_override;
        if (!returns_override.empty()) cfg.data.returns_csv = returns_override;
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
        if (threads_override >= 0) cfg.threads = threads_override;
        if (bag_override >= 0) cfg.bag_size = bag_override;
        if (n_random_override >= 0) cfg.baseline.n_random = n_random_override;

        if (fit_cmd->parsed()) return cmd_fit(std::move(cfg));
        if (bt_cmd->parsed()) return cmd_backtest(std::move(cfg), model_path);
        if (base_cmd->parsed()) return cmd_baseline(std::move(cfg));
        if (shap_cmd->parsed()) return cmd_shapley(std::move(cfg));
        throw ConfigError("no subcommand selected");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ArtifactError& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return kExitArtifact;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const FitError& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return kExitFit;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUnexpected;
    }
}

}  // namespace mace::cli
