#include "mace/serialize.hpp"

#include <fstream>

namespace mace {

using nlohmann::json;

namespace {

json vec_to_json(const VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

VectorXd vec_from_json(const json& a) {
    VectorXd v(static_cast<Eigen::Index>(a.size()));
    Eigen::Index i = 0;
    for (const auto& x : a) v(i++) = x.get<double>();
    return v;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ArtifactError("artifact: " + what);
}

}  // namespace

std::string to_token(StoppingRule v) {
    switch (v) {
        case StoppingRule::FixedSMax: return "fixed";
        case StoppingRule::EarlyOob: return "early-oob";
        case StoppingRule::WeightConverged: return "weight-converged";
    }
    throw ConfigError("unknown stopping rule");
}

std::string to_token(FeatureMode v) {
    return v == FeatureMode::Exogenous ? "exogenous" : "endogenous-lags";
}

std::string to_token(InitMode v) {
    return v == InitMode::EqualWeight ? "equal-weight" : "min-variance";
}

StoppingRule stopping_from_token(const std::string& s) {
    if (s == "fixed") return StoppingRule::FixedSMax;
    if (s == "early-oob") return StoppingRule::EarlyOob;
    if (s == "weight-converged") return StoppingRule::WeightConverged;
    throw ConfigError("unknown stopping rule '" + s + "'");
}

FeatureMode mode_from_token(const std::string& s) {
    if (s == "exogenous") return FeatureMode::Exogenous;
    if (s == "endogenous-lags") return FeatureMode::EndogenousLags;
    throw ConfigError("unknown feature mode '" + s + "'");
}

InitMode init_from_token(const std::string& s) {
    if (s == "equal-weight") return InitMode::EqualWeight;
    if (s == "min-variance") return InitMode::MinVariance;
    throw ConfigError("unknown init mode '" + s + "'");
}

json forest_to_json(const Forest& f) {
    json j;
    j["n_features"] = f.n_features;
    j["n_rows"] = f.n_rows;
    j["n_blocks"] = f.n_blocks;
    j["config"] = {{"n_trees", f.config.n_trees},
                   {"mtry_fraction", f.config.mtry_fraction},
                   {"min_node_size", f.config.min_node_size},
                   {"block_size", f.config.block_size},
                   {"subsampling_rate", f.config.subsampling_rate},
                   {"seed", f.config.seed}};
    json trees = json::array();
    for (const Tree& t : f.trees) {
        json nodes = json::array();
        for (const TreeNode& n : t.nodes)
            nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.count});
        trees.push_back({{"blocks", t.blocks}, {"nodes", std::move(nodes)}});
    }
    j["trees"] = std::move(trees);
    return j;
}

Forest forest_from_json(const json& j) {
    Forest f;
    f.n_features = j.at("n_features").get<int>();
    f.n_rows = j.at("n_rows").get<Eigen::Index>();
    f.n_blocks = j.at("n_blocks").get<int>();
    const json& c = j.at("config");
    f.config.n_trees = c.at("n_trees").get<int>();
    f.config.mtry_fraction = c.at("mtry_fraction").get<double>();
    f.config.min_node_size = c.at("min_node_size").get<int>();
    f.config.block_size = c.at("block_size").get<int>();
    f.config.subsampling_rate = c.at("subsampling_rate").get<double>();
    f.config.seed = c.at("seed").get<std::uint64_t>();
    for (const auto& tj : j.at("trees")) {
        Tree t;
        t.blocks = tj.at("blocks").get<std::vector<int>>();
        for (const auto& nj : tj.at("nodes")) {
            require(nj.size() == 6, "malformed tree node");
            TreeNode n;
            n.feature = nj[0].get<int>();
            n.threshold = nj[1].get<double>();
            n.left = nj[2].get<int>();
            n.right = nj[3].get<int>();
            n.value = nj[4].get<double>();
            n.count = nj[5].get<double>();
            t.nodes.push_back(n);
        }
        require(!t.nodes.empty(), "empty tree");
        f.trees.push_back(std::move(t));
    }
    require(!f.trees.empty(), "empty forest");
    return f;
}

json model_to_json(const MaceModel& m) {
    json j;
    j["format_version"] = kArtifactVersion;
    j["kind"] = "mace_model";
    j["mode"] = to_token(m.mode);
    j["horizon"] = m.horizon;
    j["max_lag"] = m.max_lag;
    j["use_marx"] = m.use_marx;
    j["nonneg"] = m.nonneg;
    j["aligned_offset"] = m.aligned_offset;
    j["best_s"] = m.best_s;
    j["lambda"] = m.lambda;
    j["weight_converged"] = m.weight_converged;
    j["train_mean_z"] = m.train_mean_z;
    j["assets"] = m.asset_names;
    j["feature_names"] = m.feature_names;
    j["w"] = vec_to_json(m.w.w);
    j["scale_applied"] = m.w.scale_applied;
    j["f_hat"] = vec_to_json(m.f_hat);
    j["z_hat"] = vec_to_json(m.z_hat);
    json hist = json::array();
    for (const auto& r : m.history)
        hist.push_back({{"s", r.s},
                        {"insample_mse", r.insample_mse},
                        {"oob_rmse", r.oob_rmse},
                        {"weight_delta", r.weight_delta},
                        {"lambda", r.lambda},
                        {"ridge_r2", r.ridge_r2},
                        {"lambda_at_boundary", r.lambda_at_boundary},
                        {"oob_filled", r.oob_filled},
                        {"kkt_residual", r.kkt_residual}});
    j["history"] = std::move(hist);
    j["forest"] = forest_to_json(m.forest);
    return j;
}

MaceModel model_from_json(const json& j) {
    require(j.is_object(), "not a JSON object");
    require(j.value("kind", "") == "mace_model", "kind is not 'mace_model'");
    require(j.value("format_version", -1) == kArtifactVersion,
            "unsupported format_version");
    MaceModel m;
    m.mode = mode_from_token(j.at("mode").get<std::string>());
    m.horizon = j.at("horizon").get<int>();
    m.max_lag = j.at("max_lag").get<int>();
    m.use_marx = j.at("use_marx").get<bool>();
    m.nonneg = j.at("nonneg").get<bool>();
    m.aligned_offset = j.at("aligned_offset").get<Eigen::Index>();
    m.best_s = j.at("best_s").get<int>();
    m.lambda = j.at("lambda").get<double>();
    m.weight_converged = j.at("weight_converged").get<bool>();
    m.train_mean_z = j.at("train_mean_z").get<double>();
    m.asset_names = j.at("assets").get<std::vector<std::string>>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.w.w = vec_from_json(j.at("w"));
    m.w.scale_applied = j.at("scale_applied").get<double>();
    m.f_hat = vec_from_json(j.at("f_hat"));
    m.z_hat = vec_from_json(j.at("z_hat"));
    for (const auto& rj : j.at("history")) {
        IterationRecord r;
        r.s = rj.at("s").get<int>();
        r.insample_mse = rj.at("insample_mse").get<double>();
        r.oob_rmse = rj.at("oob_rmse").get<double>();
        r.weight_delta = rj.at("weight_delta").get<double>();
        r.lambda = rj.at("lambda").get<double>();
        r.ridge_r2 = rj.at("ridge_r2").get<double>();
        r.lambda_at_boundary = rj.at("lambda_at_boundary").get<bool>();
        r.oob_filled = rj.at("oob_filled").get<Eigen::Index>();
        r.kkt_residual = rj.at("kkt_residual").get<double>();
        m.history.push_back(r);
    }
    m.forest = forest_from_json(j.at("forest"));
    m.validate();
    return m;
}

json bag_to_json(const BagOfStrategies& bag) {
    json j;
    j["format_version"] = kArtifactVersion;
    j["kind"] = "mace_bag";
    j["member_seeds"] = bag.member_seeds;
    json members = json::array();
    for (const auto& m : bag.members) members.push_back(model_to_json(m));
    j["members"] = std::move(members);
    return j;
}

BagOfStrategies bag_from_json(const json& j) {
    require(j.value("kind", "") == "mace_bag", "kind is not 'mace_bag'");
    require(j.value("format_version", -1) == kArtifactVersion,
            "unsupported format_version");
    BagOfStrategies bag;
    bag.member_seeds = j.at("member_seeds").get<std::vector<std::uint64_t>>();
    for (const auto& mj : j.at("members")) bag.members.push_back(model_from_json(mj));
    require(!bag.members.empty(), "empty bag");
    return bag;
}

void save_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ArtifactError("artifact: invalid JSON in '" + path + "': " + e.what());
    }
    return j;
}

}  // namespace mace
