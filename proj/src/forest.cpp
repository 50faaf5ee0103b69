#include "mace/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

namespace mace {

namespace {

// Lemire bounded reduction; stable across standard libraries, unlike
// std::uniform_int_distribution.
inline std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(rng()) * n) >> 64);
}

struct SplitChoice {
    double gain = -1.0;
    int feature = -1;
    double threshold = 0.0;

    bool better_than(const SplitChoice& o) const {
        if (gain != o.gain) return gain > o.gain;
        if (feature != o.feature) return feature < o.feature;
        return threshold < o.threshold;
    }
};

class TreeBuilder {
public:
    TreeBuilder(const MatrixXd& X, const VectorXd& y, const ForestConfig& cfg,
                std::mt19937_64 rng)
        : X_(X), y_(y), cfg_(cfg), rng_(rng) {
        mtry_ = static_cast<int>(
            std::ceil(cfg.mtry_fraction * static_cast<double>(X.cols())));
        mtry_ = std::min<int>(std::max(mtry_, 1), static_cast<int>(X.cols()));
        feature_pool_.resize(static_cast<std::size_t>(X.cols()));
        std::iota(feature_pool_.begin(), feature_pool_.end(), 0);
    }

    Tree build(std::vector<int> rows) {
        Tree tree;
        rows_ = std::move(rows);
        grow(tree, 0, static_cast<int>(rows_.size()));
        return tree;
    }

private:
    // builds the subtree over rows_[lo, hi), returns its node index
    int grow(Tree& tree, int lo, int hi) {
        const int n = hi - lo;
        double sum = 0.0, sumsq = 0.0;
        for (int i = lo; i < hi; ++i) {
            const double v = y_(rows_[static_cast<std::size_t>(i)]);
            sum += v;
            sumsq += v * v;
        }
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[static_cast<std::size_t>(node_id)].value = sum / n;
        tree.nodes[static_cast<std::size_t>(node_id)].count = n;

        const double sse = sumsq - sum * sum / n;
        if (n < 2 * cfg_.min_node_size || sse <= 0.0) return node_id;

        const SplitChoice best = best_split(lo, hi, sum);
        if (best.feature < 0) return node_id;

        // in-place partition keeps row order within children deterministic
        auto mid_it = std::stable_partition(
            rows_.begin() + lo, rows_.begin() + hi, [&](int r) {
                return X_(r, best.feature) <= best.threshold;
            });
        const int mid = static_cast<int>(mid_it - rows_.begin());

        const int left = grow(tree, lo, mid);
        const int right = grow(tree, mid, hi);
        TreeNode& nd = tree.nodes[static_cast<std::size_t>(node_id)];
        nd.feature = best.feature;
        nd.threshold = best.threshold;
        nd.left = left;
        nd.right = right;
        return node_id;
    }

    SplitChoice best_split(int lo, int hi, double total_sum) {
        const int n = hi - lo;
        // fresh candidate draw per split: partial Fisher-Yates over the pool
        for (int j = 0; j < mtry_; ++j) {
            const auto k = static_cast<std::size_t>(
                j + static_cast<int>(bounded_rand(
                        rng_, static_cast<std::uint64_t>(feature_pool_.size() - j))));
            std::swap(feature_pool_[static_cast<std::size_t>(j)], feature_pool_[k]);
        }

        SplitChoice best;
        scratch_.resize(static_cast<std::size_t>(n));
        for (int j = 0; j < mtry_; ++j) {
            const int f = feature_pool_[static_cast<std::size_t>(j)];
            for (int i = 0; i < n; ++i) {
                const int r = rows_[static_cast<std::size_t>(lo + i)];
                scratch_[static_cast<std::size_t>(i)] = {X_(r, f), y_(r)};
            }
            std::sort(scratch_.begin(), scratch_.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });

            double left_sum = 0.0;
            for (int i = 0; i + 1 < n; ++i) {
                left_sum += scratch_[static_cast<std::size_t>(i)].second;
                const double xl = scratch_[static_cast<std::size_t>(i)].first;
                const double xr = scratch_[static_cast<std::size_t>(i + 1)].first;
                if (xl == xr) continue;
                const int nl = i + 1, nr = n - nl;
                if (nl < cfg_.min_node_size || nr < cfg_.min_node_size) continue;
                const double right_sum = total_sum - left_sum;
                const double gain = left_sum * left_sum / nl +
                                    right_sum * right_sum / nr -
                                    total_sum * total_sum / n;
                SplitChoice cand{gain, f, 0.5 * (xl + xr)};
                if (cand.gain >= 0.0 && cand.better_than(best)) best = cand;
            }
        }
        return best;
    }

    const MatrixXd& X_;
    const VectorXd& y_;
    const ForestConfig& cfg_;
    std::mt19937_64 rng_;
    int mtry_ = 1;
    std::vector<int> rows_;
    std::vector<int> feature_pool_;
    std::vector<std::pair<double, double>> scratch_;
};

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MACE_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

void ForestConfig::validate() const {
    if (n_trees < 1) throw ConfigError("forest: n_trees must be >= 1");
    if (!(mtry_fraction > 0.0 && mtry_fraction <= 1.0))
        throw ConfigError("forest: mtry_fraction must be in (0, 1]");
    if (min_node_size < 1) throw ConfigError("forest: min_node_size must be >= 1");
    if (block_size < 1) throw ConfigError("forest: block_size must be >= 1");
    if (!(subsampling_rate > 0.0 && subsampling_rate < 1.0))
        throw ConfigError("forest: subsampling_rate must be in (0, 1)");
}

double Tree::predict_row(const double* x) const {
    int id = 0;
    while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
        const TreeNode& nd = nodes[static_cast<std::size_t>(id)];
        id = (x[nd.feature] <= nd.threshold) ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(id)].value;
}

bool Forest::tree_uses_block(std::size_t tree, int block) const {
    const auto& b = trees[tree].blocks;
    return std::binary_search(b.begin(), b.end(), block);
}

Forest fit_forest(const MatrixXd& X, const VectorXd& y, const ForestConfig& cfg) {
    cfg.validate();
    const Eigen::Index M = X.rows(), K = X.cols();
    if (y.size() != M) throw std::invalid_argument("fit_forest: X/y row mismatch");
    if (K < 1) throw std::invalid_argument("fit_forest: no features");
    if (M < 2 * cfg.min_node_size)
        throw FitError("fit_forest: " + std::to_string(M) + " rows, need at least " +
                       std::to_string(2 * cfg.min_node_size));
    if (!X.allFinite() || !y.allFinite())
        throw std::invalid_argument("fit_forest: non-finite input");

    const int n_blocks =
        static_cast<int>((M + cfg.block_size - 1) / cfg.block_size);
    // ceil can hit n_blocks when there are very few blocks; such a forest
    // still predicts but has no out-of-bag rows, which oob_rmse reports
    const int blocks_per_tree = std::min<int>(
        n_blocks,
        static_cast<int>(std::ceil(cfg.subsampling_rate * n_blocks)));

    Forest forest;
    forest.n_features = static_cast<int>(K);
    forest.n_rows = M;
    forest.n_blocks = n_blocks;
    forest.config = cfg;
    forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));

    auto fit_one = [&](int t) {
        std::mt19937_64 rng(derive_seed(cfg.seed, 0x7265657472ULL,
                                        static_cast<std::uint64_t>(t)));
        std::vector<int> ids(static_cast<std::size_t>(n_blocks));
        std::iota(ids.begin(), ids.end(), 0);
        for (int j = 0; j < blocks_per_tree; ++j) {
            const auto k = static_cast<std::size_t>(
                j + static_cast<int>(bounded_rand(
                        rng, static_cast<std::uint64_t>(n_blocks - j))));
            std::swap(ids[static_cast<std::size_t>(j)], ids[k]);
        }
        std::vector<int> chosen(ids.begin(), ids.begin() + blocks_per_tree);
        std::sort(chosen.begin(), chosen.end());

        std::vector<int> rows;
        for (int b : chosen) {
            const Eigen::Index start = static_cast<Eigen::Index>(b) * cfg.block_size;
            const Eigen::Index stop =
                std::min<Eigen::Index>(start + cfg.block_size, M);
            for (Eigen::Index r = start; r < stop; ++r)
                rows.push_back(static_cast<int>(r));
        }

        TreeBuilder builder(X, y, cfg, rng);
        Tree tree = builder.build(std::move(rows));
        tree.blocks = std::move(chosen);
        forest.trees[static_cast<std::size_t>(t)] = std::move(tree);
    };

    const int n_threads = std::min(resolve_threads(cfg.n_threads), cfg.n_trees);
    if (n_threads <= 1) {
        for (int t = 0; t < cfg.n_trees; ++t) fit_one(t);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int w = 0; w < n_threads; ++w)
            pool.emplace_back([&, w] {
                for (int t = w; t < cfg.n_trees; t += n_threads) fit_one(t);
            });
        for (auto& th : pool) th.join();
    }
    return forest;
}

VectorXd predict(const Forest& f, const MatrixXd& X) {
    if (X.cols() != f.n_features)
        throw std::invalid_argument("predict: forest expects " +
                                    std::to_string(f.n_features) + " features, got " +
                                    std::to_string(X.cols()));
    const Eigen::Index M = X.rows();
    VectorXd out = VectorXd::Zero(M);
    std::vector<double> row(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index i = 0; i < M; ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
        double acc = 0.0;
        for (const Tree& t : f.trees) acc += t.predict_row(row.data());
        out(i) = acc / static_cast<double>(f.trees.size());
    }
    return out;
}

OobResult predict_oob(const Forest& f, const MatrixXd& X) {
    if (X.rows() != f.n_rows || X.cols() != f.n_features)
        throw std::invalid_argument(
            "predict_oob: X must be the training matrix the forest was fit on");
    OobResult res;
    res.pred = VectorXd::Constant(f.n_rows, std::nan(""));
    res.coverage = Eigen::VectorXi::Zero(f.n_rows);

    // membership table: trees x blocks
    std::vector<std::vector<char>> uses(
        f.trees.size(), std::vector<char>(static_cast<std::size_t>(f.n_blocks), 0));
    for (std::size_t t = 0; t < f.trees.size(); ++t)
        for (int b : f.trees[t].blocks) uses[t][static_cast<std::size_t>(b)] = 1;

    std::vector<double> row(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index i = 0; i < f.n_rows; ++i) {
        const int block = static_cast<int>(i / f.config.block_size);
        for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
        double acc = 0.0;
        int n = 0;
        for (std::size_t t = 0; t < f.trees.size(); ++t) {
            if (uses[t][static_cast<std::size_t>(block)]) continue;
            acc += f.trees[t].predict_row(row.data());
            ++n;
        }
        res.coverage(i) = n;
        if (n > 0) res.pred(i) = acc / n;
    }
    res.zero_coverage = (res.coverage.array() == 0).count();
    return res;
}

double oob_rmse(const Forest& f, const MatrixXd& X, const VectorXd& y) {
    if (y.size() != f.n_rows) throw std::invalid_argument("oob_rmse: y length mismatch");
    const OobResult oob = predict_oob(f, X);
    double acc = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (oob.coverage(i) == 0) continue;
        const double e = oob.pred(i) - y(i);
        acc += e * e;
        ++n;
    }
    if (n == 0) throw FitError("oob_rmse: no row has out-of-bag coverage");
    return std::sqrt(acc / static_cast<double>(n));
}

Eigen::Index fill_zero_coverage(const Forest& f, const MatrixXd& X, OobResult& oob) {
    if (oob.zero_coverage == 0) return 0;
    const VectorXd full = predict(f, X);
    Eigen::Index filled = 0;
    for (Eigen::Index i = 0; i < oob.pred.size(); ++i) {
        if (oob.coverage(i) == 0) {
            oob.pred(i) = full(i);
            ++filled;
        }
    }
    return filled;
}

}  // namespace mace
