#pragma once

#include <cstdint>
#include <vector>

#include "mace/common.hpp"

namespace mace {

struct ForestConfig {
    int n_trees = 500;
    double mtry_fraction = 1.0 / 3.0;  // candidate share of features per split
    int min_node_size = 20;            // minimum observations in any leaf
    int block_size = 24;               // contiguous-block subsampling unit
    double subsampling_rate = 0.8;     // share of blocks drawn per tree
    std::uint64_t seed = 0;
    int n_threads = 0;                 // 0 = hardware concurrency

    void validate() const;
};

struct TreeNode {
    int feature = -1;        // -1 marks a leaf
    double threshold = 0.0;  // goes left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;      // mean target of observations reaching the node
    double count = 0.0;      // observations reaching the node (cover)

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    std::vector<int> blocks;      // sorted training block ids

    double predict_row(const double* x) const;
};

struct Forest {
    std::vector<Tree> trees;
    int n_features = 0;
    Eigen::Index n_rows = 0;  // training rows
    int n_blocks = 0;
    ForestConfig config;

    bool tree_uses_block(std::size_t tree, int block) const;
};

struct OobResult {
    VectorXd pred;               // NaN where coverage is zero
    Eigen::VectorXi coverage;    // trees voting per row
    Eigen::Index zero_coverage = 0;
};

// Subsampling is over fixed contiguous non-overlapping blocks of
// block_size rows (last block may be short); each tree draws
// ceil(rate * n_blocks) blocks without replacement. Splits minimize
// child SSE; ties resolve to the lowest feature index, then the lowest
// threshold. A node is split only if both children keep at least
// min_node_size rows, and growth stops once a node has fewer than
// 2*min_node_size rows or zero target variance.
Forest fit_forest(const MatrixXd& X, const VectorXd& y, const ForestConfig& cfg);

// full-forest prediction, averaged over all trees
VectorXd predict(const Forest& f, const MatrixXd& X);

// out-of-bag prediction on the training matrix: row t averages only trees
// whose block draw excluded t's block
OobResult predict_oob(const Forest& f, const MatrixXd& X);

// RMSE of OOB predictions against y over covered rows only
double oob_rmse(const Forest& f, const MatrixXd& X, const VectorXd& y);

// replaces zero-coverage OOB rows with the full-forest prediction;
// returns how many rows were filled
Eigen::Index fill_zero_coverage(const Forest& f, const MatrixXd& X, OobResult& oob);

}  // namespace mace
