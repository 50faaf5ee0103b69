#pragma once

#include <map>
#include <string>
#include <vector>

#include "mace/common.hpp"
#include "mace/forest.hpp"

namespace mace {

struct ShapleyMatrix {
    std::vector<std::string> dates;  // optional row labels
    std::vector<std::string> names;  // feature labels, length K
    MatrixXd phi;                    // rows x K attributions
    VectorXd prediction;             // full-forest prediction per row
    double baseline = 0.0;           // mean training prediction of the forest
};

// Exact per-tree conditional-expectation attributions via the polynomial
// path algorithm, averaged over trees. Satisfies local accuracy:
// baseline + sum_i phi(t, i) equals the forest prediction at row t.
ShapleyMatrix tree_shapley(const Forest& forest, const MatrixXd& X,
                           const std::vector<std::string>& names = {},
                           const std::vector<std::string>& dates = {});

// attributions for a single tree and a single row (exposed for testing)
VectorXd tree_shapley_row(const Tree& tree, const double* x, int n_features);

// inclusive row windows of a stitched out-of-sample attribution matrix
struct OosWindow {
    Eigen::Index first = 0;
    Eigen::Index last = 0;  // inclusive
};

// importance per feature: sum of |phi| over the given windows; windows must
// be ascending and non-overlapping
VectorXd vi_oos(const MatrixXd& phi, const std::vector<OosWindow>& windows);

// groups map a label to member feature indices; importance adds up inside
// each group
std::map<std::string, double> vi_grouped(const VectorXd& vi,
                                         const std::vector<std::string>& names,
                                         const std::map<std::string, std::vector<int>>& groups);

// Rescales importances by in-sample over out-of-sample dispersion of the
// underlying series (one column per importance entry). ma_window smooths
// each column with a trailing moving average before taking the standard
// deviation; pass 1 for no smoothing. Ranges are inclusive row spans.
VectorXd vi_adjusted(const VectorXd& vi, const MatrixXd& series,
                     OosWindow insample, OosWindow outsample, int ma_window = 1);

struct TimelineEntry {
    Eigen::Index row = 0;
    int feature = -1;     // winning feature (or group) index
    bool tie = false;     // winner shared the top |phi|
    bool all_zero = false;
};

// per-row dominant contributor by |phi|; ties resolve to the lowest index
std::vector<TimelineEntry> top_contributor_timeline(const MatrixXd& phi);

// grouped variant: columns are first summed within each group (groups given
// as a list of index sets, entry order defines the group index)
std::vector<TimelineEntry> top_contributor_timeline(
    const MatrixXd& phi, const std::vector<std::vector<int>>& groups);

}  // namespace mace
