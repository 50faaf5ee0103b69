#include "mace/interpret.hpp"

#include <algorithm>
#include <cmath>

namespace mace {

namespace {

// element of the feature path maintained during tree descent
struct PathElem {
    int feature;           // split feature entering the path (-1 at the root)
    double zero_fraction;  // share of paths flowing through when feature is unknown
    double one_fraction;   // 1 when the observation follows this branch, else 0
    double pweight;        // permutation-weight polynomial coefficient
};

void extend(std::vector<PathElem>& m, double pz, double po, int pi) {
    const int l = static_cast<int>(m.size());
    m.push_back({pi, pz, po, l == 0 ? 1.0 : 0.0});
    for (int i = l - 1; i >= 0; --i) {
        m[static_cast<std::size_t>(i + 1)].pweight +=
            po * m[static_cast<std::size_t>(i)].pweight * (i + 1) / (l + 1);
        m[static_cast<std::size_t>(i)].pweight =
            pz * m[static_cast<std::size_t>(i)].pweight * (l - i) / (l + 1);
    }
}

void unwind(std::vector<PathElem>& m, int i) {
    const int l = static_cast<int>(m.size()) - 1;
    const double oz = m[static_cast<std::size_t>(i)].one_fraction;
    const double zf = m[static_cast<std::size_t>(i)].zero_fraction;
    double n = m[static_cast<std::size_t>(l)].pweight;
    for (int j = l - 1; j >= 0; --j) {
        if (oz != 0.0) {
            const double t = m[static_cast<std::size_t>(j)].pweight;
            m[static_cast<std::size_t>(j)].pweight = n * (l + 1) / ((j + 1) * oz);
            n = t - m[static_cast<std::size_t>(j)].pweight * zf * (l - j) / (l + 1);
        } else {
            m[static_cast<std::size_t>(j)].pweight =
                m[static_cast<std::size_t>(j)].pweight * (l + 1) / (zf * (l - j));
        }
    }
    for (int j = i; j < l; ++j) {
        m[static_cast<std::size_t>(j)].feature = m[static_cast<std::size_t>(j + 1)].feature;
        m[static_cast<std::size_t>(j)].zero_fraction =
            m[static_cast<std::size_t>(j + 1)].zero_fraction;
        m[static_cast<std::size_t>(j)].one_fraction =
            m[static_cast<std::size_t>(j + 1)].one_fraction;
    }
    m.pop_back();
}

// total pweight after hypothetically unwinding element i (no mutation)
double unwound_sum(const std::vector<PathElem>& m, int i) {
    const int l = static_cast<int>(m.size()) - 1;
    const double oz = m[static_cast<std::size_t>(i)].one_fraction;
    const double zf = m[static_cast<std::size_t>(i)].zero_fraction;
    double n = m[static_cast<std::size_t>(l)].pweight;
    double total = 0.0;
    for (int j = l - 1; j >= 0; --j) {
        if (oz != 0.0) {
            const double t = n * (l + 1) / ((j + 1) * oz);
            total += t;
            n = m[static_cast<std::size_t>(j)].pweight - t * zf * (l - j) / (l + 1);
        } else {
            total += m[static_cast<std::size_t>(j)].pweight * (l + 1) / (zf * (l - j));
        }
    }
    return total;
}

int find_feature(const std::vector<PathElem>& m, int feature) {
    // root sentinel occupies slot 0, real features start at 1
    for (std::size_t i = 1; i < m.size(); ++i)
        if (m[i].feature == feature) return static_cast<int>(i);
    return -1;
}

void recurse(const Tree& tree, int node_id, const double* x, VectorXd& phi,
             std::vector<PathElem> m, double pz, double po, int pi) {
    extend(m, pz, po, pi);
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
    if (node.is_leaf()) {
        for (std::size_t i = 1; i < m.size(); ++i) {
            const double w = unwound_sum(m, static_cast<int>(i));
            phi(m[i].feature) +=
                w * (m[i].one_fraction - m[i].zero_fraction) * node.value;
        }
        return;
    }

    const bool goes_left = x[node.feature] <= node.threshold;
    const int hot = goes_left ? node.left : node.right;
    const int cold = goes_left ? node.right : node.left;
    const double cover = node.count;
    const double hot_cover = tree.nodes[static_cast<std::size_t>(hot)].count;
    const double cold_cover = tree.nodes[static_cast<std::size_t>(cold)].count;

    double iz = 1.0, io = 1.0;
    const int k = find_feature(m, node.feature);
    if (k >= 0) {
        iz = m[static_cast<std::size_t>(k)].zero_fraction;
        io = m[static_cast<std::size_t>(k)].one_fraction;
        unwind(m, k);
    }
    recurse(tree, hot, x, phi, m, iz * hot_cover / cover, io, node.feature);
    recurse(tree, cold, x, phi, m, iz * cold_cover / cover, 0.0, node.feature);
}

}  // namespace

VectorXd tree_shapley_row(const Tree& tree, const double* x, int n_features) {
    VectorXd phi = VectorXd::Zero(n_features);
    recurse(tree, 0, x, phi, {}, 1.0, 1.0, -1);
    return phi;
}

ShapleyMatrix tree_shapley(const Forest& forest, const MatrixXd& X,
                           const std::vector<std::string>& names,
                           const std::vector<std::string>& dates) {
    if (X.cols() != forest.n_features)
        throw std::invalid_argument("tree_shapley: feature count mismatch");
    if (!names.empty() && static_cast<Eigen::Index>(names.size()) != X.cols())
        throw std::invalid_argument("tree_shapley: name axis mismatch");
    if (!dates.empty() && static_cast<Eigen::Index>(dates.size()) != X.rows())
        throw std::invalid_argument("tree_shapley: date axis mismatch");
    if (forest.trees.empty()) throw std::invalid_argument("tree_shapley: empty forest");

    ShapleyMatrix out;
    out.names = names;
    if (out.names.empty())
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            out.names.push_back("f" + std::to_string(j));
    out.dates = dates;
    out.phi = MatrixXd::Zero(X.rows(), X.cols());

    double base = 0.0;
    for (const Tree& t : forest.trees) base += t.nodes[0].value;
    out.baseline = base / static_cast<double>(forest.trees.size());

    std::vector<double> row(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            row[static_cast<std::size_t>(j)] = X(r, j);
        VectorXd acc = VectorXd::Zero(X.cols());
        for (const Tree& t : forest.trees)
            acc += tree_shapley_row(t, row.data(), forest.n_features);
        out.phi.row(r) = acc / static_cast<double>(forest.trees.size());
    }
    out.prediction = predict(forest, X);
    return out;
}

VectorXd vi_oos(const MatrixXd& phi, const std::vector<OosWindow>& windows) {
    if (windows.empty()) throw std::invalid_argument("vi_oos: no windows");
    Eigen::Index prev_end = -1;
    VectorXd vi = VectorXd::Zero(phi.cols());
    for (const auto& w : windows) {
        if (w.first > w.last)
            throw std::invalid_argument("vi_oos: window with first > last");
        if (w.first <= prev_end)
            throw std::invalid_argument("vi_oos: windows overlap or are unordered");
        if (w.last >= phi.rows())
            throw std::invalid_argument("vi_oos: window exceeds matrix rows");
        for (Eigen::Index r = w.first; r <= w.last; ++r)
            vi += phi.row(r).cwiseAbs().transpose();
        prev_end = w.last;
    }
    return vi;
}

std::map<std::string, double> vi_grouped(
    const VectorXd& vi, const std::vector<std::string>& names,
    const std::map<std::string, std::vector<int>>& groups) {
    if (static_cast<Eigen::Index>(names.size()) != vi.size())
        throw std::invalid_argument("vi_grouped: name axis mismatch");
    std::vector<char> seen(static_cast<std::size_t>(vi.size()), 0);
    std::map<std::string, double> out;
    for (const auto& [label, members] : groups) {
        if (members.empty())
            throw std::invalid_argument("vi_grouped: empty group '" + label + "'");
        double acc = 0.0;
        for (int idx : members) {
            if (idx < 0 || idx >= vi.size())
                throw std::invalid_argument("vi_grouped: index out of range in '" +
                                            label + "'");
            if (seen[static_cast<std::size_t>(idx)]++)
                throw std::invalid_argument("vi_grouped: feature assigned twice");
            acc += vi(idx);
        }
        out[label] = acc;
    }
    return out;
}

namespace {

double windowed_std(const MatrixXd& series, Eigen::Index col, OosWindow range,
                    int ma_window) {
    if (range.first > range.last || range.last >= series.rows())
        throw std::invalid_argument("vi_adjusted: bad row range");
    std::vector<double> vals;
    for (Eigen::Index t = range.first; t <= range.last; ++t) {
        if (t < ma_window - 1) continue;  // trailing MA not yet defined
        double acc = 0.0;
        for (int l = 0; l < ma_window; ++l) acc += series(t - l, col);
        vals.push_back(acc / ma_window);
    }
    if (vals.size() < 2)
        throw std::invalid_argument("vi_adjusted: range too short for the MA window");
    VectorXd v = Eigen::Map<VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    return sample_std(v);
}

}  // namespace

VectorXd vi_adjusted(const VectorXd& vi, const MatrixXd& series, OosWindow insample,
                     OosWindow outsample, int ma_window) {
    if (series.cols() != vi.size())
        throw std::invalid_argument("vi_adjusted: one series column per entry required");
    if (ma_window < 1) throw std::invalid_argument("vi_adjusted: ma_window must be >= 1");
    VectorXd out(vi.size());
    for (Eigen::Index j = 0; j < vi.size(); ++j) {
        const double s_ins = windowed_std(series, j, insample, ma_window);
        const double s_oos = windowed_std(series, j, outsample, ma_window);
        if (!(s_oos > 0.0) || !(s_ins > 0.0))
            throw std::invalid_argument("vi_adjusted: zero dispersion in a range");
        out(j) = vi(j) * s_ins / s_oos;
    }
    return out;
}

namespace {

std::vector<TimelineEntry> timeline_impl(const MatrixXd& scores) {
    std::vector<TimelineEntry> out;
    out.reserve(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        TimelineEntry e;
        e.row = r;
        double best = -1.0;
        int winner = 0;
        bool tie = false;
        for (Eigen::Index j = 0; j < scores.cols(); ++j) {
            const double v = std::fabs(scores(r, j));
            if (v > best) {
                best = v;
                winner = static_cast<int>(j);
                tie = false;
            } else if (v == best) {
                tie = true;
            }
        }
        e.feature = winner;
        e.tie = tie;
        e.all_zero = (best == 0.0);
        out.push_back(e);
    }
    return out;
}

}  // namespace

std::vector<TimelineEntry> top_contributor_timeline(const MatrixXd& phi) {
    if (phi.cols() < 1) throw std::invalid_argument("timeline: empty matrix");
    return timeline_impl(phi);
}

std::vector<TimelineEntry> top_contributor_timeline(
    const MatrixXd& phi, const std::vector<std::vector<int>>& groups) {
    if (groups.empty()) throw std::invalid_argument("timeline: no groups");
    MatrixXd grouped = MatrixXd::Zero(phi.rows(), static_cast<Eigen::Index>(groups.size()));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (int idx : groups[g]) {
            if (idx < 0 || idx >= phi.cols())
                throw std::invalid_argument("timeline: group index out of range");
            grouped.col(static_cast<Eigen::Index>(g)) += phi.col(idx);
        }
    }
    return timeline_impl(grouped);
}

}  // namespace mace
