#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "mace/interpret.hpp"

using namespace mace;

namespace {

// conditional expectation down the tree: known features follow the instance,
// unknown splits average the children by training cover
double cond_exp(const Tree& tree, int node_id, const double* x, const std::set<int>& S) {
    const TreeNode& n = tree.nodes[static_cast<std::size_t>(node_id)];
    if (n.is_leaf()) return n.value;
    if (S.count(n.feature) > 0) {
        const int next = (x[n.feature] <= n.threshold) ? n.left : n.right;
        return cond_exp(tree, next, x, S);
    }
    const double wl = tree.nodes[static_cast<std::size_t>(n.left)].count;
    const double wr = tree.nodes[static_cast<std::size_t>(n.right)].count;
    return (wl * cond_exp(tree, n.left, x, S) + wr * cond_exp(tree, n.right, x, S)) /
           (wl + wr);
}

// textbook Shapley value over all 2^K coalitions (exponential, K <= 4 here)
VectorXd shapley_oracle(const Tree& tree, const double* x, int K) {
    std::vector<double> fact(static_cast<std::size_t>(K) + 1, 1.0);
    for (int i = 1; i <= K; ++i)
        fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i - 1)] * i;
    VectorXd phi = VectorXd::Zero(K);
    for (int i = 0; i < K; ++i) {
        for (unsigned mask = 0; mask < (1u << K); ++mask) {
            if (mask & (1u << i)) continue;
            std::set<int> S;
            int s = 0;
            for (int j = 0; j < K; ++j)
                if (mask & (1u << j)) {
                    S.insert(j);
                    ++s;
                }
            const double w = fact[static_cast<std::size_t>(s)] *
                             fact[static_cast<std::size_t>(K - s - 1)] /
                             fact[static_cast<std::size_t>(K)];
            const double without = cond_exp(tree, 0, x, S);
            S.insert(i);
            const double with = cond_exp(tree, 0, x, S);
            phi(i) += w * (with - without);
        }
    }
    return phi;
}

Forest small_forest(Eigen::Index T, int K, std::uint64_t seed, int n_trees,
                    int min_node) {
    MatrixXd X = testutil::gaussian_matrix(T, K, seed);
    VectorXd y(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        y(t) = std::sin(X(t, 0)) + 0.5 * X(t, K - 1) * X(t, 0);
        if (K > 2) y(t) += (X(t, 1) > 0 ? 1.0 : -1.0);
    }
    ForestConfig cfg;
    cfg.n_trees = n_trees;
    cfg.min_node_size = min_node;
    cfg.block_size = 7;
    cfg.subsampling_rate = 0.7;
    cfg.seed = seed + 1;
    cfg.n_threads = 1;
    return fit_forest(X, y, cfg);
}

}  // namespace

TEST_CASE("single split tree has the closed-form attribution") {
    Tree t;
    // root: split f1 at 0.0; left leaf value -2 cover 30, right leaf value 4 cover 10
    t.nodes.push_back({1, 0.0, 1, 2, -0.5, 40.0});
    t.nodes.push_back({-1, 0.0, -1, -1, -2.0, 30.0});
    t.nodes.push_back({-1, 0.0, -1, -1, 4.0, 10.0});
    const double base = (30.0 * -2.0 + 10.0 * 4.0) / 40.0;  // -0.5

    double x_left[3] = {9.9, -1.0, 9.9};
    VectorXd phi = tree_shapley_row(t, x_left, 3);
    CHECK(phi(0) == 0.0);
    CHECK(phi(2) == 0.0);
    CHECK(phi(1) == doctest::Approx(-2.0 - base).epsilon(1e-14));

    double x_right[3] = {0.0, 3.0, 0.0};
    phi = tree_shapley_row(t, x_right, 3);
    CHECK(phi(1) == doctest::Approx(4.0 - base).epsilon(1e-14));
}

TEST_CASE("path algorithm equals the exhaustive coalition oracle") {
    for (int K : {2, 3, 4}) {
        Forest f = small_forest(90, K, 100 + static_cast<std::uint64_t>(K), 12, 6);
        MatrixXd probe = testutil::gaussian_matrix(8, K, 55);
        std::vector<double> row(static_cast<std::size_t>(K));
        for (const Tree& tree : f.trees) {
            for (Eigen::Index r = 0; r < probe.rows(); ++r) {
                for (int j = 0; j < K; ++j)
                    row[static_cast<std::size_t>(j)] = probe(r, j);
                const VectorXd fast = tree_shapley_row(tree, row.data(), K);
                const VectorXd slow = shapley_oracle(tree, row.data(), K);
                CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-10);
            }
        }
    }
}

TEST_CASE("forest attributions satisfy local accuracy") {
    Forest f = small_forest(150, 4, 21, 30, 8);
    MatrixXd probe = testutil::gaussian_matrix(25, 4, 66);
    ShapleyMatrix sm = tree_shapley(f, probe);
    REQUIRE(sm.phi.rows() == 25);
    REQUIRE(sm.phi.cols() == 4);

    double base = 0.0;
    for (const Tree& t : f.trees) base += t.nodes[0].value;
    base /= static_cast<double>(f.trees.size());
    CHECK(sm.baseline == doctest::Approx(base).epsilon(1e-14));

    const VectorXd pred = predict(f, probe);
    for (Eigen::Index r = 0; r < probe.rows(); ++r) {
        CHECK(sm.baseline + sm.phi.row(r).sum() ==
              doctest::Approx(pred(r)).epsilon(1e-10));
        CHECK(sm.prediction(r) == pred(r));
    }
    CHECK(sm.names == std::vector<std::string>{"f0", "f1", "f2", "f3"});
}

TEST_CASE("irrelevant features receive exactly zero attribution") {
    // target depends only on feature 0; feature 1 is pure noise but the
    // forest may still split on it, so test with a stump-only tree instead
    const Eigen::Index T = 80;
    MatrixXd X(T, 2);
    X.col(0) = testutil::gaussian_matrix(T, 1, 9).col(0);
    X.col(1).setConstant(0.0);  // constant feature can never split
    VectorXd y = X.col(0).array().sign();
    ForestConfig cfg;
    cfg.n_trees = 10;
    cfg.min_node_size = 5;
    cfg.block_size = 8;
    cfg.seed = 3;
    cfg.n_threads = 1;
    Forest f = fit_forest(X, y, cfg);
    ShapleyMatrix sm = tree_shapley(f, X.topRows(10));
    CHECK(sm.phi.col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("importance over windows is the plain absolute sum") {
    MatrixXd phi(6, 3);
    phi << 1, -2, 0,
           -1, 0, 3,
           2, 2, -2,
           0, 1, 1,
           -3, 0, 0,
           1, 1, 1;
    std::vector<OosWindow> all{{0, 5}};
    VectorXd vi = vi_oos(phi, all);
    CHECK(vi(0) == doctest::Approx(8.0).epsilon(1e-15));
    CHECK(vi(1) == doctest::Approx(6.0).epsilon(1e-15));
    CHECK(vi(2) == doctest::Approx(7.0).epsilon(1e-15));

    // split windows must add up to the full-span sum
    std::vector<OosWindow> split{{0, 1}, {3, 5}};
    VectorXd part = vi_oos(phi, split);
    VectorXd mid = vi_oos(phi, {{2, 2}});
    CHECK((part + mid - vi).cwiseAbs().maxCoeff() < 1e-15);

    CHECK_THROWS_AS(vi_oos(phi, {}), std::invalid_argument);
    CHECK_THROWS_AS(vi_oos(phi, {{3, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(vi_oos(phi, {{0, 2}, {2, 4}}), std::invalid_argument);
    CHECK_THROWS_AS(vi_oos(phi, {{0, 6}}), std::invalid_argument);
}

TEST_CASE("grouped importance partitions features") {
    VectorXd vi(5);
    vi << 1, 2, 3, 4, 5;
    std::vector<std::string> names{"a1", "a2", "b1", "b2", "c"};
    std::map<std::string, std::vector<int>> groups{
        {"A", {0, 1}}, {"B", {2, 3}}, {"C", {4}}};
    auto g = vi_grouped(vi, names, groups);
    CHECK(g.at("A") == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(g.at("B") == doctest::Approx(7.0).epsilon(1e-15));
    CHECK(g.at("C") == doctest::Approx(5.0).epsilon(1e-15));

    CHECK_THROWS_AS(vi_grouped(vi, names, {{"dup", {0, 0}}}), std::invalid_argument);
    CHECK_THROWS_AS(vi_grouped(vi, names, {{"oob", {7}}}), std::invalid_argument);
    CHECK_THROWS_AS(vi_grouped(vi, names, {{"empty", {}}}), std::invalid_argument);
    CHECK_THROWS_AS(vi_grouped(vi, {"x"}, groups), std::invalid_argument);
}

TEST_CASE("dispersion adjustment rescales by in/out sample volatility") {
    MatrixXd series(8, 1);
    series << 0, 2, 4, 6, 0, 4, 8, 12;
    VectorXd vi = VectorXd::Constant(1, 3.0);

    // raw standard deviations: {0,2,4,6} vs {0,4,8,12}
    VectorXd adj = vi_adjusted(vi, series, {0, 3}, {4, 7}, 1);
    const double s_ins = std::sqrt(20.0 / 3.0);
    const double s_oos = std::sqrt(80.0 / 3.0);
    CHECK(adj(0) == doctest::Approx(3.0 * s_ins / s_oos).epsilon(1e-12));

    // trailing 2-period moving average smooths before the dispersion ratio
    VectorXd adj2 = vi_adjusted(vi, series, {0, 3}, {4, 7}, 2);
    // insample MA values {1,3,5}: std 2; outsample MA {3,2,6,10}: var 38.75/3
    CHECK(adj2(0) ==
          doctest::Approx(3.0 * 2.0 / std::sqrt(38.75 / 3.0)).epsilon(1e-12));

    CHECK_THROWS_AS(vi_adjusted(vi, series, {0, 3}, {4, 9}, 1), std::invalid_argument);
    CHECK_THROWS_AS(vi_adjusted(vi, MatrixXd::Ones(8, 1), {0, 3}, {4, 7}, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(vi_adjusted(vi, series, {0, 3}, {4, 7}, 0), std::invalid_argument);
}

TEST_CASE("dominant-contributor timeline handles ties and silence") {
    MatrixXd phi(4, 3);
    phi << 0.5, -1.0, 0.2,   // winner 1 by magnitude
           -0.7, 0.7, 0.1,   // tie between 0 and 1, lowest index wins
           0.0, 0.0, 0.0,    // all zero
           0.0, 0.0, -0.3;   // winner 2
    auto tl = top_contributor_timeline(phi);
    REQUIRE(tl.size() == 4);
    CHECK(tl[0].feature == 1);
    CHECK_FALSE(tl[0].tie);
    CHECK(tl[1].feature == 0);
    CHECK(tl[1].tie);
    CHECK(tl[2].all_zero);
    CHECK(tl[3].feature == 2);
    CHECK(tl[3].row == 3);

    // grouping flips the winner when members reinforce each other
    std::vector<std::vector<int>> groups{{0, 2}, {1}};
    auto gl = top_contributor_timeline(phi, groups);
    CHECK(gl[0].feature == 1);  // |0.5 + 0.2| = 0.7 < |-1.0|
    CHECK(gl[3].feature == 0);  // group 0 holds the only nonzero column

    // members with opposite signs cancel inside a group
    MatrixXd phi2(1, 2);
    phi2 << 1.0, -1.0;
    auto cl = top_contributor_timeline(phi2, {{0, 1}});
    CHECK(cl[0].all_zero);

    CHECK_THROWS_AS(top_contributor_timeline(phi, {{9}}), std::invalid_argument);
    CHECK_THROWS_AS(top_contributor_timeline(phi, std::vector<std::vector<int>>{}),
                    std::invalid_argument);
}
