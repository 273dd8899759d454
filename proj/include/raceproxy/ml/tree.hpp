#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "raceproxy/ml/data.hpp"
#include "raceproxy/race.hpp"
#include "raceproxy/rng.hpp"

namespace raceproxy::ml {

// Binary CART node. feature < 0 marks a leaf; split sends x[feature] < threshold left.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    Vec5 dist{};  // leaf class distribution
};

struct TreeOptions {
    std::size_t max_depth = 8;
    std::size_t min_leaf = 1;
    std::uint64_t seed = 0;
    // Fraction of features drawn as split candidates at each node; >= 1 means
    // all features (no randomness). Used by forests.
    double feature_subsample = 1.0;
};

struct TreeModel {
    Layout layout = Layout::Base;
    std::size_t n_features = kBaseFeatures;
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    Vec5 predict(std::span<const double> x) const;
    std::size_t leaves() const;
};

// Greedy Gini splits over exact thresholds (midpoints between adjacent
// distinct values). Ties break to the lowest feature index, then the lowest
// threshold. Deterministic given seed and row order.
TreeModel train_tree(const LabelledMatrix& data, const TreeOptions& opt = {});

struct ForestOptions {
    std::size_t n_trees = 100;
    double feature_subsample = 1.0;  // per-split feature fraction
    double row_subsample = 1.0;      // per-tree row fraction (1.0 = all rows, no resampling)
    std::size_t max_depth = 8;
    std::size_t min_leaf = 1;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct ForestModel {
    Layout layout = Layout::Base;
    std::size_t n_features = kBaseFeatures;
    std::vector<TreeModel> trees;

    // Unweighted mean of the trees' leaf distributions.
    Vec5 predict(std::span<const double> x) const;
};

// Independent trees on row subsets (without replacement) with per-split
// feature subsets. With one tree and both fractions at 1.0 this reduces to
// train_tree exactly.
ForestModel train_forest(const LabelledMatrix& data, const ForestOptions& opt = {});

}  // namespace raceproxy::ml
