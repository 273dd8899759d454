#include "raceproxy/ml/tree.hpp"

#include <algorithm>
#include <cmath>

#include "raceproxy/errors.hpp"
#include "raceproxy/ml/parallel.hpp"

namespace raceproxy::ml {

namespace {

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

double gini(const std::array<double, kNumRaces>& counts, double n) {
    if (n <= 0) return 0.0;
    double g = 1.0;
    for (double c : counts) g -= (c / n) * (c / n);
    return g;
}

class TreeBuilder {
public:
    TreeBuilder(const LabelledMatrix& data, const TreeOptions& opt)
        : data_(data), opt_(opt), rng_(opt.seed) {
        use_feature_subsets_ = opt.feature_subsample < 1.0;
        if (use_feature_subsets_) {
            n_candidates_ = static_cast<std::size_t>(
                std::ceil(opt.feature_subsample * static_cast<double>(data.n_features)));
            n_candidates_ = std::max<std::size_t>(1, std::min(n_candidates_, data.n_features));
        }
    }

    TreeModel build(std::vector<std::size_t> indices) {
        TreeModel model;
        model.layout = data_.layout;
        model.n_features = data_.n_features;
        build_node(model, std::move(indices), 0);
        return model;
    }

private:
    int build_node(TreeModel& model, std::vector<std::size_t> indices, std::size_t depth) {
        const int node_id = static_cast<int>(model.nodes.size());
        model.nodes.emplace_back();

        std::array<double, kNumRaces> counts{};
        for (std::size_t i : indices) counts[static_cast<std::size_t>(data_.y[i])] += 1.0;
        const double n = static_cast<double>(indices.size());

        Vec5 dist{};
        for (std::size_t k = 0; k < kNumRaces; ++k) dist[k] = counts[k] / n;

        const bool pure = *std::max_element(counts.begin(), counts.end()) == n;
        if (depth >= opt_.max_depth || pure || indices.size() < 2 * opt_.min_leaf) {
            model.nodes[node_id].dist = dist;
            return node_id;
        }

        const SplitChoice split = best_split(indices, counts, n);
        if (!split.found) {
            model.nodes[node_id].dist = dist;
            return node_id;
        }

        std::vector<std::size_t> left, right;
        left.reserve(indices.size());
        right.reserve(indices.size());
        for (std::size_t i : indices) {
            if (data_.row(i)[static_cast<std::size_t>(split.feature)] < split.threshold)
                left.push_back(i);
            else
                right.push_back(i);
        }
        indices.clear();
        indices.shrink_to_fit();

        model.nodes[node_id].feature = split.feature;
        model.nodes[node_id].threshold = split.threshold;
        const int l = build_node(model, std::move(left), depth + 1);
        const int r = build_node(model, std::move(right), depth + 1);
        model.nodes[node_id].left = l;
        model.nodes[node_id].right = r;
        return node_id;
    }

    SplitChoice best_split(const std::vector<std::size_t>& indices,
                           const std::array<double, kNumRaces>& total_counts, double n) {
        SplitChoice best;
        const double parent_impurity = gini(total_counts, n);

        std::vector<std::size_t> features;
        features.reserve(data_.n_features);
        for (std::size_t f = 0; f < data_.n_features; ++f) features.push_back(f);
        if (use_feature_subsets_) {
            // Partial Fisher-Yates: first n_candidates_ entries form the subset.
            for (std::size_t i = 0; i < n_candidates_; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng_.below(features.size() - i));
                std::swap(features[i], features[j]);
            }
            features.resize(n_candidates_);
            std::sort(features.begin(), features.end());  // fixed evaluation order
        }

        std::vector<std::pair<double, std::size_t>> sorted;
        sorted.reserve(indices.size());
        for (const std::size_t f : features) {
            sorted.clear();
            for (std::size_t i : indices) sorted.emplace_back(data_.row(i)[f], i);
            std::sort(sorted.begin(), sorted.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });

            std::array<double, kNumRaces> left_counts{};
            double n_left = 0.0;
            for (std::size_t pos = 0; pos + 1 < sorted.size(); ++pos) {
                left_counts[static_cast<std::size_t>(data_.y[sorted[pos].second])] += 1.0;
                n_left += 1.0;
                if (sorted[pos].first == sorted[pos + 1].first) continue;  // not a boundary
                const double n_right = n - n_left;
                if (n_left < static_cast<double>(opt_.min_leaf) ||
                    n_right < static_cast<double>(opt_.min_leaf))
                    continue;
                std::array<double, kNumRaces> right_counts;
                for (std::size_t k = 0; k < kNumRaces; ++k)
                    right_counts[k] = total_counts[k] - left_counts[k];
                const double child_impurity =
                    (n_left * gini(left_counts, n_left) + n_right * gini(right_counts, n_right)) / n;
                const double gain = parent_impurity - child_impurity;
                if (gain > best.gain + 1e-12) {
                    best.found = true;
                    best.gain = gain;
                    best.feature = static_cast<int>(f);
                    best.threshold = sorted[pos].first + 0.5 * (sorted[pos + 1].first - sorted[pos].first);
                }
            }
        }
        return best;
    }

    const LabelledMatrix& data_;
    const TreeOptions& opt_;
    Rng rng_;
    bool use_feature_subsets_ = false;
    std::size_t n_candidates_ = 0;
};

}  // namespace

Vec5 TreeModel::predict(std::span<const double> x) const {
    int node = 0;
    while (nodes[node].feature >= 0) {
        node = x[static_cast<std::size_t>(nodes[node].feature)] < nodes[node].threshold
                   ? nodes[node].left
                   : nodes[node].right;
    }
    return nodes[node].dist;
}

std::size_t TreeModel::leaves() const {
    std::size_t n = 0;
    for (const auto& node : nodes)
        if (node.feature < 0) ++n;
    return n;
}

TreeModel train_tree(const LabelledMatrix& data, const TreeOptions& opt) {
    if (data.rows() == 0) throw DataError("train_tree: empty training data");
    std::vector<std::size_t> all(data.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return TreeBuilder(data, opt).build(std::move(all));
}

Vec5 ForestModel::predict(std::span<const double> x) const {
    Vec5 acc{};
    for (const auto& tree : trees) {
        const Vec5 p = tree.predict(x);
        for (std::size_t k = 0; k < kNumRaces; ++k) acc[k] += p[k];
    }
    const double n = static_cast<double>(trees.size());
    for (auto& v : acc) v /= n;
    return acc;
}

ForestModel train_forest(const LabelledMatrix& data, const ForestOptions& opt) {
    if (data.rows() == 0) throw DataError("train_forest: empty training data");
    if (opt.n_trees == 0) throw ConfigError("train_forest: n_trees must be >= 1");

    ForestModel model;
    model.layout = data.layout;
    model.n_features = data.n_features;
    model.trees.resize(opt.n_trees);

    parallel_for(opt.n_trees, opt.threads, [&](std::size_t t) {
        TreeOptions topt;
        topt.max_depth = opt.max_depth;
        topt.min_leaf = opt.min_leaf;
        topt.feature_subsample = opt.feature_subsample;
        topt.seed = derive_seed(opt.seed, "forest-tree", t);

        std::vector<std::size_t> rows;
        if (opt.row_subsample >= 1.0) {
            rows.resize(data.rows());
            for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        } else {
            Rng row_rng(derive_seed(opt.seed, "forest-rows", t));
            const std::size_t take = std::max<std::size_t>(
                1, static_cast<std::size_t>(opt.row_subsample * static_cast<double>(data.rows())));
            std::vector<std::size_t> pool(data.rows());
            for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
            for (std::size_t i = 0; i < take; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(row_rng.below(pool.size() - i));
                std::swap(pool[i], pool[j]);
            }
            pool.resize(take);
            std::sort(pool.begin(), pool.end());
            rows = std::move(pool);
        }
        model.trees[t] = TreeBuilder(data, topt).build(std::move(rows));
    });
    return model;
}

}  // namespace raceproxy::ml
