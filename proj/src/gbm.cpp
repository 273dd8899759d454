#include "raceproxy/ml/gbm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "raceproxy/errors.hpp"

namespace raceproxy::ml {

namespace {

// Leaf weights are a Newton step, clamped to keep the quadratic approximation
// honest when hessians are tiny.
constexpr double kMaxLeafWeight = 10.0;

Vec5 stable_softmax(const Vec5& scores) {
    double m = scores[0];
    for (double s : scores) m = std::max(m, s);
    Vec5 p;
    double total = 0.0;
    for (std::size_t k = 0; k < kNumRaces; ++k) {
        p[k] = std::exp(scores[k] - m);
        total += p[k];
    }
    for (auto& v : p) v /= total;
    return p;
}

// Quantile-style binning; when a feature has few distinct values the bins are
// exact and thresholds sit halfway between neighbours.
struct BinMapper {
    std::vector<std::vector<double>> boundaries;  // per feature, ascending cut points

    void fit(const LabelledMatrix& data, std::size_t max_bins) {
        boundaries.resize(data.n_features);
        std::vector<double> values(data.rows());
        for (std::size_t f = 0; f < data.n_features; ++f) {
            for (std::size_t i = 0; i < data.rows(); ++i) values[i] = data.row(i)[f];
            std::sort(values.begin(), values.end());
            values.erase(std::unique(values.begin(), values.end()), values.end());
            auto& cuts = boundaries[f];
            cuts.clear();
            if (values.size() <= 1) continue;
            if (values.size() <= max_bins) {
                for (std::size_t i = 0; i + 1 < values.size(); ++i)
                    cuts.push_back(values[i] + 0.5 * (values[i + 1] - values[i]));
            } else {
                for (std::size_t b = 1; b < max_bins; ++b) {
                    const std::size_t pos = b * values.size() / max_bins;
                    const double cut = values[pos - 1] + 0.5 * (values[pos] - values[pos - 1]);
                    if (cuts.empty() || cut > cuts.back()) cuts.push_back(cut);
                }
            }
        }
    }

    std::uint16_t bin(std::size_t f, double v) const {
        const auto& cuts = boundaries[f];
        return static_cast<std::uint16_t>(
            std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
    }

    std::size_t bins(std::size_t f) const { return boundaries[f].size() + 1; }

    // Real-valued threshold for "bin <= b goes left".
    double threshold_after(std::size_t f, std::size_t b) const { return boundaries[f][b]; }
};

struct NodeRows {
    std::vector<std::uint32_t> rows;
    int node_id;
    std::size_t depth;
};

class GbmTreeBuilder {
public:
    GbmTreeBuilder(const LabelledMatrix& data, const BinMapper& bins,
                   const std::vector<std::uint16_t>& binned, const GbmOptions& opt)
        : data_(data), bins_(bins), binned_(binned), opt_(opt) {}

    // Fits one regression tree to (grad, hess) and returns it with leaf
    // weights scaled by the learning rate. row_leaf_delta receives each row's
    // applied score change.
    GbmTree fit(const std::vector<double>& grad, const std::vector<double>& hess,
                std::vector<double>& row_delta) {
        grad_ = &grad;
        hess_ = &hess;
        GbmTree tree;
        std::vector<NodeRows> stack;
        {
            NodeRows root;
            root.rows.resize(data_.rows());
            for (std::uint32_t i = 0; i < root.rows.size(); ++i) root.rows[i] = i;
            tree.nodes.emplace_back();
            root.node_id = 0;
            root.depth = 0;
            stack.push_back(std::move(root));
        }

        while (!stack.empty()) {
            NodeRows task = std::move(stack.back());
            stack.pop_back();

            double g_total = 0.0, h_total = 0.0;
            for (const auto i : task.rows) {
                g_total += grad[i];
                h_total += hess[i];
            }

            Split split;
            if (task.depth < opt_.max_depth && task.rows.size() >= 2 * opt_.min_leaf)
                split = best_split(task.rows, g_total, h_total);

            if (!split.found) {
                double w = -g_total / (h_total + opt_.omega.leaf_penalty);
                w = std::clamp(w, -kMaxLeafWeight, kMaxLeafWeight) * opt_.learning_rate;
                tree.nodes[task.node_id].weight = w;
                for (const auto i : task.rows) row_delta[i] = w;
                continue;
            }

            NodeRows left, right;
            left.depth = right.depth = task.depth + 1;
            for (const auto i : task.rows) {
                if (binned_[i * data_.n_features + split.feature] <= split.bin)
                    left.rows.push_back(i);
                else
                    right.rows.push_back(i);
            }
            const int left_id = static_cast<int>(tree.nodes.size());
            tree.nodes.emplace_back();
            const int right_id = static_cast<int>(tree.nodes.size());
            tree.nodes.emplace_back();
            tree.nodes[task.node_id].feature = static_cast<int>(split.feature);
            tree.nodes[task.node_id].threshold = bins_.threshold_after(split.feature, split.bin);
            tree.nodes[task.node_id].left = left_id;
            tree.nodes[task.node_id].right = right_id;
            left.node_id = left_id;
            right.node_id = right_id;
            // Right first so the left subtree is processed (and numbered) next.
            stack.push_back(std::move(right));
            stack.push_back(std::move(left));
        }
        return tree;
    }

private:
    struct Split {
        bool found = false;
        std::size_t feature = 0;
        std::size_t bin = 0;  // rows with bin <= this go left
        double gain = 0.0;
    };

    Split best_split(const std::vector<std::uint32_t>& rows, double g_total, double h_total) {
        Split best;
        const double lp = opt_.omega.leaf_penalty;
        const double parent_score = g_total * g_total / (h_total + lp);

        for (std::size_t f = 0; f < data_.n_features; ++f) {
            const std::size_t n_bins = bins_.bins(f);
            if (n_bins < 2) continue;
            hist_g_.assign(n_bins, 0.0);
            hist_h_.assign(n_bins, 0.0);
            hist_n_.assign(n_bins, 0);
            for (const auto i : rows) {
                const std::uint16_t b = binned_[i * data_.n_features + f];
                hist_g_[b] += grad_at(i);
                hist_h_[b] += hess_at(i);
                ++hist_n_[b];
            }
            double g_left = 0.0, h_left = 0.0;
            std::size_t n_left = 0;
            for (std::size_t b = 0; b + 1 < n_bins; ++b) {
                g_left += hist_g_[b];
                h_left += hist_h_[b];
                n_left += hist_n_[b];
                if (n_left < opt_.min_leaf) continue;
                const std::size_t n_right = rows.size() - n_left;
                if (n_right < opt_.min_leaf) break;
                const double g_right = g_total - g_left;
                const double h_right = h_total - h_left;
                const double gain = 0.5 * (g_left * g_left / (h_left + lp) +
                                           g_right * g_right / (h_right + lp) - parent_score) -
                                    opt_.omega.gamma;
                if (gain > best.gain + 1e-12) {
                    best.found = true;
                    best.gain = gain;
                    best.feature = f;
                    best.bin = b;
                }
            }
        }
        return best;
    }

    double grad_at(std::uint32_t i) const { return (*grad_)[i]; }
    double hess_at(std::uint32_t i) const { return (*hess_)[i]; }

    const LabelledMatrix& data_;
    const BinMapper& bins_;
    const std::vector<std::uint16_t>& binned_;
    const GbmOptions& opt_;
    const std::vector<double>* grad_ = nullptr;
    const std::vector<double>* hess_ = nullptr;
    std::vector<double> hist_g_, hist_h_;
    std::vector<std::size_t> hist_n_;
};

}  // namespace

double GbmTree::value(std::span<const double> x) const {
    int node = 0;
    while (nodes[node].feature >= 0) {
        node = x[static_cast<std::size_t>(nodes[node].feature)] <= nodes[node].threshold
                   ? nodes[node].left
                   : nodes[node].right;
    }
    return nodes[node].weight;
}

std::size_t GbmTree::leaves() const {
    std::size_t n = 0;
    for (const auto& node : nodes)
        if (node.feature < 0) ++n;
    return n;
}

Vec5 GbmModel::raw_scores(std::span<const double> x) const {
    Vec5 s = init_score;
    for (std::size_t t = 0; t < iterations; ++t)
        for (std::size_t k = 0; k < kNumRaces; ++k) s[k] += trees[t * kNumRaces + k].value(x);
    return s;
}

Vec5 GbmModel::predict(std::span<const double> x) const { return stable_softmax(raw_scores(x)); }

GbmModel train_gbm(const LabelledMatrix& data, const GbmOptions& opt) {
    if (data.rows() == 0) throw DataError("train_gbm: empty training data");
    const std::size_t n = data.rows();

    GbmModel model;
    model.layout = data.layout;
    model.n_features = data.n_features;
    model.learning_rate = opt.learning_rate;
    model.iterations = opt.iterations;

    const Vec5 rates = data.base_rates();
    for (std::size_t k = 0; k < kNumRaces; ++k)
        model.init_score[k] = std::log(std::max(rates[k], 1e-15));

    BinMapper bins;
    bins.fit(data, std::max<std::size_t>(2, opt.max_bins));
    std::vector<std::uint16_t> binned(n * data.n_features);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = data.row(i);
        for (std::size_t f = 0; f < data.n_features; ++f)
            binned[i * data.n_features + f] = bins.bin(f, row[f]);
    }

    std::vector<Vec5> scores(n, model.init_score);
    std::vector<Vec5> probs(n);
    auto mean_log_loss = [&]() {
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            probs[i] = stable_softmax(scores[i]);
            loss -= std::log(std::max(probs[i][static_cast<std::size_t>(data.y[i])], 1e-300));
        }
        return loss / static_cast<double>(n);
    };

    model.train_loss.reserve(opt.iterations + 1);
    model.train_loss.push_back(mean_log_loss());  // also fills probs

    GbmTreeBuilder builder(data, bins, binned, opt);
    std::vector<double> grad(n), hess(n), row_delta(n);

    for (std::size_t it = 0; it < opt.iterations; ++it) {
        for (std::size_t k = 0; k < kNumRaces; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                const double p = probs[i][k];
                grad[i] = p - (data.y[i] == static_cast<int>(k) ? 1.0 : 0.0);
                hess[i] = std::max(p * (1.0 - p), 1e-16);
            }
            std::fill(row_delta.begin(), row_delta.end(), 0.0);
            GbmTree tree = builder.fit(grad, hess, row_delta);
            for (std::size_t i = 0; i < n; ++i) scores[i][k] += row_delta[i];
            model.trees.push_back(std::move(tree));
        }
        const double loss = mean_log_loss();
        if (!std::isfinite(loss))
            throw DivergenceError("train_gbm: non-finite training loss at iteration " +
                                  std::to_string(it + 1));
        model.train_loss.push_back(loss);
    }
    return model;
}

}  // namespace raceproxy::ml
