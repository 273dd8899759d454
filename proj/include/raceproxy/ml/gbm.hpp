#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "raceproxy/ml/data.hpp"
#include "raceproxy/race.hpp"

namespace raceproxy::ml {

// Regression tree for one boosting step: scalar leaf weights, already scaled
// by the learning rate.
struct GbmNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double weight = 0.0;
};

struct GbmTree {
    std::vector<GbmNode> nodes;
    double value(std::span<const double> x) const;
    std::size_t leaves() const;
};

// Per-node penalty: gamma per leaf plus 0.5 * leaf_penalty * weight^2.
struct GbmOmega {
    double gamma = 0.0;
    double leaf_penalty = 1.0;
};

struct GbmOptions {
    std::size_t iterations = 100;
    double learning_rate = 0.1;
    std::size_t max_depth = 4;
    GbmOmega omega{};
    std::size_t min_leaf = 1;
    std::size_t max_bins = 255;
    std::uint64_t seed = 0;
};

// One-vs-rest additive ensembles with a softmax link and multinomial
// log-loss, fit on gradient/hessian statistics in the XGBoost style.
struct GbmModel {
    Layout layout = Layout::Base;
    std::size_t n_features = kBaseFeatures;
    Vec5 init_score{};  // log base rates
    double learning_rate = 0.1;
    std::size_t iterations = 0;
    std::vector<GbmTree> trees;  // iterations * kNumRaces, class-major per iteration
    std::vector<double> train_loss;  // [0] = base-rate loss, then one entry per iteration

    Vec5 raw_scores(std::span<const double> x) const;
    Vec5 predict(std::span<const double> x) const;  // softmax of raw scores
};

GbmModel train_gbm(const LabelledMatrix& data, const GbmOptions& opt = {});

}  // namespace raceproxy::ml
