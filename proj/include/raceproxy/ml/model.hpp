#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "raceproxy/ml/gbm.hpp"
#include "raceproxy/ml/mlr.hpp"
#include "raceproxy/ml/tree.hpp"

namespace raceproxy::ml {

enum class ModelFamily { Mlr, ElasticNet, Tree, Forest, Gbm };

std::string_view family_str(ModelFamily f);
ModelFamily parse_family(std::string_view s);

// A trained classifier plus the metadata that pins down how it was produced.
struct Model {
    ModelFamily family = ModelFamily::Mlr;
    Layout layout = Layout::Base;
    std::uint64_t seed = 0;
    std::vector<std::string> training_states;
    std::map<std::string, double> hyperparameters;
    std::variant<MlrModel, TreeModel, ForestModel, GbmModel> impl;

    std::size_t n_features() const { return layout_width(layout); }
    Vec5 predict(std::span<const double> x) const;
};

// Family-specific hyperparameter defaults (the tuning ranges' midpoints are
// not used; these are the documented desk-scale defaults).
std::map<std::string, double> default_params(ModelFamily f);

// Trains `family` on `data` using defaults overridden by `params`.
// Recognized keys per family:
//   mlr:        step_size, max_epochs, tolerance
//   elasticnet: lambda, delta (+ mlr keys)
//   tree:       max_depth, min_leaf
//   forest:     n_trees, feature_subsample, row_subsample, max_depth, min_leaf
//   gbm:        iterations, learning_rate, max_depth, gamma, leaf_penalty, min_leaf
Model train_model(ModelFamily family, const LabelledMatrix& data,
                  const std::map<std::string, double>& params, std::uint64_t seed,
                  std::size_t threads = 1);

// Versioned text round-trip.
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path);

}  // namespace raceproxy::ml
