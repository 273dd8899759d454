#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "raceproxy/ml/data.hpp"
#include "raceproxy/race.hpp"

namespace raceproxy::ml {

// Elasticnet penalty lambda * [(1-delta) * sum(w^2) + delta * sum(|w|)] over
// non-intercept coefficients.
struct ElasticNetConfig {
    double lambda = 0.0;  // >= 0
    double delta = 0.0;   // in [0, 1]; 0 = ridge, 1 = lasso

    void validate() const;
};

struct MlrOptions {
    double step_size = 1.0;
    std::size_t max_epochs = 2000;
    double tolerance = 1e-9;  // relative objective change
    std::uint64_t seed = 0;
};

// Multinomial logistic regression; the reference category (Other, index 4)
// keeps an identically-zero coefficient row. Coefficient layout is row-major
// kNumRaces x (n_features + 1) with the intercept last in each row.
struct MlrModel {
    Layout layout = Layout::Base;
    std::size_t n_features = kBaseFeatures;
    std::vector<double> coef;

    std::size_t stride() const { return n_features + 1; }
    Vec5 predict(std::span<const double> x) const;
};

struct MlrTrainInfo {
    double final_loss = 0.0;
    std::size_t epochs = 0;
};

// Full-batch proximal gradient descent on mean NLL + penalty: the ridge part
// rides in the gradient, the lasso part is applied as soft-thresholding after
// each step. Deterministic; throws DivergenceError on a non-finite objective.
MlrModel train_mlr(const LabelledMatrix& data, std::optional<ElasticNetConfig> reg,
                   const MlrOptions& opt = {}, MlrTrainInfo* info = nullptr);

// Softmax prediction for an assembled feature vector (layout checked).
Vec5 predict_mlr(const MlrModel& m, const FeatureVector& x);

// --- loss internals, exposed for gradient verification -----------------

// Full objective: mean NLL plus the elasticnet penalty.
double mlr_objective(const LabelledMatrix& data, std::span<const double> coef,
                     const ElasticNetConfig& reg);

// Analytic gradient of mean NLL + ridge + lasso-subgradient (sign(w), zero at
// w = 0). Matches central differences of mlr_objective wherever no coefficient
// sits exactly at zero.
void mlr_gradient(const LabelledMatrix& data, std::span<const double> coef,
                  const ElasticNetConfig& reg, std::span<double> grad);

}  // namespace raceproxy::ml
