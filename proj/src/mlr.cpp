#include "raceproxy/ml/mlr.hpp"

#include <algorithm>
#include <cmath>

#include "raceproxy/errors.hpp"

namespace raceproxy::ml {

namespace {

constexpr std::size_t kRef = kNumRaces - 1;  // reference category: Other

// Stable softmax over the five class scores.
Vec5 softmax(const Vec5& scores) {
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

Vec5 scores_for(std::span<const double> coef, std::size_t stride, std::span<const double> x) {
    Vec5 s{};
    for (std::size_t k = 0; k < kRef; ++k) {
        const double* w = coef.data() + k * stride;
        double acc = w[stride - 1];  // intercept
        for (std::size_t j = 0; j + 1 < stride; ++j) acc += w[j] * x[j];
        s[k] = acc;
    }
    s[kRef] = 0.0;
    return s;
}

bool is_intercept(std::size_t flat, std::size_t stride) { return flat % stride == stride - 1; }

}  // namespace

void ElasticNetConfig::validate() const {
    if (lambda < 0) throw ConfigError("elasticnet: lambda must be >= 0");
    if (delta < 0 || delta > 1) throw ConfigError("elasticnet: delta must be in [0,1]");
}

Vec5 MlrModel::predict(std::span<const double> x) const {
    return softmax(scores_for(coef, stride(), x));
}

Vec5 predict_mlr(const MlrModel& m, const FeatureVector& x) {
    if (x.layout != m.layout || x.values.size() != m.n_features)
        throw ConfigError("mlr predict: feature layout does not match the model");
    return m.predict(x.values);
}

double mlr_objective(const LabelledMatrix& data, std::span<const double> coef,
                     const ElasticNetConfig& reg) {
    const std::size_t n = data.rows();
    const std::size_t stride = data.n_features + 1;
    double nll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec5 p = softmax(scores_for(coef, stride, data.row(i)));
        nll -= std::log(std::max(p[static_cast<std::size_t>(data.y[i])], 1e-300));
    }
    nll /= static_cast<double>(n);

    double ridge = 0.0, lasso = 0.0;
    for (std::size_t k = 0; k < kRef; ++k) {
        for (std::size_t j = 0; j + 1 < stride; ++j) {  // intercepts unpenalized
            const double w = coef[k * stride + j];
            ridge += w * w;
            lasso += std::abs(w);
        }
    }
    return nll + reg.lambda * ((1.0 - reg.delta) * ridge + reg.delta * lasso);
}

void mlr_gradient(const LabelledMatrix& data, std::span<const double> coef,
                  const ElasticNetConfig& reg, std::span<double> grad) {
    const std::size_t n = data.rows();
    const std::size_t stride = data.n_features + 1;
    std::fill(grad.begin(), grad.end(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = data.row(i);
        const Vec5 p = softmax(scores_for(coef, stride, x));
        for (std::size_t k = 0; k < kRef; ++k) {
            const double gk = (p[k] - (data.y[i] == static_cast<int>(k) ? 1.0 : 0.0)) * inv_n;
            double* g = grad.data() + k * stride;
            for (std::size_t j = 0; j + 1 < stride; ++j) g[j] += gk * x[j];
            g[stride - 1] += gk;
        }
    }
    if (reg.lambda > 0) {
        for (std::size_t k = 0; k < kRef; ++k) {
            for (std::size_t j = 0; j + 1 < stride; ++j) {
                const double w = coef[k * stride + j];
                grad[k * stride + j] += reg.lambda * (2.0 * (1.0 - reg.delta) * w +
                                                      reg.delta * (w > 0 ? 1.0 : (w < 0 ? -1.0 : 0.0)));
            }
        }
    }
}

MlrModel train_mlr(const LabelledMatrix& data, std::optional<ElasticNetConfig> reg,
                   const MlrOptions& opt, MlrTrainInfo* info) {
    if (data.rows() == 0) throw DataError("train_mlr: empty training data");
    {
        bool multi = false;
        for (std::size_t i = 1; i < data.rows(); ++i)
            if (data.y[i] != data.y[0]) { multi = true; break; }
        if (!multi) throw DataError("train_mlr: need at least two distinct labels");
    }
    const ElasticNetConfig cfg = reg.value_or(ElasticNetConfig{});
    cfg.validate();

    MlrModel model;
    model.layout = data.layout;
    model.n_features = data.n_features;
    const std::size_t stride = model.stride();
    model.coef.assign(kNumRaces * stride, 0.0);

    // Gradient of the smooth part (NLL + ridge); the lasso term is handled by
    // the proximal soft-threshold below.
    const ElasticNetConfig smooth{cfg.lambda * (1.0 - cfg.delta), 0.0};
    std::vector<double> grad(model.coef.size(), 0.0);
    std::vector<double> cand(model.coef.size(), 0.0);

    double loss = mlr_objective(data, model.coef, cfg);
    double step = opt.step_size;
    std::size_t epoch = 0;
    for (; epoch < opt.max_epochs; ++epoch) {
        mlr_gradient(data, model.coef, smooth, grad);

        double cand_loss = 0.0;
        for (;;) {
            const double shrink = step * cfg.lambda * cfg.delta;
            for (std::size_t k = 0; k < kRef; ++k) {
                for (std::size_t j = 0; j < stride; ++j) {
                    const std::size_t f = k * stride + j;
                    double w = model.coef[f] - step * grad[f];
                    if (shrink > 0 && !is_intercept(f, stride))
                        w = w > shrink ? w - shrink : (w < -shrink ? w + shrink : 0.0);
                    cand[f] = w;
                }
            }
            cand_loss = mlr_objective(data, cand, cfg);
            if (!std::isfinite(cand_loss))
                throw DivergenceError("train_mlr: non-finite loss at step size " +
                                      std::to_string(step));
            if (cand_loss <= loss + 1e-12) break;
            step *= 0.5;
            if (step < 1e-14)
                throw DivergenceError("train_mlr: no descent even at step size " +
                                      std::to_string(step));
        }

        std::copy(cand.begin(), cand.end(), model.coef.begin());
        const bool converged = std::abs(loss - cand_loss) <= opt.tolerance * std::max(1.0, std::abs(loss));
        loss = cand_loss;
        if (converged) { ++epoch; break; }
        step = std::min(step * 1.25, opt.step_size * 64.0);
    }

    if (info) {
        info->final_loss = loss;
        info->epochs = epoch;
    }
    return model;
}

}  // namespace raceproxy::ml
