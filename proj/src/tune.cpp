#include "raceproxy/ml/tune.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "raceproxy/csv.hpp"
#include "raceproxy/errors.hpp"
#include "raceproxy/ml/parallel.hpp"
#include "raceproxy/rng.hpp"

namespace raceproxy::ml {

void TuneSpec::validate() const {
    if (folds < 2) throw ConfigError("tune: fold count must be >= 2");
    if (samples < 1) throw ConfigError("tune: hypercube sample count must be >= 1");
    for (const auto& [name, r] : ranges) {
        if (r.hi < r.lo) throw ConfigError("tune: empty range for '" + name + "'");
        if (r.log_scale && r.lo <= 0)
            throw ConfigError("tune: log-scale range for '" + name + "' needs lo > 0");
    }
}

std::map<std::string, ParamRange> default_ranges(ModelFamily f) {
    switch (f) {
        case ModelFamily::Mlr:
            return {};  // no tunables; tuning degenerates to a single point
        case ModelFamily::ElasticNet:
            return {{"lambda", {1e-6, 1e1, true, false}}, {"delta", {0.0, 1.0, false, false}}};
        case ModelFamily::Tree:
            return {{"max_depth", {2, 10, false, true}}, {"min_leaf", {1, 64, true, true}}};
        case ModelFamily::Forest:
            return {{"n_trees", {50, 500, false, true}},
                    {"max_depth", {2, 10, false, true}},
                    {"feature_subsample", {0.3, 1.0, false, false}},
                    {"row_subsample", {0.5, 1.0, false, false}}};
        case ModelFamily::Gbm:
            return {{"iterations", {50, 500, false, true}},
                    {"learning_rate", {0.01, 0.3, true, false}},
                    {"max_depth", {2, 10, false, true}},
                    {"leaf_penalty", {0.1, 10.0, true, false}}};
    }
    return {};
}

std::vector<std::map<std::string, double>> latin_hypercube(
    const std::map<std::string, ParamRange>& ranges, std::size_t samples, std::uint64_t seed) {
    std::vector<std::map<std::string, double>> points(samples);
    std::size_t dim = 0;
    for (const auto& [name, range] : ranges) {
        Rng rng(derive_seed(seed, "lhs", dim++));
        std::vector<std::size_t> strata(samples);
        for (std::size_t i = 0; i < samples; ++i) strata[i] = i;
        rng.shuffle(strata);
        for (std::size_t i = 0; i < samples; ++i) {
            const double u = (static_cast<double>(strata[i]) + rng.uniform()) /
                             static_cast<double>(samples);
            double v;
            if (range.log_scale)
                v = std::exp(std::log(range.lo) + u * (std::log(range.hi) - std::log(range.lo)));
            else
                v = range.lo + u * (range.hi - range.lo);
            if (range.integer) v = std::round(v);
            points[i][name] = v;
        }
    }
    return points;
}

std::vector<std::size_t> stratified_folds(const LabelledMatrix& data, std::size_t folds,
                                          std::uint64_t seed) {
    std::vector<std::size_t> fold_of(data.rows(), 0);
    for (std::size_t k = 0; k < kNumRaces; ++k) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < data.rows(); ++i)
            if (data.y[i] == static_cast<int>(k)) members.push_back(i);
        Rng rng(derive_seed(seed, "folds", k));
        rng.shuffle(members);
        for (std::size_t j = 0; j < members.size(); ++j) fold_of[members[j]] = j % folds;
    }
    return fold_of;
}

double mean_log_loss(const Model& m, const LabelledMatrix& data) {
    if (data.rows() == 0) throw DataError("mean_log_loss: empty data");
    double loss = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        const Vec5 p = m.predict(data.row(i));
        loss -= std::log(std::max(p[static_cast<std::size_t>(data.y[i])], 1e-15));
    }
    return loss / static_cast<double>(data.rows());
}

TuneResult tune(const TuneSpec& spec, ModelFamily family, const LabelledMatrix& data) {
    spec.validate();
    const auto ranges = spec.ranges.empty() ? default_ranges(family) : spec.ranges;

    // Optional tuning subsample (uniform without replacement, order kept).
    const LabelledMatrix* matrix = &data;
    LabelledMatrix subsampled;
    if (spec.sample_rows > 0 && spec.sample_rows < data.rows()) {
        Rng rng(derive_seed(spec.seed, "tune-sample"));
        std::vector<std::size_t> pool(data.rows());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
        for (std::size_t i = 0; i < spec.sample_rows; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(spec.sample_rows);
        std::sort(pool.begin(), pool.end());
        subsampled = data.select(pool);
        matrix = &subsampled;
    }
    if (matrix->rows() < spec.folds)
        throw DataError("tune: need at least as many rows as folds");

    auto points = ranges.empty() ? std::vector<std::map<std::string, double>>{{}}
                                 : latin_hypercube(ranges, spec.samples, spec.seed);

    const auto fold_of = stratified_folds(*matrix, spec.folds, spec.seed);
    std::vector<LabelledMatrix> train_split(spec.folds), test_split(spec.folds);
    for (std::size_t f = 0; f < spec.folds; ++f) {
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < matrix->rows(); ++i)
            (fold_of[i] == f ? test_idx : train_idx).push_back(i);
        if (test_idx.empty() || train_idx.empty())
            throw DataError("tune: a fold came out empty; reduce fold count");
        train_split[f] = matrix->select(train_idx);
        test_split[f] = matrix->select(test_idx);
    }

    TuneResult result;
    result.table.resize(points.size());

    // (point, fold) grid evaluated in parallel; each cell owns its slot.
    for (std::size_t p = 0; p < points.size(); ++p) {
        result.table[p].params = points[p];
        result.table[p].fold_loss.assign(spec.folds, 0.0);
    }
    parallel_for(points.size() * spec.folds, spec.threads, [&](std::size_t cell) {
        const std::size_t p = cell / spec.folds;
        const std::size_t f = cell % spec.folds;
        const Model m = train_model(family, train_split[f], points[p],
                                    derive_seed(spec.seed, "cv-train", cell), 1);
        result.table[p].fold_loss[f] = mean_log_loss(m, test_split[f]);
    });

    for (auto& row : result.table) {
        double total = 0.0;
        for (double l : row.fold_loss) total += l;
        row.mean_loss = total / static_cast<double>(row.fold_loss.size());
    }
    result.best_index = 0;
    for (std::size_t p = 1; p < result.table.size(); ++p)
        if (result.table[p].mean_loss < result.table[result.best_index].mean_loss)
            result.best_index = p;
    result.best = result.table[result.best_index].params;
    return result;
}

std::string TuneResult::table_csv() const {
    std::ostringstream os;
    os << "point";
    if (!table.empty()) {
        for (const auto& [k, v] : table.front().params) os << ',' << k;
        for (std::size_t f = 0; f < table.front().fold_loss.size(); ++f) os << ",fold" << f;
    }
    os << ",mean_loss,selected\n";
    for (std::size_t p = 0; p < table.size(); ++p) {
        os << p;
        for (const auto& [k, v] : table[p].params) os << ',' << fmt_short(v);
        for (double l : table[p].fold_loss) os << ',' << fmt_short(l);
        os << ',' << fmt_short(table[p].mean_loss) << ',' << (p == best_index ? 1 : 0) << '\n';
    }
    return os.str();
}

}  // namespace raceproxy::ml
