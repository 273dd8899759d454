#pragma once

#include <map>
#include <string>
#include <vector>

#include "raceproxy/ml/model.hpp"

namespace raceproxy::ml {

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
    bool log_scale = false;
    bool integer = false;
};

struct TuneSpec {
    std::map<std::string, ParamRange> ranges;  // empty map = family defaults
    std::size_t samples = 8;                   // Latin hypercube points
    std::size_t folds = 5;
    std::size_t sample_rows = 0;  // tuning subsample size; 0 = all rows
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const;
};

// Documented default range boxes per family.
std::map<std::string, ParamRange> default_ranges(ModelFamily f);

// One Latin hypercube draw: `samples` points covering each dimension's strata
// exactly once. Deterministic given seed; map order fixes the dimension order.
std::vector<std::map<std::string, double>> latin_hypercube(
    const std::map<std::string, ParamRange>& ranges, std::size_t samples, std::uint64_t seed);

struct CvRow {
    std::map<std::string, double> params;
    std::vector<double> fold_loss;  // held-fold mean log-loss per fold
    double mean_loss = 0.0;
};

struct TuneResult {
    std::map<std::string, double> best;
    std::size_t best_index = 0;
    std::vector<CvRow> table;

    std::string table_csv() const;  // one row per hypercube point
};

// Latin hypercube over the range box, scored by stratified k-fold CV mean
// log-loss; returns the argmin point (ties to the lowest index) and the full
// table. Deterministic given spec.seed.
TuneResult tune(const TuneSpec& spec, ModelFamily family, const LabelledMatrix& data);

// Stratified-by-label fold assignment (returns fold index per row).
std::vector<std::size_t> stratified_folds(const LabelledMatrix& data, std::size_t folds,
                                          std::uint64_t seed);

// Mean multinomial log-loss of a model over a matrix.
double mean_log_loss(const Model& m, const LabelledMatrix& data);

}  // namespace raceproxy::ml
