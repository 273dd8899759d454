#pragma once

#include <span>
#include <string>
#include <vector>

#include "raceproxy/bisg.hpp"
#include "raceproxy/ml/model.hpp"
#include "raceproxy/ml/tune.hpp"

namespace raceproxy::ml {

struct LosoOptions {
    ModelFamily family = ModelFamily::Mlr;
    Layout layout = Layout::Base;
    double scale = 1.0;  // scales the tuning/training sample-size defaults
    std::size_t tune_rows_base = 100000;
    std::size_t train_rows_base = 1000000;
    bool do_tune = false;
    TuneSpec tune_spec;                       // ranges default per family
    std::map<std::string, double> params;     // used when do_tune is false
    double name_floor = 1.0;                  // name-table smoothing
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

// Proof-of-protocol record emitted per fold.
struct FoldManifest {
    std::string held_out;
    std::vector<std::string> training_states;
    std::size_t tune_rows = 0;
    std::size_t train_rows = 0;
    std::string family;
    std::string layout;
    std::uint64_t seed = 0;

    std::string to_text() const;
};

struct LosoFold {
    FoldManifest manifest;
    Model model;
    NameTable first_table;   // built from the training states (extended layout)
    NameTable middle_table;
    std::vector<PosteriorDistribution> predictions;  // held-out records, input order
    TuneResult tuning;                               // table empty when tuning was off
};

struct LosoResult {
    std::vector<LosoFold> folds;  // one per held-out state, in input order
};

// Rotates over the states: for each, builds name tables from the remaining
// states, optionally tunes on a subsample, trains on a larger sample, and
// predicts the held-out state. Throws LeakageError if any held-out record
// reaches a training input.
LosoResult run_loso(std::span<const Dataset> states, const SurnameTable& surnames,
                    const GeoTable& geo, const LosoOptions& opt);

// Deterministic without-replacement sample of up to `take` labelled row
// indices (ascending) from the pool.
std::vector<std::size_t> sample_rows(std::size_t pool, std::size_t take, std::uint64_t seed);

}  // namespace raceproxy::ml
