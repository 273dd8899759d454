#include "raceproxy/ml/loso.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "raceproxy/errors.hpp"
#include "raceproxy/rng.hpp"

namespace raceproxy::ml {

std::string FoldManifest::to_text() const {
    std::ostringstream os;
    os << "held_out " << held_out << '\n';
    os << "training_states";
    for (const auto& s : training_states) os << ' ' << s;
    os << '\n';
    os << "tune_rows " << tune_rows << '\n';
    os << "train_rows " << train_rows << '\n';
    os << "family " << family << '\n';
    os << "layout " << layout << '\n';
    os << "seed " << seed << '\n';
    os << "leakage_check held-out state absent from all training inputs\n";
    return os.str();
}

std::vector<std::size_t> sample_rows(std::size_t pool, std::size_t take, std::uint64_t seed) {
    take = std::min(take, pool);
    std::vector<std::size_t> indices(pool);
    for (std::size_t i = 0; i < pool; ++i) indices[i] = i;
    if (take < pool) {
        Rng rng(seed);
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(pool - i));
            std::swap(indices[i], indices[j]);
        }
        indices.resize(take);
        std::sort(indices.begin(), indices.end());
    }
    return indices;
}

LosoResult run_loso(std::span<const Dataset> states, const SurnameTable& surnames,
                    const GeoTable& geo, const LosoOptions& opt) {
    if (states.size() < 2) throw ConfigError("run_loso: need at least 2 state datasets");
    {
        std::vector<std::string> names;
        for (const auto& d : states) {
            if (d.provenance.size() != 1)
                throw ConfigError("run_loso: each dataset must cover exactly one state");
            names.push_back(d.provenance.front());
        }
        std::sort(names.begin(), names.end());
        if (std::adjacent_find(names.begin(), names.end()) != names.end())
            throw ConfigError("run_loso: duplicate state dataset");
    }

    LosoResult result;
    for (std::size_t h = 0; h < states.size(); ++h) {
        const std::string held_out = states[h].provenance.front();
        const std::uint64_t fold_seed = derive_seed(opt.seed, "loso", h);

        std::vector<const Dataset*> training;
        for (std::size_t s = 0; s < states.size(); ++s)
            if (s != h) training.push_back(&states[s]);

        // Hard leakage gate: no training record may carry the held-out state.
        for (const Dataset* d : training)
            for (const auto& rec : d->records)
                if (rec.state == held_out)
                    throw LeakageError("run_loso: record " + rec.record_id + " from held-out state " +
                                       held_out + " found in training input");

        LosoFold fold;
        fold.manifest.held_out = held_out;
        for (const Dataset* d : training)
            fold.manifest.training_states.push_back(d->provenance.front());
        fold.manifest.family = std::string(family_str(opt.family));
        fold.manifest.layout = std::string(layout_str(opt.layout));
        fold.manifest.seed = fold_seed;

        // Pool the training rows once; name tables, tuning, and training all
        // draw from this pool.
        Dataset pooled;
        for (const Dataset* d : training) {
            pooled.records.insert(pooled.records.end(), d->records.begin(), d->records.end());
            pooled.provenance.insert(pooled.provenance.end(), d->provenance.begin(),
                                     d->provenance.end());
        }

        TableSet tables;
        tables.surnames = &surnames;
        tables.geo = &geo;
        if (opt.layout == Layout::Extended) {
            const std::span<const Dataset> pooled_span(&pooled, 1);
            fold.first_table =
                build_name_table(pooled_span, NameSlot::First, opt.name_floor, held_out);
            fold.middle_table =
                build_name_table(pooled_span, NameSlot::Middle, opt.name_floor, held_out);
            tables.first = &fold.first_table;
            tables.middle = &fold.middle_table;
        }

        const LabelledMatrix pool_matrix = build_matrix(pooled, tables, opt.layout);
        if (pool_matrix.rows() == 0) throw DataError("run_loso: no labelled training rows");

        const auto scaled = [&](std::size_t base) {
            return std::max<std::size_t>(
                1, static_cast<std::size_t>(std::llround(opt.scale * static_cast<double>(base))));
        };

        std::map<std::string, double> params = opt.params;
        if (opt.do_tune) {
            const auto tune_idx = sample_rows(pool_matrix.rows(), scaled(opt.tune_rows_base),
                                              derive_seed(fold_seed, "tune-rows"));
            const LabelledMatrix tune_matrix = pool_matrix.select(tune_idx);
            fold.manifest.tune_rows = tune_matrix.rows();
            TuneSpec spec = opt.tune_spec;
            spec.seed = derive_seed(fold_seed, "tune");
            spec.threads = opt.threads;
            fold.tuning = tune(spec, opt.family, tune_matrix);
            for (const auto& [k, v] : fold.tuning.best) params[k] = v;
        }

        const auto train_idx = sample_rows(pool_matrix.rows(), scaled(opt.train_rows_base),
                                           derive_seed(fold_seed, "train-rows"));
        const LabelledMatrix train_matrix = pool_matrix.select(train_idx);
        fold.manifest.train_rows = train_matrix.rows();

        fold.model = train_model(opt.family, train_matrix, params,
                                 derive_seed(fold_seed, "train"), opt.threads);
        fold.model.training_states = fold.manifest.training_states;

        fold.predictions.reserve(states[h].size());
        for (const auto& rec : states[h].records) {
            const FeatureVector fv = make_features(rec, tables, opt.layout);
            PosteriorDistribution post;
            post.probs = fold.model.predict(fv.values);
            post.provenance = fold.manifest.family;
            fold.predictions.push_back(std::move(post));
        }
        result.folds.push_back(std::move(fold));
    }
    return result;
}

}  // namespace raceproxy::ml
