#include "raceproxy/ml/data.hpp"

#include "raceproxy/errors.hpp"

namespace raceproxy::ml {

void LabelledMatrix::add_row(std::span<const double> features, int label, std::string st,
                             std::string tr) {
    if (features.size() != n_features)
        throw ConfigError("labelled matrix: feature arity mismatch");
    if (label < 0 || label >= static_cast<int>(kNumRaces))
        throw DataError("labelled matrix: label out of range");
    x.insert(x.end(), features.begin(), features.end());
    y.push_back(label);
    state.push_back(std::move(st));
    tract.push_back(std::move(tr));
}

LabelledMatrix LabelledMatrix::select(std::span<const std::size_t> indices) const {
    LabelledMatrix out;
    out.layout = layout;
    out.n_features = n_features;
    out.x.reserve(indices.size() * n_features);
    out.y.reserve(indices.size());
    for (std::size_t i : indices) {
        const auto r = row(i);
        out.x.insert(out.x.end(), r.begin(), r.end());
        out.y.push_back(y[i]);
        out.state.push_back(state[i]);
        out.tract.push_back(tract[i]);
    }
    return out;
}

Vec5 LabelledMatrix::base_rates() const {
    Vec5 rates{};
    if (y.empty()) return rates;
    for (int label : y) rates[static_cast<std::size_t>(label)] += 1.0;
    for (auto& r : rates) r /= static_cast<double>(y.size());
    return rates;
}

LabelledMatrix build_matrix(const Dataset& d, const TableSet& tables, Layout layout) {
    LabelledMatrix m;
    m.layout = layout;
    m.n_features = layout_width(layout);
    for (const auto& rec : d.records) {
        if (!rec.has_label()) continue;
        const FeatureVector fv = make_features(rec, tables, layout);
        m.add_row(fv.values, *rec.label, rec.state, rec.tract_id);
    }
    return m;
}

}  // namespace raceproxy::ml
