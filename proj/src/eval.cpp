#include "raceproxy/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "raceproxy/csv.hpp"
#include "raceproxy/errors.hpp"

namespace raceproxy {

double auc_one_vs_rest(std::span<const double> scores, std::span<const char> labels) {
    if (scores.size() != labels.size())
        throw ConfigError("auc: scores and labels must align");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (char l : labels) n_pos += l ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw UndefinedMetricError("auc: both a positive and a negative label are required");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tie groups; U = rank sum of positives - n1(n1+1)/2.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

CalibrationCurve calibration_curve(std::span<const double> scores, std::span<const char> labels) {
    if (scores.size() != labels.size())
        throw ConfigError("calibration: scores and labels must align");
    CalibrationCurve curve;
    std::array<double, 10> score_sum{};
    std::array<double, 10> pos_sum{};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = scores[i];
        if (s < 0.0 || s > 1.0)
            throw DataError("calibration: score " + fmt_short(s) + " outside [0,1]");
        const std::size_t bin = std::min<std::size_t>(9, static_cast<std::size_t>(s * 10.0));
        ++curve.bins[bin].count;
        score_sum[bin] += s;
        pos_sum[bin] += labels[i] ? 1.0 : 0.0;
    }
    curve.total = scores.size();
    for (std::size_t b = 0; b < 10; ++b) {
        auto& bin = curve.bins[b];
        bin.populated = bin.count > 0;
        if (bin.populated) {
            bin.mean_score = score_sum[b] / static_cast<double>(bin.count);
            bin.observed = pos_sum[b] / static_cast<double>(bin.count);
        }
    }
    return curve;
}

AggMode parse_agg_mode(std::string_view s) {
    if (s == "prob") return AggMode::Prob;
    if (s == "argmax") return AggMode::Argmax;
    throw ConfigError("unknown aggregation mode '" + std::string(s) + "' (expected prob|argmax)");
}

std::vector<TractAggregate> aggregate_tracts(const Dataset& d,
                                             std::span<const PosteriorDistribution> posteriors,
                                             AggMode mode) {
    if (posteriors.size() != d.size())
        throw ConfigError("aggregate_tracts: posteriors must align with records");
    std::map<std::string, TractAggregate> tracts;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& rec = d.records[i];
        if (!rec.has_label())
            throw DataError("aggregate_tracts: record " + rec.record_id + " has no label");
        if (rec.tract_id.empty())
            throw DataError("aggregate_tracts: record " + rec.record_id + " has no tract");
        auto& agg = tracts[rec.tract_id];
        agg.tract_id = rec.tract_id;
        ++agg.n;
        agg.truth[static_cast<std::size_t>(*rec.label)] += 1.0;
        if (mode == AggMode::Prob) {
            for (std::size_t r = 0; r < kNumRaces; ++r) agg.estimated[r] += posteriors[i].probs[r];
        } else {
            agg.estimated[posteriors[i].top_race()] += 1.0;
        }
    }
    std::vector<TractAggregate> out;
    out.reserve(tracts.size());
    for (auto& [id, agg] : tracts) {
        const double n = static_cast<double>(agg.n);
        for (std::size_t r = 0; r < kNumRaces; ++r) {
            agg.estimated[r] /= n;
            agg.truth[r] /= n;
        }
        out.push_back(std::move(agg));
    }
    return out;
}

double tract_rmse(std::span<const TractAggregate> aggs, std::size_t race) {
    if (aggs.empty()) throw DataError("tract_rmse: no aggregates");
    double weighted = 0.0, total = 0.0;
    for (const auto& a : aggs) {
        const double err = a.estimated[race] - a.truth[race];
        weighted += static_cast<double>(a.n) * err * err;
        total += static_cast<double>(a.n);
    }
    return std::sqrt(weighted / total);
}

double tract_bias(std::span<const TractAggregate> aggs, std::size_t race) {
    if (aggs.empty()) throw DataError("tract_bias: no aggregates");
    double weighted = 0.0, total = 0.0;
    for (const auto& a : aggs) {
        weighted += static_cast<double>(a.n) * (a.estimated[race] - a.truth[race]);
        total += static_cast<double>(a.n);
    }
    return weighted / total;
}

EvalReport full_report(const Dataset& truth,
                       const std::vector<std::pair<std::string,
                                                   std::span<const PosteriorDistribution>>>& methods,
                       AggMode mode, const std::string& state, const std::string& layout) {
    EvalReport report;
    report.state = state;
    report.layout = layout;

    std::vector<char> is_race(truth.size());
    std::vector<double> scores(truth.size());
    for (const auto& [name, posteriors] : methods) {
        if (posteriors.size() != truth.size())
            throw ConfigError("full_report: posterior set '" + name + "' does not align");
        MethodEval me;
        me.method = name;
        const auto aggs = aggregate_tracts(truth, posteriors, mode);
        for (std::size_t r = 0; r < kNumRaces; ++r) {
            for (std::size_t i = 0; i < truth.size(); ++i) {
                is_race[i] = truth.records[i].label == static_cast<int>(r) ? 1 : 0;
                scores[i] = posteriors[i].probs[r];
            }
            me.auc[r] = auc_one_vs_rest(scores, is_race);
            me.calibration[r] = calibration_curve(scores, is_race);
            me.rmse[r] = tract_rmse(aggs, r);
            me.bias[r] = tract_bias(aggs, r);
        }
        report.methods.push_back(std::move(me));
    }
    return report;
}

namespace {

std::string metric_csv(const EvalReport& report,
                       const std::function<double(const MethodEval&, std::size_t)>& value) {
    std::ostringstream os;
    os << "race";
    for (const auto& m : report.methods) os << ',' << m.method;
    os << '\n';
    for (std::size_t r = 0; r < kNumRaces; ++r) {
        os << race_name(r);
        for (const auto& m : report.methods) os << ',' << fmt_short(value(m, r));
        os << '\n';
    }
    return os.str();
}

}  // namespace

std::string EvalReport::auc_csv() const {
    return metric_csv(*this, [](const MethodEval& m, std::size_t r) { return m.auc[r]; });
}

std::string EvalReport::rmse_csv() const {
    return metric_csv(*this, [](const MethodEval& m, std::size_t r) { return m.rmse[r]; });
}

std::string EvalReport::bias_csv() const {
    return metric_csv(*this, [](const MethodEval& m, std::size_t r) { return m.bias[r]; });
}

std::string EvalReport::calibration_csv() const {
    std::ostringstream os;
    os << "method,race,bin,mean_pred,observed,count\n";
    for (const auto& m : methods) {
        for (std::size_t r = 0; r < kNumRaces; ++r) {
            for (std::size_t b = 0; b < 10; ++b) {
                const auto& bin = m.calibration[r].bins[b];
                os << m.method << ',' << race_name(r) << ',' << b << ','
                   << (bin.populated ? fmt_short(bin.mean_score) : "") << ','
                   << (bin.populated ? fmt_short(bin.observed) : "") << ',' << bin.count << '\n';
            }
        }
    }
    return os.str();
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "evaluation";
    if (!state.empty()) os << " for state " << state;
    if (!layout.empty()) os << " (layout " << layout << ")";
    os << '\n';
    auto table = [&](const char* title, const std::function<double(const MethodEval&, std::size_t)>& v) {
        os << '\n' << title << '\n';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%-10s", "race");
        os << buf;
        for (const auto& m : methods) {
            std::snprintf(buf, sizeof(buf), " %12s", m.method.c_str());
            os << buf;
        }
        os << '\n';
        for (std::size_t r = 0; r < kNumRaces; ++r) {
            std::snprintf(buf, sizeof(buf), "%-10s", std::string(race_name(r)).c_str());
            os << buf;
            for (const auto& m : methods) {
                std::snprintf(buf, sizeof(buf), " %12.4f", v(m, r));
                os << buf;
            }
            os << '\n';
        }
    };
    table("AUC", [](const MethodEval& m, std::size_t r) { return m.auc[r]; });
    table("tract RMSE", [](const MethodEval& m, std::size_t r) { return m.rmse[r]; });
    table("tract bias", [](const MethodEval& m, std::size_t r) { return m.bias[r]; });
    return os.str();
}

}  // namespace raceproxy
