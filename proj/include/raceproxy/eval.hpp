#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "raceproxy/bisg.hpp"
#include "raceproxy/person.hpp"
#include "raceproxy/race.hpp"

namespace raceproxy {

// Rank-based (Mann-Whitney) one-vs-rest AUC; tied scores contribute 1/2.
// Throws UndefinedMetricError unless both classes are present.
double auc_one_vs_rest(std::span<const double> scores, std::span<const char> labels);

struct CalibrationBin {
    double mean_score = 0.0;  // mean predicted probability in the bin
    double observed = 0.0;    // positive fraction in the bin
    std::size_t count = 0;
    bool populated = false;
};

// Decile bins [0,0.1), ..., [0.9,1.0]; a score of exactly 1.0 lands in the
// last bin. Empty bins stay in place, flagged unpopulated.
struct CalibrationCurve {
    std::array<CalibrationBin, 10> bins{};
    std::size_t total = 0;  // always equals the number of scored records
};

CalibrationCurve calibration_curve(std::span<const double> scores, std::span<const char> labels);

struct TractAggregate {
    std::string tract_id;
    Vec5 estimated{};  // mean posterior (or argmax fractions) over the tract
    Vec5 truth{};      // self-reported label fractions
    std::size_t n = 0;
};

enum class AggMode { Prob, Argmax };

AggMode parse_agg_mode(std::string_view s);

// Requires every record to carry a tract and a label; posteriors must align
// with the records. Output is sorted by tract id.
std::vector<TractAggregate> aggregate_tracts(const Dataset& d,
                                             std::span<const PosteriorDistribution> posteriors,
                                             AggMode mode = AggMode::Prob);

// Weighted by tract record count: RMSE = sqrt(sum n (est-true)^2 / sum n),
// bias = sum n (est-true) / sum n (positive = overestimate).
double tract_rmse(std::span<const TractAggregate> aggs, std::size_t race);
double tract_bias(std::span<const TractAggregate> aggs, std::size_t race);

struct MethodEval {
    std::string method;
    std::array<double, kNumRaces> auc{};
    std::array<CalibrationCurve, kNumRaces> calibration{};
    std::array<double, kNumRaces> rmse{};
    std::array<double, kNumRaces> bias{};
};

struct EvalReport {
    std::string state;
    std::string layout;
    std::vector<MethodEval> methods;

    // Appendix-shaped tables: one row per race, one column per method.
    std::string auc_csv() const;
    std::string rmse_csv() const;
    std::string bias_csv() const;
    // Plot-ready long format: method,race,bin,mean_pred,observed,count.
    std::string calibration_csv() const;
    std::string to_text() const;
};

// Scores each named posterior set against the labelled dataset. Methods keep
// their given order; metrics are deterministic.
EvalReport full_report(const Dataset& truth,
                       const std::vector<std::pair<std::string,
                                                   std::span<const PosteriorDistribution>>>& methods,
                       AggMode mode = AggMode::Prob, const std::string& state = "",
                       const std::string& layout = "");

}  // namespace raceproxy
