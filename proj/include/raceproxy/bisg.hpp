#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "raceproxy/person.hpp"
#include "raceproxy/race.hpp"
#include "raceproxy/tables.hpp"

namespace raceproxy {

// Which fallbacks fired while computing a posterior.
namespace flag {
inline constexpr std::uint8_t kSurnameResidual = 1u << 0;  // surname missing from table
inline constexpr std::uint8_t kGeoMissing = 1u << 1;       // block unknown or all-zero
inline constexpr std::uint8_t kNameOov = 1u << 2;          // first/middle name out of vocabulary
inline constexpr std::uint8_t kUniformFallback = 1u << 3;  // all unnormalized mass was zero
inline constexpr std::uint8_t kAll =
    kSurnameResidual | kGeoMissing | kNameOov | kUniformFallback;

std::string to_string(std::uint8_t flags);  // compact, e.g. "res+geo", "-" if none
std::uint8_t from_string(std::string_view s);
}  // namespace flag

struct PosteriorDistribution {
    Vec5 probs{};
    std::string provenance;  // "bisg", "extended", or a model name
    std::uint8_t flags = 0;

    std::size_t top_race() const { return argmax(probs); }
};

// Eq. 1: posterior over race from P(G=g|R=r) * P(R=r|S=s), normalized.
// Unknown block or an all-zero geography row drops the geography factor
// (geo-missing flag); if all mass is zero the posterior is uniform with every
// flag set.
PosteriorDistribution bisg_posterior(const PersonRecord& p, const SurnameTable& surnames,
                                     const GeoTable& geo);

// Eq. 2: multiplies in P(first|R) and P(middle|R). An empty name drops its
// factor (so with both names empty this equals bisg_posterior bitwise); a
// non-empty name outside the vocabulary contributes the OOV vector.
PosteriorDistribution extended_posterior(const PersonRecord& p, const SurnameTable& surnames,
                                         const GeoTable& geo, const NameTable& first,
                                         const NameTable& middle);

enum class BayesMethod { Bisg, Extended };

struct BatchReport {
    std::size_t records = 0;
    std::size_t surname_residual = 0;
    std::size_t geo_missing = 0;
    std::size_t name_oov = 0;
    std::size_t uniform_fallback = 0;

    void add(std::uint8_t flags);
    std::string to_text() const;
};

struct BatchResult {
    std::vector<PosteriorDistribution> posteriors;  // same order as input
    BatchReport report;
};

BatchResult predict_batch(const Dataset& d, BayesMethod method, const TableSet& tables);

}  // namespace raceproxy
