#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace raceproxy {

// Fixed category order. Every probability 5-vector in the project is indexed
// in this order.
enum class Race : int {
    White = 0,
    Black = 1,
    Hispanic = 2,
    Asian = 3,
    Other = 4,
};

inline constexpr std::size_t kNumRaces = 5;

// Ingestion-only sentinel for rows whose race column is present but not one
// of the five categories. Never survives filtering.
inline constexpr int kUnknownRace = 5;

using Vec5 = std::array<double, kNumRaces>;

inline constexpr std::array<std::string_view, kNumRaces> kRaceNames = {
    "white", "black", "hispanic", "asian", "other"};

inline std::string_view race_name(std::size_t r) { return kRaceNames[r]; }
inline std::string_view race_name(Race r) { return kRaceNames[static_cast<std::size_t>(r)]; }

// Case-insensitive parse of a race column cell. Returns:
//   - the category index 0..4 for the five categories,
//   - kUnknownRace for "unknown"/"u" or any unrecognized non-empty value,
//   - nullopt for an empty cell (label absent).
std::optional<int> parse_race_label(std::string_view cell);

inline double sum(const Vec5& v) {
    return v[0] + v[1] + v[2] + v[3] + v[4];
}

// Index of the largest entry; ties break to the lowest category index.
inline std::size_t argmax(const Vec5& v) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < kNumRaces; ++r)
        if (v[r] > v[best]) best = r;
    return best;
}

// Divides by the sum. Caller guarantees sum(v) > 0.
inline Vec5 normalized(const Vec5& v) {
    const double s = sum(v);
    return {v[0] / s, v[1] / s, v[2] / s, v[3] / s, v[4] / s};
}

inline constexpr Vec5 uniform_vec5() { return {0.2, 0.2, 0.2, 0.2, 0.2}; }

}  // namespace raceproxy
