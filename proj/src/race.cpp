#include "raceproxy/race.hpp"

#include <cctype>

namespace raceproxy {

std::optional<int> parse_race_label(std::string_view cell) {
    std::string low;
    low.reserve(cell.size());
    for (char c : cell) {
        if (c == ' ' || c == '\t') continue;
        low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (low.empty()) return std::nullopt;
    for (std::size_t r = 0; r < kNumRaces; ++r) {
        if (low == kRaceNames[r] || (low.size() == 1 && low[0] == kRaceNames[r][0]))
            return static_cast<int>(r);
    }
    // "unknown", "u", and anything unrecognized all land on the sentinel.
    return kUnknownRace;
}

}  // namespace raceproxy
