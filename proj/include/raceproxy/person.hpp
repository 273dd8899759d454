#pragma once

#include <optional>
#include <string>
#include <vector>

#include "raceproxy/race.hpp"

namespace raceproxy {

// One voter-shaped row after canonicalization. tract_id is always the
// 11-character prefix of block_id.
struct PersonRecord {
    std::string record_id;
    std::string surname;
    std::string first_name;   // may be empty
    std::string middle_name;  // may be empty
    std::string state;        // 2-letter code or synthetic state name
    std::string block_id;     // 15-digit census block GEOID
    std::string tract_id;
    std::optional<int> label;  // 0..4, or kUnknownRace before filtering

    bool has_label() const { return label.has_value() && *label != kUnknownRace; }
};

struct Dataset {
    std::vector<PersonRecord> records;
    // Distinct state codes observed, sorted.
    std::vector<std::string> provenance;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
};

}  // namespace raceproxy
