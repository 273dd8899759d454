#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "raceproxy/person.hpp"

namespace raceproxy {

// Canonical name form: uppercase ASCII A-Z only. Diacritics are folded,
// apostrophes/hyphens/periods/spaces removed, and trailing generational
// suffix tokens (JR, SR, II, III, IV) stripped while at least one other
// whitespace-separated token remains. Total and idempotent.
std::string canonicalize_name(std::string_view raw);

// Maps logical fields to column names in a person file. Empty optional-column
// names mean the column is absent.
struct PersonSchema {
    std::string record_id = "record_id";
    std::string surname = "surname";
    std::string block_id = "block_id";
    std::string state = "state";
    std::string first_name = "first_name";   // optional
    std::string middle_name = "middle_name"; // optional
    std::string race = "race";               // optional
    char delimiter = ',';
};

struct MalformedRow {
    std::size_t line;  // 1-based line number in the file
    std::string reason;
};

struct ParseResult {
    Dataset dataset;
    std::vector<MalformedRow> malformed;
};

// Reads a delimiter-separated person file. Names are canonicalized, row order
// is preserved, rows with an invalid block_id are reported and skipped.
// Throws ConfigError on a missing required column, IoError on an unreadable
// file, DataError on duplicate record ids.
ParseResult parse_person_file(const std::string& path, const PersonSchema& schema = {});

struct RemovalReport {
    std::size_t unknown_label = 0;
    std::size_t empty_surname = 0;
    std::size_t bad_block = 0;

    std::size_t total() const { return unknown_label + empty_surname + bad_block; }
    std::string to_text() const;
    std::string to_csv() const;
};

struct FilterResult {
    Dataset dataset;
    RemovalReport removed;
};

// Drops records unfit for analysis. A record with several defects is counted
// once, priority: unknown label > empty surname > bad block_id. Idempotent
// and order-preserving.
FilterResult filter_for_analysis(const Dataset& d);

// True iff s is 15 digits.
bool valid_block_id(std::string_view s);

// Writes a Dataset in the person-file format; parse_person_file on the output
// yields a field-identical Dataset.
void write_person_file(const std::string& path, const Dataset& d, char delimiter = ',');

}  // namespace raceproxy
