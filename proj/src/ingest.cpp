#include "raceproxy/ingest.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "raceproxy/csv.hpp"
#include "raceproxy/errors.hpp"

namespace raceproxy {

namespace {

// Latin Extended-A (U+0100..U+017F) folded to base letters; '?' marks the two
// digraph codepoints handled separately.
constexpr const char kExtA[129] =
    "AAAAAA" "CCCCCCCC" "DDDD" "EEEEEEEEEE" "GGGGGGGG" "HHHH" "IIIIIIIIII"
    "??" "JJ" "KKK" "LLLLLLLLLL" "NNNNNNNNN" "OOOOOO" "??" "RRRRRR"
    "SSSSSSSS" "TTTTTT" "UUUUUUUUUUUU" "WW" "YYY" "ZZZZZZ" "S";

// Appends the ASCII fold of one codepoint. Space-like codepoints append ' ',
// separators (apostrophe, hyphen, period) and unmappable codepoints append
// nothing.
void fold_codepoint(std::uint32_t cp, std::string& out) {
    if (cp >= 'a' && cp <= 'z') { out.push_back(static_cast<char>(cp - 'a' + 'A')); return; }
    if (cp >= 'A' && cp <= 'Z') { out.push_back(static_cast<char>(cp)); return; }
    if (cp == ' ' || cp == '\t' || cp == 0xA0) { out.push_back(' '); return; }
    if (cp < 0xC0) return;  // digits, punctuation, controls
    if (cp <= 0xFF) {
        const std::uint32_t base = (cp >= 0xE0 && cp != 0xF7) ? cp - 0x20 : cp;
        switch (base) {
            case 0xC6: out += "AE"; return;
            case 0xDE: out += "TH"; return;
            case 0xD0: out.push_back('D'); return;
            case 0xD1: out.push_back('N'); return;
            case 0xC7: out.push_back('C'); return;
            case 0xD8: out.push_back('O'); return;
            case 0xDD: out.push_back('Y'); return;
            default: break;
        }
        if (cp == 0xDF) { out += "SS"; return; }
        if (cp == 0xFF) { out.push_back('Y'); return; }
        if (base >= 0xC0 && base <= 0xC5) { out.push_back('A'); return; }
        if (base >= 0xC8 && base <= 0xCB) { out.push_back('E'); return; }
        if (base >= 0xCC && base <= 0xCF) { out.push_back('I'); return; }
        if (base >= 0xD2 && base <= 0xD6) { out.push_back('O'); return; }
        if (base >= 0xD9 && base <= 0xDC) { out.push_back('U'); return; }
        return;  // multiplication/division signs
    }
    if (cp <= 0x17F) {
        if (cp == 0x132 || cp == 0x133) { out += "IJ"; return; }
        if (cp == 0x152 || cp == 0x153) { out += "OE"; return; }
        out.push_back(kExtA[cp - 0x100]);
        return;
    }
    if (cp == 0x2019 || cp == 0x02BC) return;  // curly apostrophes
    if (cp >= 0x2010 && cp <= 0x2015) return;  // unicode hyphens
}

bool is_suffix_token(std::string_view t) {
    return t == "JR" || t == "SR" || t == "II" || t == "III" || t == "IV";
}

}  // namespace

std::string canonicalize_name(std::string_view raw) {
    // Decode UTF-8 and fold to uppercase ASCII plus space markers.
    std::string folded;
    folded.reserve(raw.size());
    std::size_t i = 0;
    while (i < raw.size()) {
        const unsigned char b = raw[i];
        std::uint32_t cp = 0;
        std::size_t len = 1;
        if (b < 0x80) {
            cp = b;
        } else if ((b >> 5) == 0x6 && i + 1 < raw.size()) {
            cp = (b & 0x1F) << 6 | (raw[i + 1] & 0x3F);
            len = 2;
        } else if ((b >> 4) == 0xE && i + 2 < raw.size()) {
            cp = (b & 0x0F) << 12 | (raw[i + 1] & 0x3F) << 6 | (raw[i + 2] & 0x3F);
            len = 3;
        } else if ((b >> 3) == 0x1E && i + 3 < raw.size()) {
            cp = (b & 0x07) << 18 | (raw[i + 1] & 0x3F) << 12 | (raw[i + 2] & 0x3F) << 6 |
                 (raw[i + 3] & 0x3F);
            len = 4;
        } else {
            ++i;  // stray continuation byte
            continue;
        }
        fold_codepoint(cp, folded);
        i += len;
    }

    // Tokenize on spaces and strip trailing generational suffixes while at
    // least one other token remains (keeps the map idempotent: outputs never
    // contain spaces, so a lone suffix-shaped name survives).
    std::vector<std::string_view> tokens;
    split_line(folded, ' ', tokens);
    std::erase_if(tokens, [](std::string_view t) { return t.empty(); });
    while (tokens.size() >= 2 && is_suffix_token(tokens.back())) tokens.pop_back();

    std::string out;
    for (auto t : tokens) out += t;
    return out;
}

bool valid_block_id(std::string_view s) {
    if (s.size() != 15) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

ParseResult parse_person_file(const std::string& path, const PersonSchema& schema) {
    CsvReader reader(path, schema.delimiter);

    auto required = [&](const std::string& name) {
        const int idx = reader.column(name);
        if (idx < 0)
            throw ConfigError("person file " + path + " is missing required column '" + name + "'");
        return idx;
    };
    const int c_id = required(schema.record_id);
    const int c_surname = required(schema.surname);
    const int c_block = required(schema.block_id);
    const int c_state = required(schema.state);
    const int c_first = schema.first_name.empty() ? -1 : reader.column(schema.first_name);
    const int c_middle = schema.middle_name.empty() ? -1 : reader.column(schema.middle_name);
    const int c_race = schema.race.empty() ? -1 : reader.column(schema.race);

    ParseResult result;
    std::unordered_set<std::string> seen_ids;
    std::set<std::string> duplicates;
    std::vector<std::string_view> f;
    const std::size_t ncols = reader.header().size();

    while (reader.next(f)) {
        if (f.size() != ncols) {
            result.malformed.push_back({reader.line_number(), "expected " + std::to_string(ncols) +
                                                                  " columns, got " + std::to_string(f.size())});
            continue;
        }
        PersonRecord rec;
        rec.record_id = std::string(f[c_id]);
        if (rec.record_id.empty()) {
            result.malformed.push_back({reader.line_number(), "empty record_id"});
            continue;
        }
        rec.block_id = std::string(f[c_block]);
        // Empty block_id means missing geography and is allowed; a non-empty
        // malformed GEOID is reported and the row dropped.
        if (!rec.block_id.empty() && !valid_block_id(rec.block_id)) {
            result.malformed.push_back({reader.line_number(), "block_id '" + rec.block_id +
                                                                  "' is not a 15-digit GEOID"});
            continue;
        }
        rec.tract_id = rec.block_id.substr(0, 11);
        rec.surname = canonicalize_name(f[c_surname]);
        if (c_first >= 0) rec.first_name = canonicalize_name(f[c_first]);
        if (c_middle >= 0) rec.middle_name = canonicalize_name(f[c_middle]);
        rec.state = std::string(f[c_state]);
        for (auto& ch : rec.state) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        if (c_race >= 0) rec.label = parse_race_label(f[c_race]);

        if (!seen_ids.insert(rec.record_id).second) duplicates.insert(rec.record_id);
        result.dataset.records.push_back(std::move(rec));
    }

    if (!duplicates.empty()) {
        std::string msg = "duplicate record_id in " + path + ":";
        std::size_t shown = 0;
        for (const auto& id : duplicates) {
            if (shown++ == 10) { msg += " ..."; break; }
            msg += " " + id;
        }
        throw DataError(msg);
    }

    std::set<std::string> states;
    for (const auto& r : result.dataset.records) states.insert(r.state);
    result.dataset.provenance.assign(states.begin(), states.end());
    return result;
}

std::string RemovalReport::to_text() const {
    std::ostringstream os;
    os << "removed " << total() << " record(s): " << unknown_label << " unknown label, "
       << empty_surname << " empty surname, " << bad_block << " bad block_id";
    return os.str();
}

std::string RemovalReport::to_csv() const {
    std::ostringstream os;
    os << "reason,count\n"
       << "unknown_label," << unknown_label << "\n"
       << "empty_surname," << empty_surname << "\n"
       << "bad_block," << bad_block << "\n";
    return os.str();
}

FilterResult filter_for_analysis(const Dataset& d) {
    FilterResult out;
    out.dataset.provenance = d.provenance;
    out.dataset.records.reserve(d.records.size());
    for (const auto& r : d.records) {
        if (r.label.has_value() && *r.label == kUnknownRace) {
            ++out.removed.unknown_label;
        } else if (r.surname.empty()) {
            ++out.removed.empty_surname;
        } else if (!valid_block_id(r.block_id)) {
            ++out.removed.bad_block;
        } else {
            out.dataset.records.push_back(r);
        }
    }
    return out;
}

void write_person_file(const std::string& path, const Dataset& d, char delimiter) {
    std::ofstream outf(path);
    if (!outf) throw IoError("cannot write person file: " + path);
    const char sep = delimiter;
    outf << "record_id" << sep << "surname" << sep << "first_name" << sep << "middle_name" << sep
         << "state" << sep << "block_id" << sep << "race\n";
    for (const auto& r : d.records) {
        outf << r.record_id << sep << r.surname << sep << r.first_name << sep << r.middle_name
             << sep << r.state << sep << r.block_id << sep;
        if (r.label.has_value())
            outf << (*r.label == kUnknownRace ? std::string_view("unknown") : race_name(*r.label));
        outf << '\n';
    }
    if (!outf.good()) throw IoError("write failed: " + path);
}

}  // namespace raceproxy
