#include "raceproxy/tables.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "raceproxy/csv.hpp"
#include "raceproxy/errors.hpp"
#include "raceproxy/ingest.hpp"

namespace raceproxy {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_suppressed(std::string_view cell) { return cell == "(S)" || cell == "(s)"; }

// Resolves the five race cell columns, either plain or pct_-prefixed.
struct RaceColumns {
    std::array<int, kNumRaces> idx;
    bool pct_mode = false;
};

RaceColumns find_race_columns(const CsvReader& reader, const std::string& path) {
    RaceColumns rc{};
    bool all_plain = true, all_pct = true;
    for (std::size_t r = 0; r < kNumRaces; ++r) {
        if (reader.column(kRaceNames[r]) < 0) all_plain = false;
        if (reader.column("pct_" + std::string(kRaceNames[r])) < 0) all_pct = false;
    }
    if (all_plain) {
        for (std::size_t r = 0; r < kNumRaces; ++r)
            rc.idx[r] = reader.column(kRaceNames[r]);
        rc.pct_mode = false;
    } else if (all_pct) {
        for (std::size_t r = 0; r < kNumRaces; ++r)
            rc.idx[r] = reader.column("pct_" + std::string(kRaceNames[r]));
        rc.pct_mode = true;
    } else {
        throw ConfigError(path + ": expected race columns white..other or pct_white..pct_other");
    }
    return rc;
}

}  // namespace

SurnameTable::Lookup SurnameTable::lookup(const std::string& surname) const {
    if (!surname.empty()) {
        auto it = rows_.find(surname);
        if (it != rows_.end()) return {it->second, false};
    }
    return {residual_, true};
}

std::optional<Vec5> GeoTable::lookup(const std::string& block_id) const {
    auto it = blocks_.find(block_id);
    if (it == blocks_.end()) return std::nullopt;
    return it->second;
}

void GeoTable::merge(const GeoTable& other) {
    for (const auto& [block, probs] : other.blocks_) {
        if (!blocks_.emplace(block, probs).second)
            throw DataError("geo table merge: duplicate block " + block);
    }
    warnings_.insert(warnings_.end(), other.warnings_.begin(), other.warnings_.end());
}

std::string_view name_slot_str(NameSlot s) { return s == NameSlot::First ? "first" : "middle"; }

NameTable::Lookup NameTable::lookup(const std::string& name) const {
    if (!name.empty()) {
        auto it = rows_.find(name);
        if (it != rows_.end()) return {it->second, false};
    }
    return {oov_, true};
}

std::string_view layout_str(Layout l) { return l == Layout::Base ? "base" : "extended"; }

Layout parse_layout(std::string_view s) {
    if (s == "base") return Layout::Base;
    if (s == "extended") return Layout::Extended;
    throw ConfigError("unknown layout '" + std::string(s) + "' (expected base|extended)");
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

SurnameTable build_surname_table(const std::string& path, char delimiter) {
    CsvReader reader(path, delimiter);
    const int c_name = reader.column("name");
    if (c_name < 0) throw ConfigError(path + ": missing 'name' column");
    const RaceColumns rc = find_race_columns(reader, path);
    const int c_total = reader.column("total");
    if (rc.pct_mode && c_total < 0)
        throw ConfigError(path + ": percentage mode requires a 'total' column");

    SurnameTable table;
    bool residual_seen = false;
    Vec5 residual{};
    Vec5 mean_acc{};
    std::size_t n_rows = 0;

    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const std::string raw_name(f[c_name]);
        Vec5 cells{};
        std::array<bool, kNumRaces> suppressed{};
        std::size_t n_suppressed = 0;
        double known = 0.0;
        for (std::size_t r = 0; r < kNumRaces; ++r) {
            const auto cell = f[rc.idx[r]];
            if (is_suppressed(cell)) {
                suppressed[r] = true;
                ++n_suppressed;
                continue;
            }
            cells[r] = parse_double(cell, path + " line " + std::to_string(reader.line_number()));
            if (cells[r] < 0)
                throw DataError(path + " line " + std::to_string(reader.line_number()) +
                                ": negative count for '" + raw_name + "'");
            known += cells[r];
        }

        double row_mass = known;
        if (n_suppressed > 0) {
            if (c_total < 0)
                throw DataError(path + " line " + std::to_string(reader.line_number()) +
                                ": suppressed cell without a 'total' column");
            const double total = parse_double(f[c_total], path + " total");
            const double full = rc.pct_mode ? 100.0 : total;
            const double remaining = std::max(0.0, full - known);
            for (std::size_t r = 0; r < kNumRaces; ++r)
                if (suppressed[r]) cells[r] = remaining / static_cast<double>(n_suppressed);
            row_mass = std::max(full, known);
        }
        if (row_mass <= 0)
            throw DataError(path + " line " + std::to_string(reader.line_number()) +
                            ": zero total for '" + raw_name + "'");
        Vec5 probs;
        for (std::size_t r = 0; r < kNumRaces; ++r) probs[r] = cells[r] / row_mass;

        if (lower(raw_name) == "all other names") {
            residual = probs;
            residual_seen = true;
            continue;
        }
        const std::string key = canonicalize_name(raw_name);
        if (table.rows().count(key))
            throw DataError(path + ": duplicate surname '" + key + "'");
        table.set_row(key, probs);
        for (std::size_t r = 0; r < kNumRaces; ++r) mean_acc[r] += probs[r];
        ++n_rows;
    }

    if (residual_seen) {
        table.set_residual(residual);
    } else if (n_rows > 0) {
        Vec5 mean;
        for (std::size_t r = 0; r < kNumRaces; ++r) mean[r] = mean_acc[r] / static_cast<double>(n_rows);
        table.set_residual(mean);
    }
    return table;
}

GeoTable build_geo_table(const std::string& path, char delimiter) {
    CsvReader reader(path, delimiter);
    const int c_block = reader.column("block_id");
    if (c_block < 0) throw ConfigError(path + ": missing 'block_id' column");
    const RaceColumns rc = find_race_columns(reader, path);
    if (rc.pct_mode) throw ConfigError(path + ": block composition requires count columns");

    std::unordered_map<std::string, Vec5> counts;
    std::vector<std::string> order;
    Vec5 totals{};

    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const std::string block(f[c_block]);
        if (!valid_block_id(block))
            throw DataError(path + " line " + std::to_string(reader.line_number()) +
                            ": malformed GEOID '" + block + "'");
        auto [it, inserted] = counts.emplace(block, Vec5{});
        if (inserted) order.push_back(block);
        for (std::size_t r = 0; r < kNumRaces; ++r) {
            const double c = parse_double(f[rc.idx[r]],
                                          path + " line " + std::to_string(reader.line_number()));
            if (c < 0)
                throw DataError(path + " line " + std::to_string(reader.line_number()) +
                                ": negative count");
            it->second[r] += c;
            totals[r] += c;
        }
    }

    GeoTable table;
    for (std::size_t r = 0; r < kNumRaces; ++r)
        if (totals[r] == 0.0)
            table.add_warning(path + ": race '" + std::string(race_name(r)) +
                              "' has zero total in this region");
    for (const auto& block : order) {
        const Vec5& c = counts[block];
        Vec5 probs{};
        for (std::size_t r = 0; r < kNumRaces; ++r)
            probs[r] = totals[r] > 0 ? c[r] / totals[r] : 0.0;
        table.set_block(block, probs);
    }
    return table;
}

namespace {

NameTable finish_name_table(NameSlot slot, double floor,
                            const std::map<std::string, Vec5>& counts, const Vec5& totals,
                            std::vector<std::string> states) {
    NameTable table(slot, floor);
    const double v_size = static_cast<double>(counts.size() + 1);  // + OOV bucket
    Vec5 denom;
    for (std::size_t r = 0; r < kNumRaces; ++r) denom[r] = totals[r] + floor * v_size;
    for (const auto& [name, c] : counts) {
        Vec5 probs{};
        for (std::size_t r = 0; r < kNumRaces; ++r)
            probs[r] = denom[r] > 0 ? (c[r] + floor) / denom[r] : 0.0;
        table.set_row(name, probs);
    }
    Vec5 oov{};
    for (std::size_t r = 0; r < kNumRaces; ++r) oov[r] = denom[r] > 0 ? floor / denom[r] : 0.0;
    table.set_oov(oov);
    table.set_training_states(std::move(states));
    return table;
}

}  // namespace

NameTable build_name_table(std::span<const Dataset> training, NameSlot slot, double floor,
                           const std::string& held_out_state) {
    std::map<std::string, Vec5> counts;
    Vec5 totals{};
    std::set<std::string> states;
    for (const auto& d : training) {
        if (!held_out_state.empty()) {
            for (const auto& s : d.provenance)
                if (s == held_out_state)
                    throw LeakageError("name table (" + std::string(name_slot_str(slot)) +
                                       "): held-out state " + held_out_state +
                                       " present in training provenance");
        }
        for (const auto& rec : d.records) {
            if (!held_out_state.empty() && rec.state == held_out_state)
                throw LeakageError("name table (" + std::string(name_slot_str(slot)) +
                                   "): held-out state record " + rec.record_id + " in training data");
            if (!rec.has_label()) continue;
            const std::string& name = slot == NameSlot::First ? rec.first_name : rec.middle_name;
            if (name.empty()) continue;
            counts[name][static_cast<std::size_t>(*rec.label)] += 1.0;
            totals[static_cast<std::size_t>(*rec.label)] += 1.0;
            states.insert(rec.state);
        }
    }
    return finish_name_table(slot, floor, counts, totals,
                             {states.begin(), states.end()});
}

NameTable build_name_table_from_counts(const std::string& path, NameSlot slot, double floor,
                                       char delimiter) {
    CsvReader reader(path, delimiter);
    const int c_name = reader.column("name");
    if (c_name < 0) throw ConfigError(path + ": missing 'name' column");
    const RaceColumns rc = find_race_columns(reader, path);
    if (rc.pct_mode) throw ConfigError(path + ": name count file requires count columns");

    std::map<std::string, Vec5> counts;
    Vec5 totals{};
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const std::string name = canonicalize_name(f[c_name]);
        if (name.empty()) continue;
        auto& row = counts[name];
        for (std::size_t r = 0; r < kNumRaces; ++r) {
            const double c = parse_double(f[rc.idx[r]],
                                          path + " line " + std::to_string(reader.line_number()));
            if (c < 0) throw DataError(path + ": negative count for '" + name + "'");
            row[r] += c;
            totals[r] += c;
        }
    }
    return finish_name_table(slot, floor, counts, totals, {});
}

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

FeatureVector make_features(const PersonRecord& p, const TableSet& tables, Layout layout) {
    if (tables.surnames == nullptr || tables.geo == nullptr)
        throw ConfigError("make_features: surname and geo tables are required");
    if (layout == Layout::Extended && (tables.first == nullptr || tables.middle == nullptr))
        throw ConfigError("make_features: extended layout requires first and middle name tables");

    FeatureVector fv;
    fv.layout = layout;
    fv.values.reserve(layout_width(layout));

    const auto geo = tables.geo->lookup(p.block_id);
    const Vec5 geo_row = geo.value_or(Vec5{});
    for (double v : geo_row) fv.values.push_back(v);

    const auto sn = tables.surnames->lookup(p.surname);
    for (double v : sn.probs) fv.values.push_back(v);

    if (layout == Layout::Extended) {
        const auto fn = tables.first->lookup(p.first_name);
        for (double v : fn.probs) fv.values.push_back(v);
        const auto mn = tables.middle->lookup(p.middle_name);
        for (double v : mn.probs) fv.values.push_back(v);
    }
    return fv;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "raceproxy-table v1";

void write_vec5(std::ofstream& out, const Vec5& v) {
    for (double x : v) out << '\t' << fmt_full(x);
    out << '\n';
}

Vec5 read_vec5(const std::vector<std::string_view>& f, std::size_t offset, const std::string& ctx) {
    if (f.size() != offset + kNumRaces) throw DataError("table row has wrong arity (" + ctx + ")");
    Vec5 v;
    for (std::size_t r = 0; r < kNumRaces; ++r) v[r] = parse_double(f[offset + r], ctx);
    return v;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write table file: " + path);
    return out;
}

struct TableFile {
    std::ifstream in;
    std::string kind;
    std::string path;
    std::size_t line_no = 1;

    bool getline_checked(std::string& line) {
        if (!std::getline(in, line)) return false;
        ++line_no;
        return true;
    }
};

TableFile open_table(const std::string& path, std::string_view expected_kind) {
    TableFile tf;
    tf.path = path;
    tf.in.open(path);
    if (!tf.in) throw IoError("cannot open table file: " + path);
    std::string line;
    if (!std::getline(tf.in, line)) throw DataError("empty table file: " + path);
    std::vector<std::string_view> f;
    split_line(line, ' ', f);
    if (f.size() != 3 || line.substr(0, kMagic.size()) != kMagic)
        throw DataError(path + ": not a raceproxy table file");
    tf.kind = std::string(f[2]);
    if (tf.kind != expected_kind)
        throw DataError(path + ": expected a " + std::string(expected_kind) + " table, found " +
                        tf.kind);
    return tf;
}

std::vector<std::string> sorted_keys(const std::unordered_map<std::string, Vec5>& m) {
    std::vector<std::string> keys;
    keys.reserve(m.size());
    for (const auto& [k, v] : m) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
}

std::string join(const std::vector<std::string>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out.push_back(sep);
        out += v[i];
    }
    return out;
}

std::vector<std::string> split_list(std::string_view s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::vector<std::string_view> f;
    split_line(s, sep, f);
    for (auto v : f)
        if (!v.empty()) out.emplace_back(v);
    return out;
}

}  // namespace

void save_surname_table(const std::string& path, const SurnameTable& t) {
    auto out = open_out(path);
    out << kMagic << " surname\n";
    out << "rows " << t.size() << '\n';
    out << "*RESIDUAL*";
    write_vec5(out, t.residual());
    for (const auto& key : sorted_keys(t.rows())) {
        out << key;
        write_vec5(out, t.rows().at(key));
    }
    if (!out.good()) throw IoError("write failed: " + path);
}

SurnameTable load_surname_table(const std::string& path) {
    auto tf = open_table(path, "surname");
    SurnameTable t;
    std::string line;
    std::vector<std::string_view> f;
    bool residual_seen = false;
    if (!tf.getline_checked(line)) throw DataError(path + ": truncated table");
    while (tf.getline_checked(line)) {
        split_line(line, '\t', f);
        const std::string key(f[0]);
        const Vec5 v = read_vec5(f, 1, path);
        if (key == "*RESIDUAL*") {
            t.set_residual(v);
            residual_seen = true;
        } else {
            t.set_row(key, v);
        }
    }
    if (!residual_seen) throw DataError(path + ": missing residual row");
    return t;
}

void save_geo_table(const std::string& path, const GeoTable& t) {
    auto out = open_out(path);
    out << kMagic << " geo\n";
    out << "rows " << t.size() << '\n';
    for (const auto& key : sorted_keys(t.blocks())) {
        out << key;
        write_vec5(out, t.blocks().at(key));
    }
    if (!out.good()) throw IoError("write failed: " + path);
}

GeoTable load_geo_table(const std::string& path) {
    auto tf = open_table(path, "geo");
    GeoTable t;
    std::string line;
    std::vector<std::string_view> f;
    if (!tf.getline_checked(line)) throw DataError(path + ": truncated table");
    while (tf.getline_checked(line)) {
        split_line(line, '\t', f);
        t.set_block(std::string(f[0]), read_vec5(f, 1, path));
    }
    return t;
}

void save_name_table(const std::string& path, const NameTable& t) {
    auto out = open_out(path);
    out << kMagic << ' ' << name_slot_str(t.slot()) << '\n';
    out << "floor " << fmt_full(t.floor()) << '\n';
    out << "states " << join(t.training_states(), ',') << '\n';
    out << "rows " << t.size() << '\n';
    out << "*OOV*";
    write_vec5(out, t.oov());
    for (const auto& key : sorted_keys(t.rows())) {
        out << key;
        write_vec5(out, t.rows().at(key));
    }
    if (!out.good()) throw IoError("write failed: " + path);
}

NameTable load_name_table(const std::string& path) {
    std::ifstream probe(path);
    std::string first_line;
    std::getline(probe, first_line);
    const bool is_middle = first_line.size() >= kMagic.size() &&
                           first_line.substr(kMagic.size()) == " middle";
    auto tf = open_table(path, is_middle ? "middle" : "first");

    std::string line;
    std::vector<std::string_view> f;
    if (!tf.getline_checked(line)) throw DataError(path + ": truncated table");
    split_line(line, ' ', f);
    if (f.size() != 2 || f[0] != std::string_view("floor"))
        throw DataError(path + ": missing floor line");
    const double floor = parse_double(f[1], path);

    if (!tf.getline_checked(line)) throw DataError(path + ": truncated table");
    split_line(line, ' ', f);
    if (f.empty() || f[0] != std::string_view("states"))
        throw DataError(path + ": missing states line");
    std::vector<std::string> states = split_list(f.size() > 1 ? f[1] : std::string_view{}, ',');

    NameTable t(is_middle ? NameSlot::Middle : NameSlot::First, floor);
    t.set_training_states(std::move(states));

    if (!tf.getline_checked(line)) throw DataError(path + ": truncated table");
    bool oov_seen = false;
    while (tf.getline_checked(line)) {
        split_line(line, '\t', f);
        const std::string key(f[0]);
        const Vec5 v = read_vec5(f, 1, path);
        if (key == "*OOV*") {
            t.set_oov(v);
            oov_seen = true;
        } else {
            t.set_row(key, v);
        }
    }
    if (!oov_seen) throw DataError(path + ": missing OOV row");
    return t;
}

}  // namespace raceproxy
