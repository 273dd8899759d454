#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "raceproxy/person.hpp"
#include "raceproxy/race.hpp"

namespace raceproxy {

// P(R=r | S=s) per canonical surname, plus a residual row for surnames not in
// the table. Every stored row is a distribution.
class SurnameTable {
public:
    struct Lookup {
        Vec5 probs;
        bool residual = false;
    };

    void set_row(const std::string& surname, const Vec5& probs) { rows_[surname] = probs; }
    void set_residual(const Vec5& probs) { residual_ = probs; }

    // Never fails: unmatched surnames (and the empty surname) get the
    // residual row with the flag set.
    Lookup lookup(const std::string& surname) const;

    const Vec5& residual() const { return residual_; }
    std::size_t size() const { return rows_.size(); }
    const std::unordered_map<std::string, Vec5>& rows() const { return rows_; }

private:
    std::unordered_map<std::string, Vec5> rows_;
    Vec5 residual_ = uniform_vec5();
};

// P(G=g | R=r): per block, the probability a person of race r lives in that
// block, normalized over the file's reference region. Blocks from several
// regions may be merged; each region keeps its own denominators.
class GeoTable {
public:
    void set_block(const std::string& block_id, const Vec5& probs) { blocks_[block_id] = probs; }

    std::optional<Vec5> lookup(const std::string& block_id) const;

    // Races whose regional total was zero in some source file.
    const std::vector<std::string>& warnings() const { return warnings_; }
    void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

    // Appends another region's blocks. Duplicate block ids are a data error.
    void merge(const GeoTable& other);

    std::size_t size() const { return blocks_.size(); }
    const std::unordered_map<std::string, Vec5>& blocks() const { return blocks_; }

    static std::string tract_of(const std::string& block_id) { return block_id.substr(0, 11); }

private:
    std::unordered_map<std::string, Vec5> blocks_;
    std::vector<std::string> warnings_;
};

enum class NameSlot { First, Middle };

std::string_view name_slot_str(NameSlot s);

// P(name | R=r) for one name slot, add-floor smoothed with a single
// out-of-vocabulary bucket: for vocabulary size n and V = n + 1,
//   P(name|r) = (count(name,r) + floor) / (total_r + floor * V)
//   P(oov|r)  =  floor                  / (total_r + floor * V)
class NameTable {
public:
    struct Lookup {
        Vec5 probs;
        bool oov = false;
    };

    NameTable() = default;
    NameTable(NameSlot slot, double floor) : slot_(slot), floor_(floor) {}

    // Empty names and unknown names both resolve to the OOV bucket.
    Lookup lookup(const std::string& name) const;

    NameSlot slot() const { return slot_; }
    double floor() const { return floor_; }
    const Vec5& oov() const { return oov_; }
    const std::vector<std::string>& training_states() const { return training_states_; }
    std::size_t size() const { return rows_.size(); }
    const std::unordered_map<std::string, Vec5>& rows() const { return rows_; }

    void set_row(const std::string& name, const Vec5& probs) { rows_[name] = probs; }
    void set_oov(const Vec5& probs) { oov_ = probs; }
    void set_training_states(std::vector<std::string> s) { training_states_ = std::move(s); }

private:
    NameSlot slot_ = NameSlot::First;
    double floor_ = 1.0;
    std::unordered_map<std::string, Vec5> rows_;
    Vec5 oov_{};
    std::vector<std::string> training_states_;
};

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

// Census-style surname list. Columns: `name`, then either
//   counts mode:     white,black,hispanic,asian,other  (optional `total`)
//   percentage mode: total + pct_white,...,pct_other   (percent of total)
// A cell "(S)" is suppressed: the row's unaccounted mass is split equally
// across the suppressed cells (requires a total column). A row named
// "all other names" (any case) becomes the residual row; without one the
// residual is the unweighted mean of all rows.
SurnameTable build_surname_table(const std::string& path, char delimiter = ',');

// Block composition file. Columns: block_id,white,black,hispanic,asian,other
// (counts; fractional counts allowed). P(G=g|R=r) = count(r,g) / total_r over
// this file's region.
GeoTable build_geo_table(const std::string& path, char delimiter = ',');

// Builds a name table from labelled training records. Records with an empty
// name in the slot are excluded from counts. If `held_out_state` is non-empty
// and any training record or dataset provenance matches it, throws
// LeakageError.
NameTable build_name_table(std::span<const Dataset> training, NameSlot slot, double floor,
                           const std::string& held_out_state = "");

// Builds a name table from an exact count file (columns:
// name,white,black,hispanic,asian,other), applying the same smoothing rule.
NameTable build_name_table_from_counts(const std::string& path, NameSlot slot, double floor,
                                       char delimiter = ',');

// ---------------------------------------------------------------------------
// Feature assembly (the probability predictors of the regression models)
// ---------------------------------------------------------------------------

enum class Layout { Base, Extended };

std::string_view layout_str(Layout l);
Layout parse_layout(std::string_view s);

inline constexpr std::size_t kBaseFeatures = 10;
inline constexpr std::size_t kExtendedFeatures = 20;

inline std::size_t layout_width(Layout l) {
    return l == Layout::Base ? kBaseFeatures : kExtendedFeatures;
}

struct FeatureVector {
    Layout layout = Layout::Base;
    std::vector<double> values;  // [P(G|R=0..4), P(R=0..4|S)] (+ first, middle rows)
};

struct TableSet {
    const SurnameTable* surnames = nullptr;
    const GeoTable* geo = nullptr;
    const NameTable* first = nullptr;   // required for Layout::Extended
    const NameTable* middle = nullptr;  // required for Layout::Extended
};

// Pure, deterministic assembly. Unknown/empty block contributes zeros;
// unmatched surname contributes the residual row; an empty or unknown
// first/middle name contributes the OOV vector.
FeatureVector make_features(const PersonRecord& p, const TableSet& tables, Layout layout);

// ---------------------------------------------------------------------------
// Serialization (versioned text format, deterministic byte-for-byte)
// ---------------------------------------------------------------------------

void save_surname_table(const std::string& path, const SurnameTable& t);
SurnameTable load_surname_table(const std::string& path);

void save_geo_table(const std::string& path, const GeoTable& t);
GeoTable load_geo_table(const std::string& path);

void save_name_table(const std::string& path, const NameTable& t);
NameTable load_name_table(const std::string& path);

}  // namespace raceproxy
