#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "raceproxy/person.hpp"
#include "raceproxy/race.hpp"

namespace raceproxy {

// One name slot's global vocabulary with per-race sampling weights.
struct VocabSpec {
    std::vector<std::string> names;
    std::array<std::vector<double>, kNumRaces> weights;  // each sized like names
};

struct StateSpec {
    std::string name;
    std::string fips;  // 2 digits, embedded in generated GEOIDs
    std::size_t tracts = 25;
    std::size_t blocks_per_tract = 4;
    double concentration = 2.5;  // Dirichlet concentration for block mixtures
    Vec5 mixture{};              // state base-rate race mixture
    std::size_t records = 20000;
    // Per-race surname weight override; an empty vector means the global
    // surname weights apply for that race.
    std::array<std::vector<double>, kNumRaces> surname_override;
};

// Fully describes the population model. Everything downstream (records,
// exact tables, oracle) is a deterministic function of this plus the seed.
struct GenerativeSpec {
    std::vector<StateSpec> states;
    VocabSpec surnames;
    VocabSpec firsts;
    VocabSpec middles;
    double violation = 0.0;      // probability a surname is coupled to the block
    double missing_first = 0.02; // race-independent missing-name rates
    double missing_middle = 0.10;
    std::uint64_t seed = 1;

    void validate() const;  // throws ConfigError on bad weights/mixtures
};

// Four skewed states (Black-heavy, White-heavy, and two Hispanic-heavy with
// disjoint Hispanic surname pools, one of them also Asian-heavy).
GenerativeSpec default_generative_spec(std::size_t records_per_state = 20000,
                                       double violation = 0.0, std::uint64_t seed = 1);

// Tiny single-state spec whose full (surname, block, first, middle) cell
// product stays under 2,000.
GenerativeSpec micro_generative_spec(std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Realized world: the spec with all random structure drawn.
// ---------------------------------------------------------------------------

struct RealizedState {
    std::string name;
    std::string fips;
    std::size_t records = 0;
    std::vector<std::string> block_ids;
    std::vector<Vec5> block_mix;  // theta_b, one distribution per block
    Vec5 race_prior{};            // sum_b P(b) * theta_b[r], P(b) uniform
    // Normalized surname distribution per race (state override applied).
    std::array<std::vector<double>, kNumRaces> surname_dist;
    // Violation coupling target: surname index per (race, block).
    std::array<std::vector<std::size_t>, kNumRaces> coupled_surname;
};

struct SynthWorld {
    GenerativeSpec spec;
    std::vector<RealizedState> states;
    std::array<std::vector<double>, kNumRaces> first_dist;   // normalized P(f|r)
    std::array<std::vector<double>, kNumRaces> middle_dist;  // normalized P(m|r)
    std::unordered_map<std::string, std::size_t> surname_index;
    std::unordered_map<std::string, std::size_t> first_index;
    std::unordered_map<std::string, std::size_t> middle_index;
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> block_index;  // id -> (state, block)

    // Exact marginal P(surname = s | R = r) for one state, violation included.
    double surname_given_race(std::size_t state, std::size_t surname, std::size_t race) const;
};

// Draws the block mixtures deterministically from spec.seed.
SynthWorld realize(const GenerativeSpec& spec);

// Streams one state's sampled records in order. Deterministic per state.
void sample_state_records(const SynthWorld& world, std::size_t state_idx,
                          const std::function<void(const PersonRecord&)>& sink);

// All states into in-memory datasets, one per state.
std::vector<Dataset> sample_all(const SynthWorld& world);

// ---------------------------------------------------------------------------
// Exact-posterior oracle. Independent of the bisg module by construction:
// works from the realized generative parameters, not from lookup tables.
// ---------------------------------------------------------------------------

// Exact P(R | surname, block [, first [, middle]]) under the generative
// process of the block's state. Empty first/middle omit that factor. Throws
// DataError for names or blocks outside the spec vocabularies.
Vec5 oracle_posterior(const SynthWorld& world, const std::string& surname,
                      const std::string& block_id, const std::string& first = "",
                      const std::string& middle = "");

// ---------------------------------------------------------------------------
// Corpus files (same formats the ingest and tables modules consume)
// ---------------------------------------------------------------------------

struct CorpusFiles {
    std::vector<std::string> person_files;        // one per state, record samples
    std::vector<std::string> block_files;         // one per state, exact compositions
    std::vector<std::string> state_surname_files; // exact per-state surname counts
    std::string national_surname_file;            // record-weighted pool of all states
    std::string first_name_file;                  // exact global counts
    std::string middle_name_file;
};

// Writes the full corpus under `outdir` (created if missing). Exact files
// carry expected counts scaled by a constant, so tables built from them
// reproduce the generative conditionals exactly.
CorpusFiles write_corpus(const SynthWorld& world, const std::string& outdir);

}  // namespace raceproxy
