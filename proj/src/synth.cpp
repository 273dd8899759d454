#include "raceproxy/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "raceproxy/csv.hpp"
#include "raceproxy/errors.hpp"
#include "raceproxy/ingest.hpp"
#include "raceproxy/rng.hpp"

namespace raceproxy {

namespace {

constexpr double kCountScale = 1.0e6;  // arbitrary positive scale for exact count files

// Distinct canonical name: prefix + base-26 suffix (AAA, AAB, ...).
std::string make_name(const std::string& prefix, std::size_t i) {
    char suffix[4] = {static_cast<char>('A' + (i / 676) % 26), static_cast<char>('A' + (i / 26) % 26),
                      static_cast<char>('A' + i % 26), '\0'};
    return prefix + suffix;
}

struct Pool {
    std::size_t start;
    std::size_t count;
};

Pool add_pool(VocabSpec& vocab, const std::string& prefix, std::size_t count) {
    const Pool p{vocab.names.size(), count};
    for (std::size_t i = 0; i < count; ++i) vocab.names.push_back(make_name(prefix, i));
    return p;
}

void finish_weights(VocabSpec& vocab) {
    for (auto& w : vocab.weights) w.assign(vocab.names.size(), 0.0);
}

void set_pool_weight(std::vector<double>& weights, const Pool& pool, double w) {
    for (std::size_t i = 0; i < pool.count; ++i) weights[pool.start + i] = w;
}

std::vector<double> normalized_dist(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<double> out(weights.size(), 0.0);
    if (total > 0)
        for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] / total;
    return out;
}

}  // namespace

void GenerativeSpec::validate() const {
    if (states.empty()) throw ConfigError("generative spec: at least one state required");
    auto check_vocab = [](const VocabSpec& v, const char* what) {
        for (std::size_t r = 0; r < kNumRaces; ++r) {
            if (v.weights[r].size() != v.names.size())
                throw ConfigError(std::string("generative spec: ") + what +
                                  " weights arity mismatch");
            for (double w : v.weights[r])
                if (w < 0) throw ConfigError(std::string("generative spec: negative ") + what +
                                             " weight");
        }
    };
    check_vocab(surnames, "surname");
    check_vocab(firsts, "first-name");
    check_vocab(middles, "middle-name");
    for (const auto& st : states) {
        if (st.tracts == 0 || st.blocks_per_tract == 0)
            throw ConfigError("generative spec: state " + st.name + " has no blocks");
        if (st.fips.size() != 2) throw ConfigError("generative spec: fips must be 2 digits");
        double total = 0.0;
        for (double m : st.mixture) {
            if (m < 0) throw ConfigError("generative spec: negative mixture in " + st.name);
            total += m;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw ConfigError("generative spec: mixture of " + st.name + " must sum to 1");
        for (std::size_t r = 0; r < kNumRaces; ++r)
            if (!st.surname_override[r].empty() &&
                st.surname_override[r].size() != surnames.names.size())
                throw ConfigError("generative spec: surname override arity mismatch in " + st.name);
    }
    if (violation < 0.0 || violation > 1.0)
        throw ConfigError("generative spec: violation knob must be in [0,1]");
}

GenerativeSpec default_generative_spec(std::size_t records_per_state, double violation,
                                       std::uint64_t seed) {
    GenerativeSpec spec;
    spec.violation = violation;
    spec.seed = seed;

    // Surnames: a shared pool plus race-leaning pools. The two Hispanic pools
    // are split between the two Hispanic-heavy states below.
    const Pool sh = add_pool(spec.surnames, "SHR", 30);
    const Pool wel = add_pool(spec.surnames, "WEL", 25);
    const Pool brk = add_pool(spec.surnames, "BRK", 25);
    const Pool hsa = add_pool(spec.surnames, "HSA", 25);
    const Pool hsb = add_pool(spec.surnames, "HSB", 25);
    const Pool asn = add_pool(spec.surnames, "ASN", 25);
    const Pool oth = add_pool(spec.surnames, "OTH", 10);
    finish_weights(spec.surnames);
    {
        auto& w = spec.surnames.weights;
        set_pool_weight(w[0], sh, 1.0);  set_pool_weight(w[0], wel, 4.0);
        set_pool_weight(w[0], brk, 0.6); set_pool_weight(w[0], oth, 0.2);
        set_pool_weight(w[1], sh, 1.0);  set_pool_weight(w[1], wel, 1.5);
        set_pool_weight(w[1], brk, 4.0); set_pool_weight(w[1], oth, 0.2);
        set_pool_weight(w[2], sh, 0.4);  set_pool_weight(w[2], hsa, 4.0);
        set_pool_weight(w[2], hsb, 4.0); set_pool_weight(w[2], oth, 0.1);
        set_pool_weight(w[3], sh, 0.3);  set_pool_weight(w[3], asn, 5.0);
        set_pool_weight(w[3], oth, 0.1);
        set_pool_weight(w[4], sh, 1.0);  set_pool_weight(w[4], wel, 0.5);
        set_pool_weight(w[4], brk, 0.5); set_pool_weight(w[4], hsa, 0.3);
        set_pool_weight(w[4], hsb, 0.3); set_pool_weight(w[4], asn, 0.5);
        set_pool_weight(w[4], oth, 2.0);
    }

    const Pool fsh = add_pool(spec.firsts, "FSH", 20);
    const Pool fw = add_pool(spec.firsts, "FWH", 15);
    const Pool fb = add_pool(spec.firsts, "FBL", 15);
    const Pool fh = add_pool(spec.firsts, "FHI", 15);
    const Pool fa = add_pool(spec.firsts, "FAS", 15);
    finish_weights(spec.firsts);
    {
        auto& w = spec.firsts.weights;
        set_pool_weight(w[0], fsh, 1.0); set_pool_weight(w[0], fw, 5.0);
        set_pool_weight(w[1], fsh, 1.0); set_pool_weight(w[1], fb, 5.0);
        set_pool_weight(w[2], fsh, 0.8); set_pool_weight(w[2], fh, 5.0);
        set_pool_weight(w[3], fsh, 0.5); set_pool_weight(w[3], fa, 5.0);
        set_pool_weight(w[4], fsh, 2.0); set_pool_weight(w[4], fw, 1.0);
        set_pool_weight(w[4], fb, 1.0);  set_pool_weight(w[4], fh, 1.0);
        set_pool_weight(w[4], fa, 1.0);
    }

    const Pool msh = add_pool(spec.middles, "MSH", 15);
    const Pool mw = add_pool(spec.middles, "MWH", 10);
    const Pool mb = add_pool(spec.middles, "MBL", 10);
    const Pool mh = add_pool(spec.middles, "MHI", 10);
    const Pool ma = add_pool(spec.middles, "MAS", 10);
    finish_weights(spec.middles);
    {
        auto& w = spec.middles.weights;
        set_pool_weight(w[0], msh, 2.0); set_pool_weight(w[0], mw, 3.0);
        set_pool_weight(w[1], msh, 2.0); set_pool_weight(w[1], mb, 3.0);
        set_pool_weight(w[2], msh, 1.5); set_pool_weight(w[2], mh, 3.0);
        set_pool_weight(w[3], msh, 1.0); set_pool_weight(w[3], ma, 3.0);
        set_pool_weight(w[4], msh, 2.0); set_pool_weight(w[4], mw, 0.5);
        set_pool_weight(w[4], mb, 0.5);  set_pool_weight(w[4], mh, 0.5);
        set_pool_weight(w[4], ma, 0.5);
    }

    auto make_state = [&](std::string name, std::string fips, Vec5 mixture) {
        StateSpec st;
        st.name = std::move(name);
        st.fips = std::move(fips);
        st.mixture = mixture;
        st.records = records_per_state;
        return st;
    };
    StateSpec alpha = make_state("ALPHA", "01", {0.50, 0.31, 0.05, 0.04, 0.10});
    StateSpec bravo = make_state("BRAVO", "02", {0.67, 0.20, 0.04, 0.03, 0.06});
    StateSpec charlie = make_state("CHARLIE", "03", {0.60, 0.14, 0.18, 0.03, 0.05});
    StateSpec delta = make_state("DELTA", "04", {0.42, 0.06, 0.22, 0.21, 0.09});

    // The two Hispanic-heavy states use disjoint Hispanic surname pools.
    auto hispanic_only = [&](const Pool& pool) {
        std::vector<double> w(spec.surnames.names.size(), 0.0);
        set_pool_weight(w, sh, 0.4);
        set_pool_weight(w, pool, 8.0);
        set_pool_weight(w, oth, 0.1);
        return w;
    };
    charlie.surname_override[2] = hispanic_only(hsa);
    delta.surname_override[2] = hispanic_only(hsb);

    spec.states = {alpha, bravo, charlie, delta};
    return spec;
}

GenerativeSpec micro_generative_spec(std::uint64_t seed) {
    GenerativeSpec spec;
    spec.seed = seed;
    spec.missing_first = 0.0;
    spec.missing_middle = 0.0;

    for (std::size_t i = 0; i < 5; ++i) spec.surnames.names.push_back(make_name("SUR", i));
    for (std::size_t i = 0; i < 4; ++i) spec.firsts.names.push_back(make_name("FIR", i));
    for (std::size_t i = 0; i < 4; ++i) spec.middles.names.push_back(make_name("MID", i));
    finish_weights(spec.surnames);
    finish_weights(spec.firsts);
    finish_weights(spec.middles);
    for (std::size_t r = 0; r < kNumRaces; ++r) {
        for (std::size_t s = 0; s < 5; ++s)
            spec.surnames.weights[r][s] = 1.0 + 3.0 * (s == r % 5 ? 1.0 : 0.0);
        for (std::size_t f = 0; f < 4; ++f)
            spec.firsts.weights[r][f] = 0.5 + 2.0 * (f == r % 4 ? 1.0 : 0.0);
        for (std::size_t m = 0; m < 4; ++m)
            spec.middles.weights[r][m] = 0.7 + 1.5 * (m == (r + 1) % 4 ? 1.0 : 0.0);
    }

    StateSpec st;
    st.name = "MICRO";
    st.fips = "09";
    st.tracts = 2;
    st.blocks_per_tract = 2;
    st.concentration = 2.0;
    st.mixture = {0.30, 0.25, 0.20, 0.15, 0.10};
    st.records = 2000;
    spec.states = {st};
    return spec;
}

// ---------------------------------------------------------------------------
// Realization
// ---------------------------------------------------------------------------

SynthWorld realize(const GenerativeSpec& spec) {
    spec.validate();
    SynthWorld world;
    world.spec = spec;

    for (std::size_t r = 0; r < kNumRaces; ++r) {
        world.first_dist[r] = normalized_dist(spec.firsts.weights[r]);
        world.middle_dist[r] = normalized_dist(spec.middles.weights[r]);
    }
    for (std::size_t i = 0; i < spec.surnames.names.size(); ++i)
        world.surname_index.emplace(spec.surnames.names[i], i);
    for (std::size_t i = 0; i < spec.firsts.names.size(); ++i)
        world.first_index.emplace(spec.firsts.names[i], i);
    for (std::size_t i = 0; i < spec.middles.names.size(); ++i)
        world.middle_index.emplace(spec.middles.names[i], i);

    for (std::size_t sidx = 0; sidx < spec.states.size(); ++sidx) {
        const StateSpec& st = spec.states[sidx];
        RealizedState rs;
        rs.name = st.name;
        rs.fips = st.fips;
        rs.records = st.records;

        Rng rng(derive_seed(spec.seed, "blocks", sidx));
        const std::size_t n_blocks = st.tracts * st.blocks_per_tract;
        rs.block_ids.reserve(n_blocks);
        rs.block_mix.reserve(n_blocks);
        for (std::size_t t = 0; t < st.tracts; ++t) {
            for (std::size_t b = 0; b < st.blocks_per_tract; ++b) {
                char buf[20];
                std::snprintf(buf, sizeof(buf), "%s001%06zu%04zu", st.fips.c_str(), t + 1, b + 1);
                rs.block_ids.emplace_back(buf);
                // Dirichlet(concentration * mixture) via normalized gammas.
                Vec5 theta{};
                double total = 0.0;
                for (std::size_t r = 0; r < kNumRaces; ++r) {
                    const double alpha = std::max(1e-3, st.concentration * st.mixture[r]);
                    theta[r] = rng.gamma(alpha);
                    total += theta[r];
                }
                for (std::size_t r = 0; r < kNumRaces; ++r) theta[r] /= total;
                rs.block_mix.push_back(theta);
            }
        }
        for (const auto& theta : rs.block_mix)
            for (std::size_t r = 0; r < kNumRaces; ++r)
                rs.race_prior[r] += theta[r] / static_cast<double>(n_blocks);

        for (std::size_t r = 0; r < kNumRaces; ++r) {
            const auto& weights = st.surname_override[r].empty() ? spec.surnames.weights[r]
                                                                 : st.surname_override[r];
            rs.surname_dist[r] = normalized_dist(weights);
            std::vector<std::size_t> support;
            for (std::size_t i = 0; i < weights.size(); ++i)
                if (weights[i] > 0) support.push_back(i);
            if (support.empty())
                throw ConfigError("state " + st.name + ": race " + std::string(race_name(r)) +
                                  " has no surname support");
            rs.coupled_surname[r].resize(n_blocks);
            for (std::size_t b = 0; b < n_blocks; ++b)
                rs.coupled_surname[r][b] = support[b % support.size()];
        }

        for (std::size_t b = 0; b < n_blocks; ++b)
            world.block_index.emplace(rs.block_ids[b], std::make_pair(sidx, b));
        world.states.push_back(std::move(rs));
    }
    return world;
}

double SynthWorld::surname_given_race(std::size_t state, std::size_t surname,
                                      std::size_t race) const {
    const RealizedState& rs = states[state];
    const double v = spec.violation;
    double p = (1.0 - v) * rs.surname_dist[race][surname];
    if (v > 0.0) {
        // Coupled component, marginalized over blocks: sum_b P(b|r) [coupled(r,b)=s].
        const double p_b = 1.0 / static_cast<double>(rs.block_ids.size());
        double coupled_mass = 0.0;
        for (std::size_t b = 0; b < rs.block_ids.size(); ++b)
            if (rs.coupled_surname[race][b] == surname)
                coupled_mass += p_b * rs.block_mix[b][race];
        p += v * coupled_mass / rs.race_prior[race];
    }
    return p;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

void sample_state_records(const SynthWorld& world, std::size_t state_idx,
                          const std::function<void(const PersonRecord&)>& sink) {
    const RealizedState& rs = world.states[state_idx];
    const GenerativeSpec& spec = world.spec;
    Rng rng(derive_seed(spec.seed, "records", state_idx));

    std::vector<Categorical> surname_cat, first_cat, middle_cat;
    surname_cat.reserve(kNumRaces);
    for (std::size_t r = 0; r < kNumRaces; ++r) {
        surname_cat.emplace_back(rs.surname_dist[r]);
        first_cat.emplace_back(world.first_dist[r]);
        middle_cat.emplace_back(world.middle_dist[r]);
    }

    const std::size_t n_blocks = rs.block_ids.size();
    PersonRecord rec;
    rec.state = rs.name;
    for (std::size_t i = 0; i < rs.records; ++i) {
        const std::size_t b = static_cast<std::size_t>(rng.below(n_blocks));
        const Vec5& theta = rs.block_mix[b];
        double u = rng.uniform();
        std::size_t race = kNumRaces - 1;
        for (std::size_t r = 0; r < kNumRaces; ++r) {
            u -= theta[r];
            if (u < 0) { race = r; break; }
        }

        std::size_t surname_idx;
        if (spec.violation > 0.0 && rng.uniform() < spec.violation)
            surname_idx = rs.coupled_surname[race][b];
        else
            surname_idx = surname_cat[race].draw(rng);

        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s-%07zu", rs.name.c_str(), i + 1);
        rec.record_id = idbuf;
        rec.surname = spec.surnames.names[surname_idx];
        rec.first_name = (spec.missing_first > 0.0 && rng.uniform() < spec.missing_first)
                             ? std::string{}
                             : spec.firsts.names[first_cat[race].draw(rng)];
        rec.middle_name = (spec.missing_middle > 0.0 && rng.uniform() < spec.missing_middle)
                              ? std::string{}
                              : spec.middles.names[middle_cat[race].draw(rng)];
        rec.block_id = rs.block_ids[b];
        rec.tract_id = rec.block_id.substr(0, 11);
        rec.label = static_cast<int>(race);
        sink(rec);
    }
}

std::vector<Dataset> sample_all(const SynthWorld& world) {
    std::vector<Dataset> out;
    out.reserve(world.states.size());
    for (std::size_t s = 0; s < world.states.size(); ++s) {
        Dataset d;
        d.provenance = {world.states[s].name};
        d.records.reserve(world.states[s].records);
        sample_state_records(world, s, [&d](const PersonRecord& r) { d.records.push_back(r); });
        out.push_back(std::move(d));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

Vec5 oracle_posterior(const SynthWorld& world, const std::string& surname,
                      const std::string& block_id, const std::string& first,
                      const std::string& middle) {
    const auto bit = world.block_index.find(block_id);
    if (bit == world.block_index.end())
        throw DataError("oracle: block " + block_id + " not in the generative spec");
    const auto [sidx, b] = bit->second;
    const RealizedState& rs = world.states[sidx];

    const auto sit = world.surname_index.find(surname);
    if (sit == world.surname_index.end())
        throw DataError("oracle: surname " + surname + " not in vocabulary");
    const std::size_t si = sit->second;

    const double v = world.spec.violation;
    Vec5 unnorm{};
    for (std::size_t r = 0; r < kNumRaces; ++r) {
        double p_s = (1.0 - v) * rs.surname_dist[r][si];
        if (v > 0.0 && rs.coupled_surname[r][b] == si) p_s += v;
        unnorm[r] = rs.block_mix[b][r] * p_s;
    }
    if (!first.empty()) {
        const auto fit = world.first_index.find(first);
        if (fit == world.first_index.end())
            throw DataError("oracle: first name " + first + " not in vocabulary");
        for (std::size_t r = 0; r < kNumRaces; ++r) unnorm[r] *= world.first_dist[r][fit->second];
    }
    if (!middle.empty()) {
        const auto mit = world.middle_index.find(middle);
        if (mit == world.middle_index.end())
            throw DataError("oracle: middle name " + middle + " not in vocabulary");
        for (std::size_t r = 0; r < kNumRaces; ++r) unnorm[r] *= world.middle_dist[r][mit->second];
    }
    const double total = sum(unnorm);
    if (total <= 0.0)
        throw DataError("oracle: zero-probability cell (" + surname + ", " + block_id + ")");
    for (std::size_t r = 0; r < kNumRaces; ++r) unnorm[r] /= total;
    return unnorm;
}

// ---------------------------------------------------------------------------
// Corpus files
// ---------------------------------------------------------------------------

namespace {

std::ofstream open_corpus_file(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus file: " + path);
    return out;
}

void write_name_counts(const std::string& path, const std::vector<std::string>& names,
                       const std::array<std::vector<double>, kNumRaces>& dist) {
    auto out = open_corpus_file(path);
    out << "name,white,black,hispanic,asian,other\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        out << names[i];
        for (std::size_t r = 0; r < kNumRaces; ++r) out << ',' << fmt_full(kCountScale * dist[r][i]);
        out << '\n';
    }
    if (!out.good()) throw IoError("write failed: " + path);
}

}  // namespace

CorpusFiles write_corpus(const SynthWorld& world, const std::string& outdir) {
    std::filesystem::create_directories(outdir);
    CorpusFiles files;
    const GenerativeSpec& spec = world.spec;

    for (std::size_t sidx = 0; sidx < world.states.size(); ++sidx) {
        const RealizedState& rs = world.states[sidx];

        const std::string person_path = outdir + "/persons_" + rs.name + ".csv";
        {
            auto out = open_corpus_file(person_path);
            out << "record_id,surname,first_name,middle_name,state,block_id,race\n";
            std::string buf;
            buf.reserve(1 << 20);
            sample_state_records(world, sidx, [&](const PersonRecord& r) {
                buf += r.record_id;
                buf += ',';
                buf += r.surname;
                buf += ',';
                buf += r.first_name;
                buf += ',';
                buf += r.middle_name;
                buf += ',';
                buf += r.state;
                buf += ',';
                buf += r.block_id;
                buf += ',';
                buf += race_name(*r.label);
                buf += '\n';
                if (buf.size() > (1 << 20) - 512) {
                    out << buf;
                    buf.clear();
                }
            });
            out << buf;
            if (!out.good()) throw IoError("write failed: " + person_path);
        }
        files.person_files.push_back(person_path);

        const std::string block_path = outdir + "/blocks_" + rs.name + ".csv";
        {
            auto out = open_corpus_file(block_path);
            out << "block_id,white,black,hispanic,asian,other\n";
            const double p_b = 1.0 / static_cast<double>(rs.block_ids.size());
            for (std::size_t b = 0; b < rs.block_ids.size(); ++b) {
                out << rs.block_ids[b];
                for (std::size_t r = 0; r < kNumRaces; ++r)
                    out << ',' << fmt_full(kCountScale * p_b * rs.block_mix[b][r]);
                out << '\n';
            }
            if (!out.good()) throw IoError("write failed: " + block_path);
        }
        files.block_files.push_back(block_path);

        const std::string surname_path = outdir + "/surnames_" + rs.name + ".csv";
        {
            auto out = open_corpus_file(surname_path);
            out << "name,total,white,black,hispanic,asian,other\n";
            for (std::size_t i = 0; i < spec.surnames.names.size(); ++i) {
                Vec5 counts{};
                double total = 0.0;
                for (std::size_t r = 0; r < kNumRaces; ++r) {
                    counts[r] = kCountScale * rs.race_prior[r] * world.surname_given_race(sidx, i, r);
                    total += counts[r];
                }
                if (total <= 0.0) continue;
                out << spec.surnames.names[i] << ',' << fmt_full(total);
                for (std::size_t r = 0; r < kNumRaces; ++r) out << ',' << fmt_full(counts[r]);
                out << '\n';
            }
            if (!out.good()) throw IoError("write failed: " + surname_path);
        }
        files.state_surname_files.push_back(surname_path);
    }

    // National pool: states weighted by their record counts (census analog).
    files.national_surname_file = outdir + "/surnames_NATIONAL.csv";
    {
        auto out = open_corpus_file(files.national_surname_file);
        out << "name,total,white,black,hispanic,asian,other\n";
        double total_records = 0.0;
        for (const auto& rs : world.states) total_records += static_cast<double>(rs.records);
        for (std::size_t i = 0; i < spec.surnames.names.size(); ++i) {
            Vec5 counts{};
            double total = 0.0;
            for (std::size_t sidx = 0; sidx < world.states.size(); ++sidx) {
                const RealizedState& rs = world.states[sidx];
                const double w = total_records > 0
                                     ? static_cast<double>(rs.records) / total_records
                                     : 1.0 / static_cast<double>(world.states.size());
                for (std::size_t r = 0; r < kNumRaces; ++r)
                    counts[r] += kCountScale * w * rs.race_prior[r] *
                                 world.surname_given_race(sidx, i, r);
            }
            for (std::size_t r = 0; r < kNumRaces; ++r) total += counts[r];
            if (total <= 0.0) continue;
            out << spec.surnames.names[i] << ',' << fmt_full(total);
            for (std::size_t r = 0; r < kNumRaces; ++r) out << ',' << fmt_full(counts[r]);
            out << '\n';
        }
        if (!out.good()) throw IoError("write failed: " + files.national_surname_file);
    }

    files.first_name_file = outdir + "/firstnames.csv";
    write_name_counts(files.first_name_file, spec.firsts.names, world.first_dist);
    files.middle_name_file = outdir + "/middlenames.csv";
    write_name_counts(files.middle_name_file, spec.middles.names, world.middle_dist);
    return files;
}

}  // namespace raceproxy
