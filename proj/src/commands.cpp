#include "raceproxy/commands.hpp"

#include <sys/resource.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "raceproxy/bisg.hpp"
#include "raceproxy/csv.hpp"
#include "raceproxy/errors.hpp"
#include "raceproxy/eval.hpp"
#include "raceproxy/ingest.hpp"
#include "raceproxy/ml/loso.hpp"
#include "raceproxy/ml/model.hpp"
#include "raceproxy/ml/tune.hpp"
#include "raceproxy/rng.hpp"
#include "raceproxy/synth.hpp"
#include "raceproxy/tables.hpp"

namespace raceproxy::cli {

namespace {

namespace fs = std::filesystem;

// Keys every subcommand accepts.
const std::set<std::string> kCommonKeys = {"out", "seed", "scale", "layout", "method",
                                           "agg", "threads", "config"};

const std::set<std::string> kSchemaKeys = {
    "ingest.col_record_id", "ingest.col_surname", "ingest.col_block_id", "ingest.col_state",
    "ingest.col_first_name", "ingest.col_middle_name", "ingest.col_race", "ingest.delimiter"};

std::set<std::string> with_common(std::set<std::string> keys) {
    keys.insert(kCommonKeys.begin(), kCommonKeys.end());
    keys.insert(kSchemaKeys.begin(), kSchemaKeys.end());
    return keys;
}

PersonSchema schema_from_config(const RunConfig& cfg) {
    PersonSchema s;
    s.record_id = cfg.get_str("ingest.col_record_id", s.record_id);
    s.surname = cfg.get_str("ingest.col_surname", s.surname);
    s.block_id = cfg.get_str("ingest.col_block_id", s.block_id);
    s.state = cfg.get_str("ingest.col_state", s.state);
    s.first_name = cfg.get_str("ingest.col_first_name", s.first_name);
    s.middle_name = cfg.get_str("ingest.col_middle_name", s.middle_name);
    s.race = cfg.get_str("ingest.col_race", s.race);
    const std::string delim = cfg.get_str("ingest.delimiter", ",");
    if (delim.size() != 1) throw ConfigError("ingest.delimiter must be a single character");
    s.delimiter = delim[0];
    return s;
}

std::string require_out(RunConfig& cfg) {
    const std::string out = cfg.require_str("out");
    fs::create_directories(out);
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << text;
    if (!f.good()) throw IoError("write failed: " + path);
}

void write_resolved_config(const RunConfig& cfg, const std::string& outdir) {
    write_text(outdir + "/resolved.config", cfg.resolved_text());
}

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::vector<std::string_view> parts;
    split_line(s, ',', parts);
    for (auto p : parts)
        if (!p.empty()) out.emplace_back(p);
    return out;
}

double peak_rss_mb() {
    struct rusage ru{};
    getrusage(RUSAGE_SELF, &ru);
    return static_cast<double>(ru.ru_maxrss) / 1024.0;  // ru_maxrss is KB on Linux
}

struct LoadedTables {
    SurnameTable surnames;
    GeoTable geo;
    NameTable first;
    NameTable middle;
    bool has_names = false;

    TableSet view(Layout layout) const {
        if (layout == Layout::Extended && !has_names)
            throw ConfigError("extended layout requested but the tables directory has no "
                              "first/middle name tables");
        TableSet t;
        t.surnames = &surnames;
        t.geo = &geo;
        if (has_names) {
            t.first = &first;
            t.middle = &middle;
        }
        return t;
    }
};

LoadedTables load_tables_dir(const std::string& dir) {
    LoadedTables t;
    t.surnames = load_surname_table(dir + "/surname.tbl");
    t.geo = load_geo_table(dir + "/geo.tbl");
    if (fs::exists(dir + "/first.tbl") && fs::exists(dir + "/middle.tbl")) {
        t.first = load_name_table(dir + "/first.tbl");
        t.middle = load_name_table(dir + "/middle.tbl");
        t.has_names = true;
    }
    return t;
}

std::size_t threads_from(const RunConfig& cfg) {
    const long long t = cfg.get_int("threads", 1);
    if (t < 1) throw ConfigError("threads must be >= 1");
    return static_cast<std::size_t>(t);
}

GenerativeSpec spec_from_config(const RunConfig& cfg) {
    const std::string preset = cfg.get_str("synth.preset", "default");
    const std::uint64_t seed = cfg.get_seed("seed", 1);
    GenerativeSpec spec;
    if (preset == "default") {
        spec = default_generative_spec(
            static_cast<std::size_t>(cfg.get_int("synth.records", 20000)),
            cfg.get_double("synth.violation", 0.0), seed);
    } else if (preset == "micro") {
        spec = micro_generative_spec(seed);
        spec.violation = cfg.get_double("synth.violation", 0.0);
        if (cfg.has("synth.records"))
            spec.states[0].records = static_cast<std::size_t>(cfg.get_int("synth.records", 2000));
    } else {
        throw ConfigError("synth.preset must be default|micro");
    }
    if (cfg.has("synth.tracts"))
        for (auto& st : spec.states)
            st.tracts = static_cast<std::size_t>(cfg.get_int("synth.tracts", 25));
    if (cfg.has("synth.blocks_per_tract"))
        for (auto& st : spec.states)
            st.blocks_per_tract =
                static_cast<std::size_t>(cfg.get_int("synth.blocks_per_tract", 4));
    if (cfg.has("synth.concentration"))
        for (auto& st : spec.states)
            st.concentration = cfg.get_double("synth.concentration", 2.5);
    spec.missing_first = cfg.get_double("synth.missing_first", spec.missing_first);
    spec.missing_middle = cfg.get_double("synth.missing_middle", spec.missing_middle);
    return spec;
}

}  // namespace

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

void cmd_synth(RunConfig cfg) {
    cfg.require_known(with_common({"synth.preset", "synth.records", "synth.violation",
                                   "synth.tracts", "synth.blocks_per_tract",
                                   "synth.concentration", "synth.missing_first",
                                   "synth.missing_middle"}));
    const std::string out = require_out(cfg);
    const GenerativeSpec spec = spec_from_config(cfg);
    const SynthWorld world = realize(spec);
    const CorpusFiles files = write_corpus(world, out);

    std::ostringstream manifest;
    manifest << "seed " << spec.seed << '\n';
    manifest << "violation " << fmt_full(spec.violation) << '\n';
    auto list = [&manifest](const char* what, const std::vector<std::string>& paths) {
        for (const auto& p : paths)
            manifest << what << ' ' << fs::path(p).filename().string() << ' ' << file_checksum(p)
                     << '\n';
    };
    list("persons", files.person_files);
    list("blocks", files.block_files);
    list("surnames", files.state_surname_files);
    list("surnames", {files.national_surname_file});
    list("names", {files.first_name_file, files.middle_name_file});
    for (const auto& st : world.states)
        manifest << "state " << st.name << " records " << st.records << '\n';
    write_text(out + "/manifest.txt", manifest.str());
    write_resolved_config(cfg, out);
    std::cout << "synth: wrote " << world.states.size() << " state(s) to " << out << '\n';
}

// ---------------------------------------------------------------------------
// build-tables
// ---------------------------------------------------------------------------

void cmd_build_tables(RunConfig cfg) {
    cfg.require_known(with_common({"tables.surname_file", "tables.geo_files", "tables.name_files",
                                   "tables.first_counts", "tables.middle_counts",
                                   "tables.held_out", "tables.floor"}));
    const std::string out = require_out(cfg);
    const std::string surname_file = cfg.require_str("tables.surname_file");
    const auto geo_files = split_csv_list(cfg.require_str("tables.geo_files"));
    if (geo_files.empty()) throw ConfigError("tables.geo_files must name at least one file");
    const std::string held_out = cfg.get_str("tables.held_out", "");
    const double floor = cfg.get_double("tables.floor", 1.0);

    // Build everything before writing anything, so a failure leaves no
    // partial outputs.
    const SurnameTable surnames = build_surname_table(surname_file);
    GeoTable geo = build_geo_table(geo_files[0]);
    for (std::size_t i = 1; i < geo_files.size(); ++i) geo.merge(build_geo_table(geo_files[i]));
    for (const auto& w : geo.warnings()) std::cerr << "warning: " << w << '\n';

    bool has_names = false;
    NameTable first, middle;
    const std::string name_files = cfg.get_str("tables.name_files", "");
    const std::string first_counts = cfg.get_str("tables.first_counts", "");
    const std::string middle_counts = cfg.get_str("tables.middle_counts", "");
    if (!name_files.empty() && !first_counts.empty())
        throw ConfigError("give either tables.name_files or tables.*_counts, not both");
    if (!name_files.empty()) {
        const PersonSchema schema = schema_from_config(cfg);
        std::vector<Dataset> training;
        for (const auto& path : split_csv_list(name_files))
            training.push_back(parse_person_file(path, schema).dataset);
        first = build_name_table(training, NameSlot::First, floor, held_out);
        middle = build_name_table(training, NameSlot::Middle, floor, held_out);
        has_names = true;
    } else if (!first_counts.empty() || !middle_counts.empty()) {
        if (first_counts.empty() || middle_counts.empty())
            throw ConfigError("tables.first_counts and tables.middle_counts go together");
        first = build_name_table_from_counts(first_counts, NameSlot::First, floor);
        middle = build_name_table_from_counts(middle_counts, NameSlot::Middle, floor);
        has_names = true;
    }

    save_surname_table(out + "/surname.tbl", surnames);
    save_geo_table(out + "/geo.tbl", geo);
    if (has_names) {
        save_name_table(out + "/first.tbl", first);
        save_name_table(out + "/middle.tbl", middle);
    }

    std::ostringstream manifest;
    manifest << "held_out " << (held_out.empty() ? "-" : held_out) << '\n';
    manifest << "floor " << fmt_full(floor) << '\n';
    auto input = [&manifest](const std::string& path) {
        manifest << "input " << path << ' ' << file_checksum(path) << '\n';
    };
    input(surname_file);
    for (const auto& g : geo_files) input(g);
    for (const auto& f : split_csv_list(name_files)) input(f);
    if (!first_counts.empty()) input(first_counts);
    if (!middle_counts.empty()) input(middle_counts);
    if (has_names) {
        manifest << "training_states";
        for (const auto& s : first.training_states()) manifest << ' ' << s;
        manifest << '\n';
    }
    for (const auto& name : {"surname.tbl", "geo.tbl"})
        manifest << "output " << name << ' ' << file_checksum(out + "/" + name) << '\n';
    if (has_names)
        for (const auto& name : {"first.tbl", "middle.tbl"})
            manifest << "output " << name << ' ' << file_checksum(out + "/" + name) << '\n';
    write_text(out + "/manifest.txt", manifest.str());
    write_resolved_config(cfg, out);
    std::cout << "build-tables: " << surnames.size() << " surnames, " << geo.size() << " blocks"
              << (has_names ? ", first/middle name tables" : "") << " -> " << out << '\n';
}

// ---------------------------------------------------------------------------
// predict (streaming)
// ---------------------------------------------------------------------------

void cmd_predict(RunConfig cfg) {
    cfg.require_known(with_common(
        {"predict.input", "predict.tables", "predict.model", "predict.memory_mb"}));
    const std::string out = require_out(cfg);
    const std::string input = cfg.require_str("predict.input");
    const std::string tables_dir = cfg.require_str("predict.tables");
    const std::string method = cfg.get_str("method", "bisg");
    const double memory_mb = cfg.get_double("predict.memory_mb", 0.0);

    const LoadedTables tables = load_tables_dir(tables_dir);
    ml::Model model;
    Layout layout = Layout::Base;
    enum class Mode { Bisg, Extended, Model } mode = Mode::Bisg;
    if (method == "bisg") {
        mode = Mode::Bisg;
    } else if (method == "extended") {
        mode = Mode::Extended;
        layout = Layout::Extended;
    } else if (method == "model") {
        mode = Mode::Model;
        model = ml::load_model(cfg.require_str("predict.model"));
        layout = model.layout;
    } else {
        throw ConfigError("method must be bisg|extended|model");
    }
    const TableSet tset = tables.view(layout);  // layout mismatch fails here

    const PersonSchema schema = schema_from_config(cfg);
    CsvReader reader(input, schema.delimiter);
    auto col = [&reader](const std::string& name, bool required) {
        const int idx = reader.column(name);
        if (idx < 0 && required)
            throw ConfigError("prediction input is missing required column '" + name + "'");
        return idx;
    };
    const int c_surname = col(schema.surname, true);
    const int c_block = col(schema.block_id, true);
    const int c_first = col(schema.first_name, false);
    const int c_middle = col(schema.middle_name, false);

    const std::string out_path = out + "/predictions.csv";
    std::FILE* fout = std::fopen(out_path.c_str(), "w");
    if (!fout) throw IoError("cannot write " + out_path);

    std::string header;
    for (const auto& h : reader.header()) {
        if (!header.empty()) header.push_back(schema.delimiter);
        header += h;
    }
    header += ",p_white,p_black,p_hispanic,p_asian,p_other,pred_race,fallback_flags\n";
    std::fwrite(header.data(), 1, header.size(), fout);

    const auto start = std::chrono::steady_clock::now();
    BatchReport report;
    std::vector<std::string_view> fields;
    PersonRecord rec;
    std::string buf;
    buf.reserve(1 << 20);
    char num[16 + kNumRaces * 16];
    while (reader.next(fields)) {
        rec.surname = canonicalize_name(fields[c_surname]);
        rec.block_id = std::string(fields[c_block]);
        rec.first_name = c_first >= 0 ? canonicalize_name(fields[c_first]) : std::string{};
        rec.middle_name = c_middle >= 0 ? canonicalize_name(fields[c_middle]) : std::string{};

        PosteriorDistribution post;
        switch (mode) {
            case Mode::Bisg:
                post = bisg_posterior(rec, tables.surnames, tables.geo);
                break;
            case Mode::Extended:
                post = extended_posterior(rec, tables.surnames, tables.geo, tables.first,
                                          tables.middle);
                break;
            case Mode::Model: {
                const FeatureVector fv = make_features(rec, tset, layout);
                post.probs = model.predict(fv.values);
                post.provenance = std::string(ml::family_str(model.family));
                // Input-fallback diagnostics, same semantics as the bayes path.
                if (tables.surnames.lookup(rec.surname).residual)
                    post.flags |= flag::kSurnameResidual;
                const auto g = tables.geo.lookup(rec.block_id);
                if (!g.has_value() || sum(*g) <= 0.0) post.flags |= flag::kGeoMissing;
                if (layout == Layout::Extended &&
                    ((!rec.first_name.empty() && tset.first->lookup(rec.first_name).oov) ||
                     (!rec.middle_name.empty() && tset.middle->lookup(rec.middle_name).oov)))
                    post.flags |= flag::kNameOov;
                break;
            }
        }
        report.add(post.flags);

        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) buf.push_back(schema.delimiter);
            buf.append(fields[i].data(), fields[i].size());
        }
        int len = 0;
        for (std::size_t r = 0; r < kNumRaces; ++r)
            len += std::snprintf(num + len, sizeof(num) - len, ",%.9g", post.probs[r]);
        buf.append(num, len);
        buf.push_back(',');
        buf.append(race_name(post.top_race()));
        buf.push_back(',');
        buf.append(flag::to_string(post.flags));
        buf.push_back('\n');
        if (buf.size() > (1 << 20) - 4096) {
            std::fwrite(buf.data(), 1, buf.size(), fout);
            buf.clear();
        }
    }
    std::fwrite(buf.data(), 1, buf.size(), fout);
    if (std::fclose(fout) != 0) throw IoError("write failed: " + out_path);

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double rate = secs > 0 ? static_cast<double>(report.records) / secs : 0.0;
    const double rss = peak_rss_mb();

    std::ostringstream summary;
    summary << "rows " << report.records << '\n';
    summary << "seconds " << fmt_short(secs) << '\n';
    summary << "rows_per_second " << fmt_short(rate) << '\n';
    summary << "peak_rss_mb " << fmt_short(rss) << '\n';
    summary << "fallbacks " << report.to_text() << '\n';
    write_text(out + "/summary.txt", summary.str());
    write_resolved_config(cfg, out);
    std::cout << "predict: " << report.records << " rows in " << fmt_short(secs) << "s ("
              << fmt_short(rate) << " rows/s), peak rss " << fmt_short(rss) << " MB\n"
              << "fallbacks: " << report.to_text() << '\n';

    if (memory_mb > 0 && rss > memory_mb)
        throw DataError("predict: peak rss " + fmt_short(rss) + " MB exceeded the bound " +
                        fmt_short(memory_mb) + " MB");
}

// ---------------------------------------------------------------------------
// train / tune
// ---------------------------------------------------------------------------

namespace {

std::map<std::string, double> parse_params(const std::string& text) {
    std::map<std::string, double> params;
    if (text.empty()) return params;
    std::vector<std::string_view> parts;
    split_line(text, ';', parts);
    for (auto p : parts) {
        if (p.empty()) continue;
        const auto eq = p.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("bad hyperparameter entry '" + std::string(p) +
                              "' (expected key=value;key=value)");
        params[std::string(p.substr(0, eq))] = parse_double(p.substr(eq + 1), "hyperparameter");
    }
    return params;
}

// Loads person files, filters them for analysis, and reports removals.
Dataset load_training_data(const std::vector<std::string>& paths, const PersonSchema& schema,
                           RemovalReport* removals) {
    Dataset pooled;
    for (const auto& path : paths) {
        auto parsed = parse_person_file(path, schema);
        for (const auto& bad : parsed.malformed)
            std::cerr << "warning: " << path << " line " << bad.line << ": " << bad.reason << '\n';
        FilterResult filtered = filter_for_analysis(parsed.dataset);
        if (removals) {
            removals->unknown_label += filtered.removed.unknown_label;
            removals->empty_surname += filtered.removed.empty_surname;
            removals->bad_block += filtered.removed.bad_block;
        }
        pooled.records.insert(pooled.records.end(), filtered.dataset.records.begin(),
                              filtered.dataset.records.end());
        for (const auto& s : filtered.dataset.provenance) {
            if (std::find(pooled.provenance.begin(), pooled.provenance.end(), s) ==
                pooled.provenance.end())
                pooled.provenance.push_back(s);
        }
    }
    return pooled;
}

}  // namespace

void cmd_train(RunConfig cfg) {
    cfg.require_known(with_common({"train.family", "train.inputs", "train.tables",
                                   "train.params"}));
    const std::string out = require_out(cfg);
    const ml::ModelFamily family = ml::parse_family(cfg.require_str("train.family"));
    const Layout layout = parse_layout(cfg.get_str("layout", "base"));
    const std::uint64_t seed = cfg.get_seed("seed", 0);
    const LoadedTables tables = load_tables_dir(cfg.require_str("train.tables"));

    RemovalReport removals;
    const Dataset data = load_training_data(split_csv_list(cfg.require_str("train.inputs")),
                                            schema_from_config(cfg), &removals);
    const ml::LabelledMatrix matrix = ml::build_matrix(data, tables.view(layout), layout);
    if (matrix.rows() == 0) throw DataError("train: no labelled rows after filtering");

    ml::Model model = ml::train_model(family, matrix, parse_params(cfg.get_str("train.params", "")),
                                      seed, threads_from(cfg));
    model.training_states = data.provenance;

    const std::string model_path = out + "/model.rpm";
    ml::save_model(model_path, model);
    write_text(out + "/removals.txt", removals.to_text() + "\n");
    write_text(out + "/removals.csv", removals.to_csv());
    write_resolved_config(cfg, out);
    std::cout << "train: " << ml::family_str(family) << " on " << matrix.rows() << " rows -> "
              << model_path << '\n';
}

void cmd_tune(RunConfig cfg) {
    cfg.require_known(with_common({"tune.family", "tune.inputs", "tune.tables", "tune.points",
                                   "tune.folds", "tune.sample"}));
    const std::string out = require_out(cfg);
    const ml::ModelFamily family = ml::parse_family(cfg.require_str("tune.family"));
    const Layout layout = parse_layout(cfg.get_str("layout", "base"));
    const LoadedTables tables = load_tables_dir(cfg.require_str("tune.tables"));

    RemovalReport removals;
    const Dataset data = load_training_data(split_csv_list(cfg.require_str("tune.inputs")),
                                            schema_from_config(cfg), &removals);
    const ml::LabelledMatrix matrix = ml::build_matrix(data, tables.view(layout), layout);

    ml::TuneSpec spec;
    spec.samples = static_cast<std::size_t>(cfg.get_int("tune.points", 8));
    spec.folds = static_cast<std::size_t>(cfg.get_int("tune.folds", 5));
    spec.sample_rows = static_cast<std::size_t>(cfg.get_int("tune.sample", 0));
    spec.seed = cfg.get_seed("seed", 0);
    spec.threads = threads_from(cfg);
    const ml::TuneResult result = ml::tune(spec, family, matrix);

    write_text(out + "/cv_table.csv", result.table_csv());
    std::ostringstream best;
    for (const auto& [k, v] : result.best) best << k << " = " << fmt_full(v) << '\n';
    write_text(out + "/best.params", best.str());
    write_resolved_config(cfg, out);
    std::cout << "tune: " << result.table.size() << " point(s), best index " << result.best_index
              << '\n';
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

namespace {

// Reads a predictions.csv back into posterior vectors keyed by record id.
std::unordered_map<std::string, PosteriorDistribution> load_predictions(
    const std::string& path, const std::string& id_column, char delimiter) {
    CsvReader reader(path, delimiter);
    const int c_id = reader.column(id_column);
    if (c_id < 0) throw DataError(path + ": missing '" + id_column + "' column");
    std::array<int, kNumRaces> c_prob;
    for (std::size_t r = 0; r < kNumRaces; ++r) {
        c_prob[r] = reader.column("p_" + std::string(race_name(r)));
        if (c_prob[r] < 0)
            throw DataError(path + ": missing probability column p_" + std::string(race_name(r)));
    }
    const int c_flags = reader.column("fallback_flags");

    std::unordered_map<std::string, PosteriorDistribution> out;
    std::vector<std::string_view> fields;
    while (reader.next(fields)) {
        PosteriorDistribution post;
        for (std::size_t r = 0; r < kNumRaces; ++r)
            post.probs[r] = parse_double(fields[c_prob[r]], path);
        if (c_flags >= 0) post.flags = flag::from_string(fields[c_flags]);
        if (!out.emplace(std::string(fields[c_id]), std::move(post)).second)
            throw DataError(path + ": duplicate record id " + std::string(fields[c_id]));
    }
    return out;
}

}  // namespace

void cmd_evaluate(RunConfig cfg) {
    cfg.require_known(with_common({"eval.truth", "eval.predictions", "eval.state"}));
    const std::string out = require_out(cfg);
    const AggMode agg = parse_agg_mode(cfg.get_str("agg", "prob"));
    const PersonSchema schema = schema_from_config(cfg);

    auto parsed = parse_person_file(cfg.require_str("eval.truth"), schema);
    const Dataset truth = filter_for_analysis(parsed.dataset).dataset;
    if (truth.empty()) throw DataError("evaluate: no usable truth records");

    // eval.predictions = name=path[,name=path...]
    std::vector<std::pair<std::string, std::vector<PosteriorDistribution>>> sets;
    for (const auto& entry : split_csv_list(cfg.require_str("eval.predictions"))) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos)
            throw ConfigError("eval.predictions entries look like name=path");
        const std::string name = entry.substr(0, eq);
        auto by_id = load_predictions(entry.substr(eq + 1), schema.record_id, schema.delimiter);
        std::vector<PosteriorDistribution> aligned;
        aligned.reserve(truth.size());
        for (const auto& rec : truth.records) {
            auto it = by_id.find(rec.record_id);
            if (it == by_id.end())
                throw DataError("evaluate: prediction set '" + name + "' is missing record " +
                                rec.record_id);
            aligned.push_back(it->second);
        }
        sets.emplace_back(name, std::move(aligned));
    }

    std::vector<std::pair<std::string, std::span<const PosteriorDistribution>>> views;
    for (const auto& [name, posts] : sets) views.emplace_back(name, posts);
    const EvalReport report = full_report(truth, views, agg, cfg.get_str("eval.state", ""),
                                          cfg.get_str("layout", ""));

    write_text(out + "/auc.csv", report.auc_csv());
    write_text(out + "/rmse.csv", report.rmse_csv());
    write_text(out + "/bias.csv", report.bias_csv());
    write_text(out + "/calibration.csv", report.calibration_csv());
    write_text(out + "/report.txt", report.to_text());
    write_resolved_config(cfg, out);
    std::cout << report.to_text();
}

// ---------------------------------------------------------------------------
// loso
// ---------------------------------------------------------------------------

void cmd_loso(RunConfig cfg) {
    cfg.require_known(with_common({"loso.states", "loso.geo_files", "loso.surname_file",
                                   "loso.methods", "loso.layouts", "loso.tune", "loso.points",
                                   "loso.folds", "loso.floor", "loso.tune_rows",
                                   "loso.train_rows"}));
    const std::string out = require_out(cfg);
    const PersonSchema schema = schema_from_config(cfg);
    const std::uint64_t seed = cfg.get_seed("seed", 0);
    const double scale = cfg.get_double("scale", 1.0);
    const AggMode agg = parse_agg_mode(cfg.get_str("agg", "prob"));
    const std::size_t threads = threads_from(cfg);

    const auto state_files = split_csv_list(cfg.require_str("loso.states"));
    if (state_files.size() < 2) throw ConfigError("loso needs at least 2 state files");

    std::vector<Dataset> states;
    for (const auto& path : state_files) {
        auto parsed = parse_person_file(path, schema);
        Dataset filtered = filter_for_analysis(parsed.dataset).dataset;
        if (filtered.provenance.size() != 1)
            throw DataError("loso: " + path + " must contain exactly one state, found " +
                            std::to_string(filtered.provenance.size()));
        states.push_back(std::move(filtered));
    }

    const SurnameTable surnames = build_surname_table(cfg.require_str("loso.surname_file"));
    GeoTable geo;
    {
        const auto geo_files = split_csv_list(cfg.require_str("loso.geo_files"));
        if (geo_files.empty()) throw ConfigError("loso.geo_files must name at least one file");
        geo = build_geo_table(geo_files[0]);
        for (std::size_t i = 1; i < geo_files.size(); ++i)
            geo.merge(build_geo_table(geo_files[i]));
    }

    const auto layout_names = split_csv_list(cfg.get_str("loso.layouts", "base,extended"));
    const auto method_names =
        split_csv_list(cfg.get_str("loso.methods", "bisg,mlr,elasticnet,forest,gbm"));
    const double floor = cfg.get_double("loso.floor", 1.0);

    for (const auto& layout_name : layout_names) {
        const Layout layout = parse_layout(layout_name);

        // posteriors[state][method] in method order
        std::vector<std::vector<std::pair<std::string, std::vector<PosteriorDistribution>>>>
            per_state(states.size());

        for (const auto& method : method_names) {
            if (method == "bisg" || method == "extended") {
                const bool extended = method == "extended" || layout == Layout::Extended;
                for (std::size_t h = 0; h < states.size(); ++h) {
                    // The bayes methods only use the held-out state's own
                    // tables plus (for the extended form) name tables from the
                    // training states.
                    TableSet tset;
                    tset.surnames = &surnames;
                    tset.geo = &geo;
                    NameTable first_table, middle_table;
                    if (extended) {
                        Dataset pooled;
                        for (std::size_t s = 0; s < states.size(); ++s) {
                            if (s == h) continue;
                            pooled.records.insert(pooled.records.end(), states[s].records.begin(),
                                                  states[s].records.end());
                        }
                        const std::span<const Dataset> span(&pooled, 1);
                        first_table = build_name_table(span, NameSlot::First, floor,
                                                       states[h].provenance.front());
                        middle_table = build_name_table(span, NameSlot::Middle, floor,
                                                        states[h].provenance.front());
                        tset.first = &first_table;
                        tset.middle = &middle_table;
                    }
                    BatchResult batch = predict_batch(
                        states[h], extended ? BayesMethod::Extended : BayesMethod::Bisg, tset);
                    per_state[h].emplace_back(method, std::move(batch.posteriors));
                }
                continue;
            }

            ml::LosoOptions opt;
            opt.family = ml::parse_family(method);
            opt.layout = layout;
            opt.scale = scale;
            opt.tune_rows_base = static_cast<std::size_t>(cfg.get_int("loso.tune_rows", 100000));
            opt.train_rows_base = static_cast<std::size_t>(cfg.get_int("loso.train_rows", 1000000));
            opt.do_tune = cfg.get_bool("loso.tune", false);
            opt.tune_spec.samples = static_cast<std::size_t>(cfg.get_int("loso.points", 8));
            opt.tune_spec.folds = static_cast<std::size_t>(cfg.get_int("loso.folds", 5));
            opt.name_floor = floor;
            opt.seed = derive_seed(seed, method + "/" + layout_name);
            opt.threads = threads;

            ml::LosoResult result = ml::run_loso(states, surnames, geo, opt);
            for (std::size_t h = 0; h < states.size(); ++h) {
                const auto& fold = result.folds[h];
                const std::string state_dir =
                    out + "/" + layout_name + "/" + fold.manifest.held_out;
                fs::create_directories(state_dir);
                write_text(state_dir + "/manifest_" + method + ".txt", fold.manifest.to_text());
                if (opt.do_tune)
                    write_text(state_dir + "/cv_table_" + method + ".csv",
                               fold.tuning.table_csv());
                per_state[h].emplace_back(method, std::move(result.folds[h].predictions));
            }
        }

        for (std::size_t h = 0; h < states.size(); ++h) {
            std::vector<std::pair<std::string, std::span<const PosteriorDistribution>>> views;
            for (const auto& [name, posts] : per_state[h]) views.emplace_back(name, posts);
            const EvalReport report =
                full_report(states[h], views, agg, states[h].provenance.front(), layout_name);
            const std::string state_dir = out + "/" + layout_name + "/" + report.state;
            fs::create_directories(state_dir);
            write_text(state_dir + "/auc.csv", report.auc_csv());
            write_text(state_dir + "/rmse.csv", report.rmse_csv());
            write_text(state_dir + "/bias.csv", report.bias_csv());
            write_text(state_dir + "/calibration.csv", report.calibration_csv());
            write_text(state_dir + "/report.txt", report.to_text());
        }
    }
    write_resolved_config(cfg, out);
    std::cout << "loso: wrote reports for " << states.size() << " state(s) x "
              << layout_names.size() << " layout(s) under " << out << '\n';
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
    try {
        if (args.empty()) {
            std::cerr << "usage: raceproxy <synth|build-tables|predict|train|tune|evaluate|loso> "
                         "[--config FILE] [--seed N] [--scale F] [--layout L] [--method M] "
                         "[--agg A] [--threads N] [--out DIR] [key=value ...]\n";
            return exit_code::kConfig;
        }
        const std::string command = args[0];
        RunConfig cfg;
        std::string config_path;

        // Flags first, then key=value overrides.
        for (std::size_t i = 1; i < args.size(); ++i) {
            const std::string& a = args[i];
            auto flag_value = [&](const char* name) -> std::optional<std::string> {
                if (a == name) {
                    if (i + 1 >= args.size())
                        throw ConfigError(std::string(name) + " needs a value");
                    return args[++i];
                }
                return std::nullopt;
            };
            if (auto v = flag_value("--config")) { config_path = *v; continue; }
            bool matched = false;
            for (const char* name : {"--seed", "--scale", "--layout", "--method", "--agg",
                                     "--out", "--threads"}) {
                if (auto v = flag_value(name)) {
                    cfg.set(name + 2, *v);
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
            const auto eq = a.find('=');
            if (eq != std::string::npos && a[0] != '-') {
                cfg.set(a.substr(0, eq), a.substr(eq + 1));
                continue;
            }
            throw ConfigError("unrecognized argument '" + a + "'");
        }

        if (!config_path.empty()) {
            RunConfig from_file = RunConfig::from_file(config_path);
            // Command-line values win over file values.
            for (const auto& [k, v] : cfg.values()) from_file.set(k, v);
            cfg = from_file;
        }

        if (command == "synth") cmd_synth(std::move(cfg));
        else if (command == "build-tables") cmd_build_tables(std::move(cfg));
        else if (command == "predict") cmd_predict(std::move(cfg));
        else if (command == "train") cmd_train(std::move(cfg));
        else if (command == "tune") cmd_tune(std::move(cfg));
        else if (command == "evaluate") cmd_evaluate(std::move(cfg));
        else if (command == "loso") cmd_loso(std::move(cfg));
        else throw ConfigError("unknown subcommand '" + command + "'");
        return exit_code::kOk;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return exit_code::kConfig;
    } catch (const LeakageError& e) {
        std::cerr << "leakage error: " << e.what() << '\n';
        return exit_code::kLeakage;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence error: " << e.what() << '\n';
        return exit_code::kDivergence;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return exit_code::kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace raceproxy::cli
