#include "raceproxy/ml/model.hpp"

#include <fstream>
#include <sstream>

#include "raceproxy/csv.hpp"
#include "raceproxy/errors.hpp"

namespace raceproxy::ml {

std::string_view family_str(ModelFamily f) {
    switch (f) {
        case ModelFamily::Mlr: return "mlr";
        case ModelFamily::ElasticNet: return "elasticnet";
        case ModelFamily::Tree: return "tree";
        case ModelFamily::Forest: return "forest";
        case ModelFamily::Gbm: return "gbm";
    }
    return "mlr";
}

ModelFamily parse_family(std::string_view s) {
    if (s == "mlr" || s == "logit") return ModelFamily::Mlr;
    if (s == "elasticnet" || s == "elnet") return ModelFamily::ElasticNet;
    if (s == "tree") return ModelFamily::Tree;
    if (s == "forest" || s == "rf") return ModelFamily::Forest;
    if (s == "gbm" || s == "gb") return ModelFamily::Gbm;
    throw ConfigError("unknown model family '" + std::string(s) + "'");
}

Vec5 Model::predict(std::span<const double> x) const {
    return std::visit([&x](const auto& m) { return m.predict(x); }, impl);
}

std::map<std::string, double> default_params(ModelFamily f) {
    switch (f) {
        case ModelFamily::Mlr:
            return {{"step_size", 1.0}, {"max_epochs", 2000}, {"tolerance", 1e-9}};
        case ModelFamily::ElasticNet:
            return {{"lambda", 1e-4}, {"delta", 0.5},
                    {"step_size", 1.0}, {"max_epochs", 2000}, {"tolerance", 1e-9}};
        case ModelFamily::Tree:
            return {{"max_depth", 8}, {"min_leaf", 8}};
        case ModelFamily::Forest:
            return {{"n_trees", 100}, {"feature_subsample", 0.6}, {"row_subsample", 0.8},
                    {"max_depth", 8}, {"min_leaf", 8}};
        case ModelFamily::Gbm:
            return {{"iterations", 100}, {"learning_rate", 0.1}, {"max_depth", 4},
                    {"gamma", 0.0}, {"leaf_penalty", 1.0}, {"min_leaf", 8}};
    }
    return {};
}

namespace {

double param(const std::map<std::string, double>& params, const std::string& key, double dflt) {
    auto it = params.find(key);
    return it == params.end() ? dflt : it->second;
}

std::size_t sparam(const std::map<std::string, double>& params, const std::string& key,
                   double dflt) {
    const double v = param(params, key, dflt);
    if (v < 0) throw ConfigError("hyperparameter " + key + " must be >= 0");
    return static_cast<std::size_t>(v + 0.5);
}

}  // namespace

Model train_model(ModelFamily family, const LabelledMatrix& data,
                  const std::map<std::string, double>& params, std::uint64_t seed,
                  std::size_t threads) {
    Model model;
    model.family = family;
    model.layout = data.layout;
    model.seed = seed;
    auto merged = default_params(family);
    for (const auto& [k, v] : params) {
        if (!merged.count(k))
            throw ConfigError("hyperparameter '" + k + "' is not recognized for family " +
                              std::string(family_str(family)));
        merged[k] = v;
    }
    model.hyperparameters = merged;

    switch (family) {
        case ModelFamily::Mlr:
        case ModelFamily::ElasticNet: {
            MlrOptions opt;
            opt.step_size = param(merged, "step_size", 1.0);
            opt.max_epochs = sparam(merged, "max_epochs", 2000);
            opt.tolerance = param(merged, "tolerance", 1e-9);
            opt.seed = seed;
            std::optional<ElasticNetConfig> reg;
            if (family == ModelFamily::ElasticNet)
                reg = ElasticNetConfig{param(merged, "lambda", 0.0), param(merged, "delta", 0.0)};
            model.impl = train_mlr(data, reg, opt);
            break;
        }
        case ModelFamily::Tree: {
            TreeOptions opt;
            opt.max_depth = sparam(merged, "max_depth", 8);
            opt.min_leaf = std::max<std::size_t>(1, sparam(merged, "min_leaf", 1));
            opt.seed = seed;
            model.impl = train_tree(data, opt);
            break;
        }
        case ModelFamily::Forest: {
            ForestOptions opt;
            opt.n_trees = std::max<std::size_t>(1, sparam(merged, "n_trees", 100));
            opt.feature_subsample = param(merged, "feature_subsample", 1.0);
            opt.row_subsample = param(merged, "row_subsample", 1.0);
            opt.max_depth = sparam(merged, "max_depth", 8);
            opt.min_leaf = std::max<std::size_t>(1, sparam(merged, "min_leaf", 1));
            opt.seed = seed;
            opt.threads = threads;
            model.impl = train_forest(data, opt);
            break;
        }
        case ModelFamily::Gbm: {
            GbmOptions opt;
            opt.iterations = sparam(merged, "iterations", 100);
            opt.learning_rate = param(merged, "learning_rate", 0.1);
            opt.max_depth = sparam(merged, "max_depth", 4);
            opt.omega.gamma = param(merged, "gamma", 0.0);
            opt.omega.leaf_penalty = param(merged, "leaf_penalty", 1.0);
            opt.min_leaf = std::max<std::size_t>(1, sparam(merged, "min_leaf", 1));
            opt.seed = seed;
            model.impl = train_gbm(data, opt);
            break;
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kModelMagic = "raceproxy-model v1";

void write_gbm_nodes(std::ofstream& out, const std::vector<GbmNode>& nodes) {
    out << "nodes " << nodes.size() << '\n';
    for (const auto& n : nodes)
        out << n.feature << '\t' << fmt_full(n.threshold) << '\t' << n.left << '\t' << n.right
            << '\t' << fmt_full(n.weight) << '\n';
}

void write_tree_nodes(std::ofstream& out, const std::vector<TreeNode>& nodes) {
    out << "nodes " << nodes.size() << '\n';
    for (const auto& n : nodes) {
        out << n.feature << '\t' << fmt_full(n.threshold) << '\t' << n.left << '\t' << n.right;
        for (double d : n.dist) out << '\t' << fmt_full(d);
        out << '\n';
    }
}

struct LineReader {
    std::ifstream in;
    std::string path;
    std::string line;
    std::vector<std::string_view> fields;

    void next(const char* what) {
        if (!std::getline(in, line)) throw DataError(path + ": truncated model file (" + what + ")");
    }

    void next_fields(const char* what, char delim = '\t') {
        next(what);
        split_line(line, delim, fields);
    }

    std::size_t expect_count(const char* key) {
        next_fields(key, ' ');
        if (fields.size() != 2 || fields[0] != std::string_view(key))
            throw DataError(path + ": expected '" + key + " N'");
        return static_cast<std::size_t>(parse_int(fields[1], path));
    }
};

std::vector<TreeNode> read_tree_nodes(LineReader& r) {
    const std::size_t n = r.expect_count("nodes");
    std::vector<TreeNode> nodes(n);
    for (auto& node : nodes) {
        r.next_fields("tree node");
        if (r.fields.size() != 4 + kNumRaces) throw DataError(r.path + ": bad tree node row");
        node.feature = static_cast<int>(parse_int(r.fields[0], r.path));
        node.threshold = parse_double(r.fields[1], r.path);
        node.left = static_cast<int>(parse_int(r.fields[2], r.path));
        node.right = static_cast<int>(parse_int(r.fields[3], r.path));
        for (std::size_t k = 0; k < kNumRaces; ++k)
            node.dist[k] = parse_double(r.fields[4 + k], r.path);
    }
    return nodes;
}

std::vector<GbmNode> read_gbm_nodes(LineReader& r) {
    const std::size_t n = r.expect_count("nodes");
    std::vector<GbmNode> nodes(n);
    for (auto& node : nodes) {
        r.next_fields("gbm node");
        if (r.fields.size() != 5) throw DataError(r.path + ": bad gbm node row");
        node.feature = static_cast<int>(parse_int(r.fields[0], r.path));
        node.threshold = parse_double(r.fields[1], r.path);
        node.left = static_cast<int>(parse_int(r.fields[2], r.path));
        node.right = static_cast<int>(parse_int(r.fields[3], r.path));
        node.weight = parse_double(r.fields[4], r.path);
    }
    return nodes;
}

}  // namespace

void save_model(const std::string& path, const Model& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write model file: " + path);
    out << kModelMagic << '\n';
    out << "family " << family_str(m.family) << '\n';
    out << "layout " << layout_str(m.layout) << '\n';
    out << "seed " << m.seed << '\n';
    out << "states ";
    for (std::size_t i = 0; i < m.training_states.size(); ++i)
        out << (i ? "," : "") << m.training_states[i];
    out << '\n';
    out << "params ";
    bool first = true;
    for (const auto& [k, v] : m.hyperparameters) {
        out << (first ? "" : ";") << k << '=' << fmt_full(v);
        first = false;
    }
    out << '\n';

    if (const auto* mlr = std::get_if<MlrModel>(&m.impl)) {
        out << "kind mlr " << mlr->n_features << '\n';
        for (std::size_t k = 0; k < kNumRaces; ++k) {
            for (std::size_t j = 0; j < mlr->stride(); ++j)
                out << (j ? "\t" : "") << fmt_full(mlr->coef[k * mlr->stride() + j]);
            out << '\n';
        }
    } else if (const auto* tree = std::get_if<TreeModel>(&m.impl)) {
        out << "kind tree " << tree->n_features << '\n';
        write_tree_nodes(out, tree->nodes);
    } else if (const auto* forest = std::get_if<ForestModel>(&m.impl)) {
        out << "kind forest " << forest->n_features << '\n';
        out << "trees " << forest->trees.size() << '\n';
        for (const auto& t : forest->trees) write_tree_nodes(out, t.nodes);
    } else if (const auto* gbm = std::get_if<GbmModel>(&m.impl)) {
        out << "kind gbm " << gbm->n_features << '\n';
        out << "init";
        for (double s : gbm->init_score) out << '\t' << fmt_full(s);
        out << '\n';
        out << "learning_rate " << fmt_full(gbm->learning_rate) << '\n';
        out << "iterations " << gbm->iterations << '\n';
        out << "trees " << gbm->trees.size() << '\n';
        for (const auto& t : gbm->trees) write_gbm_nodes(out, t.nodes);
    }
    if (!out.good()) throw IoError("write failed: " + path);
}

Model load_model(const std::string& path) {
    LineReader r;
    r.path = path;
    r.in.open(path);
    if (!r.in) throw IoError("cannot open model file: " + path);

    r.next("magic");
    if (r.line != kModelMagic) throw DataError(path + ": not a raceproxy model file");

    Model m;
    r.next_fields("family", ' ');
    if (r.fields.size() != 2 || r.fields[0] != std::string_view("family"))
        throw DataError(path + ": missing family line");
    m.family = parse_family(r.fields[1]);

    r.next_fields("layout", ' ');
    if (r.fields.size() != 2 || r.fields[0] != std::string_view("layout"))
        throw DataError(path + ": missing layout line");
    m.layout = parse_layout(r.fields[1]);

    r.next_fields("seed", ' ');
    if (r.fields.size() != 2 || r.fields[0] != std::string_view("seed"))
        throw DataError(path + ": missing seed line");
    m.seed = parse_uint64(r.fields[1], path);

    r.next_fields("states", ' ');
    if (r.fields.empty() || r.fields[0] != std::string_view("states"))
        throw DataError(path + ": missing states line");
    if (r.fields.size() > 1 && !r.fields[1].empty()) {
        std::vector<std::string_view> parts;
        split_line(r.fields[1], ',', parts);
        for (auto p : parts) m.training_states.emplace_back(p);
    }

    r.next_fields("params", ' ');
    if (r.fields.empty() || r.fields[0] != std::string_view("params"))
        throw DataError(path + ": missing params line");
    if (r.fields.size() > 1 && !r.fields[1].empty()) {
        std::vector<std::string_view> parts;
        split_line(r.fields[1], ';', parts);
        for (auto p : parts) {
            const auto eq = p.find('=');
            if (eq == std::string_view::npos) throw DataError(path + ": bad params entry");
            m.hyperparameters[std::string(p.substr(0, eq))] =
                parse_double(p.substr(eq + 1), path);
        }
    }

    r.next_fields("kind", ' ');
    if (r.fields.size() != 3 || r.fields[0] != std::string_view("kind"))
        throw DataError(path + ": missing kind line");
    const std::string kind(r.fields[1]);
    const std::size_t n_features = static_cast<std::size_t>(parse_int(r.fields[2], path));
    if (n_features != layout_width(m.layout))
        throw DataError(path + ": feature count does not match layout");

    if (kind == "mlr") {
        MlrModel mlr;
        mlr.layout = m.layout;
        mlr.n_features = n_features;
        mlr.coef.resize(kNumRaces * mlr.stride());
        for (std::size_t k = 0; k < kNumRaces; ++k) {
            r.next_fields("coef row");
            if (r.fields.size() != mlr.stride()) throw DataError(path + ": bad coefficient row");
            for (std::size_t j = 0; j < mlr.stride(); ++j)
                mlr.coef[k * mlr.stride() + j] = parse_double(r.fields[j], path);
        }
        m.impl = std::move(mlr);
    } else if (kind == "tree") {
        TreeModel t;
        t.layout = m.layout;
        t.n_features = n_features;
        t.nodes = read_tree_nodes(r);
        m.impl = std::move(t);
    } else if (kind == "forest") {
        ForestModel f;
        f.layout = m.layout;
        f.n_features = n_features;
        const std::size_t n_trees = r.expect_count("trees");
        f.trees.resize(n_trees);
        for (auto& t : f.trees) {
            t.layout = m.layout;
            t.n_features = n_features;
            t.nodes = read_tree_nodes(r);
        }
        m.impl = std::move(f);
    } else if (kind == "gbm") {
        GbmModel g;
        g.layout = m.layout;
        g.n_features = n_features;
        r.next_fields("init");
        if (r.fields.size() != 1 + kNumRaces || r.fields[0] != std::string_view("init"))
            throw DataError(path + ": missing init line");
        for (std::size_t k = 0; k < kNumRaces; ++k)
            g.init_score[k] = parse_double(r.fields[1 + k], path);
        r.next_fields("learning_rate", ' ');
        if (r.fields.size() != 2 || r.fields[0] != std::string_view("learning_rate"))
            throw DataError(path + ": missing learning_rate line");
        g.learning_rate = parse_double(r.fields[1], path);
        g.iterations = r.expect_count("iterations");
        const std::size_t n_trees = r.expect_count("trees");
        if (n_trees != g.iterations * kNumRaces)
            throw DataError(path + ": gbm ensemble length must be iterations x classes");
        g.trees.resize(n_trees);
        for (auto& t : g.trees) t.nodes = read_gbm_nodes(r);
        m.impl = std::move(g);
    } else {
        throw DataError(path + ": unknown model kind '" + kind + "'");
    }
    return m;
}

}  // namespace raceproxy::ml
