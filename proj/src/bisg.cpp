#include "raceproxy/bisg.hpp"

#include <sstream>

#include "raceproxy/errors.hpp"

namespace raceproxy {

namespace flag {

std::string to_string(std::uint8_t flags) {
    if (flags == 0) return "-";
    std::string out;
    auto add = [&out](const char* tok) {
        if (!out.empty()) out.push_back('+');
        out += tok;
    };
    if (flags & kSurnameResidual) add("res");
    if (flags & kGeoMissing) add("geo");
    if (flags & kNameOov) add("oov");
    if (flags & kUniformFallback) add("uni");
    return out;
}

std::uint8_t from_string(std::string_view s) {
    if (s == "-" || s.empty()) return 0;
    std::uint8_t flags = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '+') {
            const auto tok = s.substr(start, i - start);
            if (tok == "res") flags |= kSurnameResidual;
            else if (tok == "geo") flags |= kGeoMissing;
            else if (tok == "oov") flags |= kNameOov;
            else if (tok == "uni") flags |= kUniformFallback;
            else throw DataError("unknown fallback flag token '" + std::string(tok) + "'");
            start = i + 1;
        }
    }
    return flags;
}

}  // namespace flag

namespace {

// Shared tail: normalize positive mass, or fall back to uniform.
PosteriorDistribution finish(Vec5 unnorm, std::uint8_t flags, std::string provenance) {
    PosteriorDistribution out;
    out.provenance = std::move(provenance);
    const double total = sum(unnorm);
    if (total > 0.0) {
        out.probs = {unnorm[0] / total, unnorm[1] / total, unnorm[2] / total,
                     unnorm[3] / total, unnorm[4] / total};
        out.flags = flags;
    } else {
        out.probs = uniform_vec5();
        out.flags = flag::kAll;
    }
    return out;
}

}  // namespace

PosteriorDistribution bisg_posterior(const PersonRecord& p, const SurnameTable& surnames,
                                     const GeoTable& geo) {
    std::uint8_t flags = 0;
    const auto sn = surnames.lookup(p.surname);
    if (sn.residual) flags |= flag::kSurnameResidual;

    Vec5 unnorm = sn.probs;
    const auto g = geo.lookup(p.block_id);
    if (g.has_value() && sum(*g) > 0.0) {
        for (std::size_t r = 0; r < kNumRaces; ++r) unnorm[r] *= (*g)[r];
    } else {
        flags |= flag::kGeoMissing;  // geography factor dropped
    }
    return finish(unnorm, flags, "bisg");
}

PosteriorDistribution extended_posterior(const PersonRecord& p, const SurnameTable& surnames,
                                         const GeoTable& geo, const NameTable& first,
                                         const NameTable& middle) {
    std::uint8_t flags = 0;
    const auto sn = surnames.lookup(p.surname);
    if (sn.residual) flags |= flag::kSurnameResidual;

    Vec5 unnorm = sn.probs;
    const auto g = geo.lookup(p.block_id);
    if (g.has_value() && sum(*g) > 0.0) {
        for (std::size_t r = 0; r < kNumRaces; ++r) unnorm[r] *= (*g)[r];
    } else {
        flags |= flag::kGeoMissing;
    }
    // Missing names drop their factor; present-but-unknown names contribute
    // the OOV vector.
    if (!p.first_name.empty()) {
        const auto fn = first.lookup(p.first_name);
        if (fn.oov) flags |= flag::kNameOov;
        for (std::size_t r = 0; r < kNumRaces; ++r) unnorm[r] *= fn.probs[r];
    }
    if (!p.middle_name.empty()) {
        const auto mn = middle.lookup(p.middle_name);
        if (mn.oov) flags |= flag::kNameOov;
        for (std::size_t r = 0; r < kNumRaces; ++r) unnorm[r] *= mn.probs[r];
    }
    return finish(unnorm, flags, "extended");
}

void BatchReport::add(std::uint8_t flags) {
    ++records;
    if (flags & flag::kSurnameResidual) ++surname_residual;
    if (flags & flag::kGeoMissing) ++geo_missing;
    if (flags & flag::kNameOov) ++name_oov;
    if (flags & flag::kUniformFallback) ++uniform_fallback;
}

std::string BatchReport::to_text() const {
    std::ostringstream os;
    os << records << " record(s): " << surname_residual << " surname-residual, " << geo_missing
       << " geo-missing, " << name_oov << " name-oov, " << uniform_fallback << " uniform-fallback";
    return os.str();
}

BatchResult predict_batch(const Dataset& d, BayesMethod method, const TableSet& tables) {
    if (tables.surnames == nullptr || tables.geo == nullptr)
        throw ConfigError("predict_batch: surname and geo tables are required");
    if (method == BayesMethod::Extended && (tables.first == nullptr || tables.middle == nullptr))
        throw ConfigError("predict_batch: extended method requires first and middle name tables");

    BatchResult out;
    out.posteriors.reserve(d.size());
    for (const auto& rec : d.records) {
        PosteriorDistribution post =
            method == BayesMethod::Bisg
                ? bisg_posterior(rec, *tables.surnames, *tables.geo)
                : extended_posterior(rec, *tables.surnames, *tables.geo, *tables.first,
                                     *tables.middle);
        out.report.add(post.flags);
        out.posteriors.push_back(std::move(post));
    }
    return out;
}

}  // namespace raceproxy
