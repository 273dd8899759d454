#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace raceproxy {

// Flat key = value run configuration with section-prefixed keys
// (e.g. "synth.records"). '#' starts a comment; unknown keys are rejected by
// each subcommand before it runs.
class RunConfig {
public:
    RunConfig() = default;

    static RunConfig from_file(const std::string& path);

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& dflt = "") const;
    std::string require_str(const std::string& key) const;  // ConfigError when absent
    double get_double(const std::string& key, double dflt) const;
    long long get_int(const std::string& key, long long dflt) const;
    std::uint64_t get_seed(const std::string& key, std::uint64_t dflt) const;
    bool get_bool(const std::string& key, bool dflt) const;

    // Rejects any key not in `allowed` (ConfigError naming the offender).
    void require_known(const std::set<std::string>& allowed) const;

    // Deterministic "key = value" dump, one per line.
    std::string resolved_text() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace raceproxy
