#pragma once

#include <stdexcept>
#include <string>

namespace raceproxy {

// Error taxonomy mirrored by the CLI exit codes: every failure surfaced to a
// user belongs to exactly one of these classes.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable/unwritable files. Treated as a data-class failure by the CLI.
struct IoError : DataError {
    explicit IoError(const std::string& msg) : DataError(msg) {}
};

// A metric was requested on inputs where it is mathematically undefined
// (e.g. AUC with single-class labels).
struct UndefinedMetricError : DataError {
    explicit UndefinedMetricError(const std::string& msg) : DataError(msg) {}
};

// Held-out state data reached a training input. Always a hard failure.
struct LeakageError : std::runtime_error {
    explicit LeakageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss/scores during training.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kConfig = 2;
inline constexpr int kData = 3;
inline constexpr int kLeakage = 4;
inline constexpr int kDivergence = 5;
}  // namespace exit_code

}  // namespace raceproxy
