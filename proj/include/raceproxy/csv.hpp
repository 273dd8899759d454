#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "raceproxy/errors.hpp"

namespace raceproxy {

// Minimal delimiter-separated reader: header row, no quoting. Field values in
// this project never contain the delimiter.
void split_line(std::string_view line, char delim, std::vector<std::string_view>& out);

class CsvReader {
public:
    CsvReader(const std::string& path, char delim = ',');

    const std::vector<std::string>& header() const { return header_; }
    const std::string& path() const { return path_; }

    // Column index for a header name, or -1.
    int column(std::string_view name) const;

    // Advances to the next data row. Returns false at EOF. Views in `fields`
    // stay valid until the next call.
    bool next(std::vector<std::string_view>& fields);

    // 1-based line number of the row returned by the last next().
    std::size_t line_number() const { return line_no_; }

private:
    std::string path_;
    std::ifstream in_;
    char delim_;
    std::string line_;
    std::vector<std::string> header_;
    std::size_t line_no_ = 0;
};

// Exact round-trip formatting for serialized tables and models.
std::string fmt_full(double v);

// Fixed 9-significant-digit formatting for prediction/report output.
std::string fmt_short(double v);

double parse_double(std::string_view s, const std::string& context);
long long parse_int(std::string_view s, const std::string& context);
unsigned long long parse_uint64(std::string_view s, const std::string& context);

// FNV-1a over a file's bytes, hex-encoded; used in run manifests.
std::string file_checksum(const std::string& path);

}  // namespace raceproxy
