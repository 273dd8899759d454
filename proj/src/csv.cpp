#include "raceproxy/csv.hpp"

#include <charconv>
#include <cstdint>

namespace raceproxy {

void split_line(std::string_view line, char delim, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == delim) {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
}

CsvReader::CsvReader(const std::string& path, char delim)
    : path_(path), in_(path), delim_(delim) {
    if (!in_) throw IoError("cannot open file: " + path);
    std::string header_line;
    if (!std::getline(in_, header_line)) throw DataError("empty file (no header row): " + path);
    if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
    std::vector<std::string_view> cols;
    split_line(header_line, delim_, cols);
    for (auto c : cols) header_.emplace_back(c);
    line_no_ = 1;
}

int CsvReader::column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return static_cast<int>(i);
    return -1;
}

bool CsvReader::next(std::vector<std::string_view>& fields) {
    if (!std::getline(in_, line_)) return false;
    if (!line_.empty() && line_.back() == '\r') line_.pop_back();
    ++line_no_;
    split_line(line_, delim_, fields);
    return true;
}

std::string fmt_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw DataError("not a number: '" + std::string(s) + "' (" + context + ")");
    return v;
}

long long parse_int(std::string_view s, const std::string& context) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw DataError("not an integer: '" + std::string(s) + "' (" + context + ")");
    return v;
}

unsigned long long parse_uint64(std::string_view s, const std::string& context) {
    unsigned long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw DataError("not an unsigned integer: '" + std::string(s) + "' (" + context + ")");
    return v;
}

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for checksum: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    char out[20];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

}  // namespace raceproxy
