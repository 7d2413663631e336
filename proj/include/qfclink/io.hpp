// Small output helpers: stable number formatting, CSV rows, atomic file writes
// and the `pump_w,value[,weight]` curve reader.
#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qfclink/fitting.hpp"

namespace qfclink {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest-ish fixed representation: 10 significant digits, `inf` for the SNR sentinel.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::initializer_list<std::string_view> header) {
        bool first = true;
        for (auto h : header) {
            if (!first) out_ << ',';
            out_ << h;
            first = false;
        }
        out_ << '\n';
    }

    template <class... Cells>
    void row(const Cells&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

private:
    static std::string cell(double v) { return format_number(v); }
    static std::string cell(std::string_view s) { return std::string(s); }
    static std::string cell(const char* s) { return s; }
    static std::string cell(const std::string& s) { return s; }
    template <class I>
        requires std::is_integral_v<I>
    static std::string cell(I v) { return std::to_string(v); }

    std::ostringstream out_;
};

/// Writes to a sibling temporary then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
        os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!os) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

/// Parses a curve CSV with header `pump_w,value` or `pump_w,value,weight`.
inline std::vector<CurvePoint> parse_curve_csv(std::string_view text) {
    std::vector<CurvePoint> points;
    std::istringstream is{std::string(text)};
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("curve CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool weighted = false;
    if (line == "pump_w,value,weight")
        weighted = true;
    else if (line != "pump_w,value")
        throw std::invalid_argument("curve CSV header must be 'pump_w,value[,weight]'");

    auto num = [](std::string_view s, std::size_t lineno) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw std::invalid_argument("curve CSV line " + std::to_string(lineno) + ": bad number '" + std::string(s) + "'");
        return v;
    };
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string_view> cells;
        std::string_view rest = line;
        for (;;) {
            const auto c = rest.find(',');
            cells.push_back(rest.substr(0, c));
            if (c == std::string_view::npos) break;
            rest = rest.substr(c + 1);
        }
        if (cells.size() != (weighted ? 3u : 2u))
            throw std::invalid_argument("curve CSV line " + std::to_string(lineno) + ": wrong column count");
        CurvePoint p{num(cells[0], lineno), num(cells[1], lineno), std::nullopt};
        if (weighted) p.weight = num(cells[2], lineno);
        points.push_back(p);
    }
    return points;
}

} // namespace qfclink
