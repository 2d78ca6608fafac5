#pragma once

// Plain numeric CSV and JSON file helpers. Doubles are written in shortest
// round-trip form, so write-then-read is exact.

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "adequacy/avg_model.hpp"
#include "adequacy/outcome.hpp"
#include "adequacy/scenario.hpp"

namespace adequacy {

/// File missing or unreadable; distinct from malformed content.
class MissingFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::filesystem::path& path, std::size_t line) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": not a number: '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    std::size_t column_index(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::runtime_error("missing CSV column '" + std::string(name) + "'");
    }
};

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("cannot open " + path.string());
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& t) {
    std::ofstream out = open_output(path);
    for (std::size_t j = 0; j < t.header.size(); ++j) out << (j ? "," : "") << t.header[j];
    out << '\n';
    for (std::size_t i = 0; i < t.rows(); ++i) {
        for (std::size_t j = 0; j < t.columns.size(); ++j) out << (j ? "," : "") << format_double(t.columns[j][i]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    for (auto h : split_csv_line(line)) t.header.emplace_back(h);
    t.columns.resize(t.header.size());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(t.header.size()) + " fields");
        for (std::size_t j = 0; j < cells.size(); ++j) t.columns[j].push_back(parse_double(cells[j], path, line_no));
    }
    return t;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out = open_output(path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

/// One column per trace, header = trace ids, one row per hour.
inline void write_library_csv(const std::filesystem::path& path, const TraceLibrary& lib) {
    write_csv(path, CsvTable{lib.ids, lib.traces});
}

inline TraceLibrary read_library_csv(const std::filesystem::path& path) {
    CsvTable t = read_csv(path);
    if (t.header.empty()) throw std::runtime_error(path.string() + ": no traces");
    if (t.rows() != hours_per_year)
        throw std::runtime_error(path.string() + ": expected " + std::to_string(hours_per_year) + " rows, found " +
                                 std::to_string(t.rows()));
    return TraceLibrary{std::move(t.header), std::move(t.columns)};
}

inline void write_copt_csv(const std::filesystem::path& path, const Copt& copt) {
    write_csv(path, CsvTable{{"capacity", "probability"}, {copt.capacity, copt.probability}});
}

}  // namespace adequacy
