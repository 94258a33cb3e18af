#pragma once

// Small text helpers shared by the file-format readers and writers.

#include "advgraph/error.hpp"
#include "advgraph/matrix.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace advgraph::io {

[[noreturn]] inline void parse_failure(const std::filesystem::path& file, std::size_t lineno, const std::string& what) {
    fail(ErrorKind::parse, file.string() + ":" + std::to_string(lineno) + ": " + what);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

/// Splits on `sep`; for ' ' any run of blanks counts as one separator.
inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    if (sep == ' ') {
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
            const std::size_t start = i;
            while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
            if (i > start) out.push_back(line.substr(start, i - start));
        }
        return out;
    }
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline int parse_int(std::string_view text, const std::filesystem::path& file, std::size_t lineno) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        parse_failure(file, lineno, "not an integer: \"" + std::string(text) + "\"");
    return value;
}

inline double parse_double(std::string_view text, const std::filesystem::path& file, std::size_t lineno) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        parse_failure(file, lineno, "not a number: \"" + std::string(text) + "\"");
    return value;
}

/// Shortest decimal representation that round-trips.
inline std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::ifstream open_input(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(ErrorKind::parse, "cannot open " + file.string());
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) fail(ErrorKind::parse, "cannot write " + file.string());
    return out;
}

/// Calls `fn(line, lineno)` for each non-blank line with '#' comments stripped.
/// `on_comment` (optional) receives the text after '#'.
inline void for_each_line(const std::filesystem::path& file,
                          const std::function<void(std::string_view, std::size_t)>& fn,
                          const std::function<void(std::string_view, std::size_t)>& on_comment = {}) {
    std::ifstream in = open_input(file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos) {
            if (on_comment) on_comment(view.substr(hash + 1), lineno);
            view = view.substr(0, hash);
        }
        view = trim(view);
        if (!view.empty()) fn(view, lineno);
    }
}

inline Matrix read_csv_matrix(const std::filesystem::path& file) {
    Matrix m;
    io::for_each_line(file, [&](std::string_view line, std::size_t lineno) {
        const auto fields = split_fields(line, ',');
        if (m.rows == 0) m.cols = fields.size();
        if (fields.size() != m.cols)
            parse_failure(file, lineno, "expected " + std::to_string(m.cols) + " columns, found " +
                                            std::to_string(fields.size()));
        for (std::string_view f : fields) m.data.push_back(parse_double(f, file, lineno));
        ++m.rows;
    });
    return m;
}

inline void write_csv_matrix(const std::filesystem::path& file, const Matrix& m, const std::string& header = {}) {
    std::ofstream out = open_output(file);
    if (!header.empty()) out << header;
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

} // namespace advgraph::io
