#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "robustrisk/error.hpp"

namespace robustrisk::report {

/// Shortest text that round-trips the double exactly.
inline std::string format_double(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v)
            break;
    }
    return buf;
}

/// RFC 4180 field quoting.
inline std::string quote_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos)
        return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// Accumulates a headerful CSV table in memory. An optional first line
/// starting with '#' carries run metadata (timestamps) and is not data.
class CsvTable {
  public:
    explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    const std::vector<std::string>& columns() const { return columns_; }

    class Row {
      public:
        Row& operator<<(double v) { return add(format_double(v)); }
        Row& operator<<(std::size_t v) { return add(std::to_string(v)); }
        Row& operator<<(int v) { return add(std::to_string(v)); }
        Row& operator<<(long long v) { return add(std::to_string(v)); }
        Row& operator<<(bool v) { return add(v ? "true" : "false"); }
        Row& operator<<(std::string_view v) { return add(quote_field(v)); }
        Row& operator<<(const char* v) { return add(quote_field(v)); }

      private:
        friend class CsvTable;
        Row& add(std::string s) {
            fields_.push_back(std::move(s));
            return *this;
        }
        std::vector<std::string> fields_;
    };

    void add(const Row& r) {
        if (r.fields_.size() != columns_.size())
            throw ArgumentError("CsvTable: row has " + std::to_string(r.fields_.size()) +
                                " fields, expected " + std::to_string(columns_.size()));
        rows_.push_back(r.fields_);
    }

    std::size_t size() const { return rows_.size(); }

    std::string str(std::string_view comment = {}) const {
        std::ostringstream os;
        if (!comment.empty())
            os << "# " << comment << "\n";
        write_line(os, columns_);
        for (const auto& r : rows_)
            write_line(os, r);
        return os.str();
    }

  private:
    static void write_line(std::ostream& os, const std::vector<std::string>& f) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (i)
                os << ',';
            os << f[i];
        }
        os << "\n";
    }

    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

/// Writes `content` to `path` via a temporary file in the same directory and
/// a rename, so readers never observe a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw Error("cannot open " + tmp.string() + " for writing");
        os << content;
        os.flush();
        if (!os)
            throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

/// Parses CSV text produced by CsvTable (comment lines skipped). Quoted
/// fields are supported.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> out;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, at_line_start = true, comment = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (at_line_start) {
            at_line_start = false;
            comment = c == '#';
        }
        if (comment) {
            if (c == '\n') {
                comment = false;
                at_line_start = true;
            }
            continue;
        }
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            out.push_back(std::move(row));
            row.clear();
            at_line_start = true;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (!field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        out.push_back(std::move(row));
    }
    return out;
}

} // namespace robustrisk::report
