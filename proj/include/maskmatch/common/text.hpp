#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace maskmatch {

// One parsed row of a comma-separated file, tagged with its 1-based line number.
struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

// A comma-separated document: '#'-prefixed preamble lines, a header row and
// data rows. Fields follow RFC 4180 quoting; blank lines are skipped.
struct CsvDocument {
    std::vector<std::string> preamble;  // comment text without the leading '#'
    CsvRow header;
    std::vector<CsvRow> rows;
    bool has_header = false;
};

// Throws LineError on malformed quoting.
CsvDocument parse_csv(std::string_view text);
CsvDocument read_csv_file(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);
std::string csv_join(const std::vector<std::string>& fields);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Shortest representation that parses back to the identical double.
std::string format_double(double value);
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// "k1=v1 k2=v2" records; values must not contain whitespace.
std::map<std::string, std::string> parse_key_values(std::string_view line);

}  // namespace maskmatch
