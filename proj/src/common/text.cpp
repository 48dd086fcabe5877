#include "maskmatch/common/text.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "maskmatch/common/error.hpp"

namespace maskmatch {

namespace {

bool is_blank(std::string_view s) {
    return s.find_first_not_of(" \t\r") == std::string_view::npos;
}

}  // namespace

CsvDocument parse_csv(std::string_view text) {
    CsvDocument doc;
    std::size_t line = 1;
    std::size_t pos = 0;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") {
        pos = 3;
    }

    while (pos < text.size()) {
        const std::size_t row_line = line;
        // Preamble comments are only recognised before the header.
        if (!doc.has_header && text[pos] == '#') {
            std::size_t end = text.find('\n', pos);
            if (end == std::string_view::npos) {
                end = text.size();
            }
            std::string_view comment = text.substr(pos + 1, end - pos - 1);
            if (!comment.empty() && comment.back() == '\r') {
                comment.remove_suffix(1);
            }
            doc.preamble.emplace_back(trim(comment));
            pos = end + 1;
            ++line;
            continue;
        }

        CsvRow row;
        row.line = row_line;
        std::string field;
        bool quoted = false;
        bool field_was_quoted = false;
        bool row_done = false;
        while (pos < text.size() && !row_done) {
            const char c = text[pos];
            if (quoted) {
                if (c == '"') {
                    if (pos + 1 < text.size() && text[pos + 1] == '"') {
                        field.push_back('"');
                        ++pos;
                    } else {
                        quoted = false;
                    }
                } else {
                    if (c == '\n') {
                        ++line;
                    }
                    field.push_back(c);
                }
                ++pos;
                continue;
            }
            switch (c) {
                case '"':
                    if (!field.empty()) {
                        throw LineError("unexpected quote inside unquoted field", row_line);
                    }
                    quoted = true;
                    field_was_quoted = true;
                    break;
                case ',':
                    row.fields.push_back(std::move(field));
                    field.clear();
                    field_was_quoted = false;
                    break;
                case '\r':
                    break;
                case '\n':
                    row_done = true;
                    ++line;
                    break;
                default:
                    if (field_was_quoted) {
                        throw LineError("text after closing quote", row_line);
                    }
                    field.push_back(c);
            }
            ++pos;
        }
        if (quoted) {
            throw LineError("unterminated quoted field", row_line);
        }
        row.fields.push_back(std::move(field));
        if (row.fields.size() == 1 && is_blank(row.fields[0])) {
            continue;
        }
        if (!doc.has_header) {
            doc.header = std::move(row);
            doc.has_header = true;
        } else {
            doc.rows.push_back(std::move(row));
        }
    }
    return doc;
}

CsvDocument read_csv_file(const std::filesystem::path& path) {
    return parse_csv(read_text_file(path));
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string csv_join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out.push_back(',');
        }
        out += csv_escape(fields[i]);
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto p = s.find(sep, start);
        if (p == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            return out;
        }
        out.emplace_back(s.substr(start, p - start));
        start = p + 1;
    }
}

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

std::optional<long long> parse_int(std::string_view s) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

std::map<std::string, std::string> parse_key_values(std::string_view line) {
    std::map<std::string, std::string> out;
    std::istringstream ss{std::string(line)};
    std::string token;
    while (ss >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw DataError("malformed key=value token '" + token + "'");
        }
        out[token.substr(0, eq)] = token.substr(eq + 1);
    }
    return out;
}

}  // namespace maskmatch
