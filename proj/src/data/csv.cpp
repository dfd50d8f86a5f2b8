#include "mlwb/data/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

namespace mlwb {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
        s.remove_suffix(1);
    }
    return s;
}

/// Reals (from_chars general format) and the booleans true/false.
bool parse_cell(std::string_view cell, double& out) {
    cell = trim(cell);
    if (cell == "true") {
        out = 1.0;
        return true;
    }
    if (cell == "false") {
        out = 0.0;
        return true;
    }
    if (!cell.empty() && cell.front() == '+') {
        cell.remove_prefix(1);
    }
    if (cell.empty()) {
        return false;
    }
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

std::size_t column_index(const CsvTable& t, const std::string& name) {
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i] == name) {
            return i;
        }
    }
    throw CsvError("column '" + name + "' is not in the header", 1, name);
}

std::string quote_if_needed(const std::string& s, char sep) {
    if (s.find_first_of(std::string{sep, '"', '\n', '\r'}) == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    }
    return out + "\"";
}

}  // namespace

CsvTable parse_csv_table(std::string_view text, char separator) {
    if (separator == '"' || separator == '\n' || separator == '\r') {
        throw ConfigError("separator cannot be a quote or line break");
    }
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    std::size_t line = 1;
    std::size_t i = 0;
    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        const bool blank = record.size() == 1 && trim(record[0]).empty() && !field_started;
        if (!blank) {
            records.push_back(std::move(record));
        }
        record.clear();
        field_started = false;
    };
    if (text.substr(0, 3) == "\xEF\xBB\xBF") {
        i = 3;
    }
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') {
                    ++line;
                }
                field += c;
            }
            continue;
        }
        if (c == '"' && trim(field).empty()) {
            field.clear();
            quoted = true;
            field_started = true;
        } else if (c == separator) {
            record.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            continue;
        } else if (c == '\n' || c == '\r') {
            end_record();
            ++line;
        } else {
            field += c;
        }
    }
    if (quoted) {
        throw CsvError("unterminated quoted field", line, "");
    }
    if (!field.empty() || !record.empty() || field_started) {
        end_record();
    }
    if (records.empty()) {
        throw CsvError("missing header row", 1, "");
    }
    CsvTable t;
    for (auto& h : records[0]) {
        t.header.emplace_back(trim(h));
    }
    std::set<std::string> seen;
    for (const auto& h : t.header) {
        if (!seen.insert(h).second) {
            throw CsvError("duplicate column '" + h + "'", 1, h);
        }
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size()) {
            throw CsvError("row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                               " fields, the header has " + std::to_string(t.header.size()),
                           r + 1, "");
        }
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

Dataset parse_csv(std::string_view text, const CsvImportConfig& config) {
    if (config.input_columns.empty() || config.target_columns.empty()) {
        throw ConfigError("choose at least one input column and one target column");
    }
    std::set<std::string> inputs(config.input_columns.begin(), config.input_columns.end());
    for (const auto& t : config.target_columns) {
        if (inputs.count(t) != 0) {
            throw ConfigError("column '" + t + "' cannot be both input and target");
        }
    }
    for (const auto& [column, divisor] : config.divisors) {
        if (divisor == 0.0 || !std::isfinite(divisor)) {
            throw ConfigError("divisor for column '" + column + "' must be a finite non-zero number");
        }
    }

    const CsvTable table = parse_csv_table(text, config.separator);
    for (const auto& [column, divisor] : config.divisors) {
        column_index(table, column);
    }
    if (table.rows.empty()) {
        throw CsvError("no data rows after the header", 2, "");
    }
    auto extract = [&](const std::vector<std::string>& columns) {
        std::vector<std::size_t> idx;
        std::vector<double> div;
        for (const auto& c : columns) {
            idx.push_back(column_index(table, c));
            const auto it = config.divisors.find(c);
            div.push_back(it == config.divisors.end() ? 1.0 : it->second);
        }
        std::vector<float> values;
        values.reserve(table.rows.size() * idx.size());
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            for (std::size_t k = 0; k < idx.size(); ++k) {
                double v = 0.0;
                const std::string& cell = table.rows[r][idx[k]];
                if (!parse_cell(cell, v)) {
                    throw CsvError("cell '" + cell + "' is not a number", r + 2, columns[k]);
                }
                values.push_back(static_cast<float>(v / div[k]));
            }
        }
        return Tensor({table.rows.size(), idx.size()}, std::move(values));
    };
    Dataset d = make_dataset(extract(config.input_columns), extract(config.target_columns), DataSource::csv);
    d.input_columns = config.input_columns;
    d.target_columns = config.target_columns;
    return d;
}

std::string serialize_csv(const Dataset& d, char separator) {
    const std::size_t n = d.size();
    const std::size_t nx = d.x.size() / n;
    const std::size_t ny = d.y.size() / n;
    auto names = [](const std::vector<std::string>& given, std::size_t count, const char* prefix) {
        if (given.size() == count) {
            return given;
        }
        std::vector<std::string> out;
        for (std::size_t i = 0; i < count; ++i) {
            out.push_back(prefix + std::to_string(i));
        }
        return out;
    };
    std::vector<std::string> header = names(d.input_columns, nx, "x");
    const auto targets = names(d.target_columns, ny, "y");
    header.insert(header.end(), targets.begin(), targets.end());

    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        out += (i ? std::string(1, separator) : "") + quote_if_needed(header[i], separator);
    }
    out += "\n";
    char buf[32];
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < nx + ny; ++k) {
            const float v = k < nx ? d.x[r * nx + k] : d.y[r * ny + (k - nx)];
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
            out += (k ? std::string(1, separator) : "") + buf;
        }
        out += "\n";
    }
    return out;
}

}  // namespace mlwb
