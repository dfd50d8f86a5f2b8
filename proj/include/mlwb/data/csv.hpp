#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mlwb/data/dataset.hpp"

namespace mlwb {

/// Malformed CSV content; row is 1-based counting the header as row 1.
class CsvError : public ParseError {
public:
    CsvError(const std::string& message, std::size_t row, std::string column)
        : ParseError(message, 0, "row " + std::to_string(row) + (column.empty() ? "" : ", column " + column)),
          row_(row),
          column_(std::move(column)) {}

    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Splits text into records. Fields may be double-quoted ("" escapes a quote);
/// CRLF and LF line ends are accepted and blank trailing lines ignored.
CsvTable parse_csv_table(std::string_view text, char separator = ',');

struct CsvImportConfig {
    char separator = ',';
    std::vector<std::string> input_columns;
    std::vector<std::string> target_columns;
    /// Column -> divisor applied to every cell of that column (default 1).
    std::map<std::string, double> divisors;
};

/// Cells are reals or true/false (1/0), divided by their column's divisor.
Dataset parse_csv(std::string_view text, const CsvImportConfig& config);

/// Header of input then target columns; values printed with 9 significant
/// digits, so float32 data round-trips exactly through parse_csv.
std::string serialize_csv(const Dataset& d, char separator = ',');

}  // namespace mlwb
