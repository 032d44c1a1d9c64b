#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace reloop::io {

// A parsed CSV file: a header row plus data rows of the same width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row

  std::optional<std::size_t> column(const std::string& name) const;
};

// RFC 4180 dialect: comma separated, optional double quotes with "" as the
// escape, LF or CRLF line ends. Blank lines are skipped. Throws ParseError
// with line and column on malformed quoting or a row of the wrong width.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

// Quotes a field when it contains a comma, quote or line break.
std::string csv_field(const std::string& value);

// Cells that count as missing: empty, "NA", "NaN" (after trimming spaces).
bool is_missing_cell(const std::string& cell);

// Strict number parsing; throws ParseError naming the column on failure.
double parse_number(const std::string& cell, std::size_t line, std::size_t column,
                    const std::string& column_name);

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace reloop::io
