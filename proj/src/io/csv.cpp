#include "reloop/io/csv.hpp"

#include <array>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "reloop/errors.hpp"

namespace reloop::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return j;
  }
  return std::nullopt;
}

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  std::size_t line = 1, col = 1;
  std::size_t record_line = 1;
  bool in_quotes = false;
  bool field_quoted = false;
  bool after_quote = false;
  bool record_empty = true;

  auto end_field = [&] {
    record.push_back(field_quoted ? field : trim(field));
    field.clear();
    field_quoted = false;
    after_quote = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record_empty && record.size() == 1 && record[0].empty();
    if (!blank) {
      if (table.header.empty()) {
        table.header = std::move(record);
      } else {
        if (record.size() != table.header.size()) {
          throw ParseError("expected " + std::to_string(table.header.size()) +
                               " fields, found " + std::to_string(record.size()),
                           record_line, std::min(record.size(), table.header.size()) + 1);
        }
        table.rows.push_back(std::move(record));
        table.lines.push_back(record_line);
      }
    }
    record.clear();
    record_empty = true;
  };

  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get();
          field.push_back('"');
          ++col;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        field.push_back(c);
        if (c == '\n') {
          ++line;
          col = 0;
        }
      }
      ++col;
      continue;
    }
    if (c == '\r' && in.peek() == '\n') continue;
    if (c == '\n') {
      end_record();
      ++line;
      col = 1;
      record_line = line;
      continue;
    }
    if (c == ',') {
      end_field();
      record_empty = false;
    } else if (c == '"') {
      if (after_quote || !trim(field).empty()) {
        throw ParseError("unexpected quote inside a field", line, col);
      }
      field.clear();
      in_quotes = true;
      field_quoted = true;
      record_empty = false;
    } else {
      if (after_quote && c != ' ' && c != '\t') {
        throw ParseError("characters after a closing quote", line, col);
      }
      if (!after_quote) field.push_back(c);
      if (c != ' ' && c != '\t') record_empty = false;
    }
    ++col;
  }
  if (in_quotes) throw ParseError("unterminated quoted field", line, col);
  if (!record_empty || !field.empty() || !record.empty()) end_record();
  if (table.header.empty()) throw ParseError("missing header row", 1, 1);
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  try {
    return parse_csv(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line(), e.column());
  }
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

bool is_missing_cell(const std::string& cell) {
  const std::string t = trim(cell);
  return t.empty() || t == "NA" || t == "NaN";
}

double parse_number(const std::string& cell, std::size_t line, std::size_t column,
                    const std::string& column_name) {
  const std::string t = trim(cell);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v)) {
    throw ParseError("column '" + column_name + "': not a finite number: '" + cell + "'", line,
                     column);
  }
  return v;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace reloop::io
