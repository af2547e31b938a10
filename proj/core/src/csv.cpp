#include "cnppo/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "cnppo/errors.hpp"

namespace cnppo {

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_int(long long value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw IoError("cannot parse '" + text + "' as a number");
  return value;
}

long long parse_int(const std::string& text) {
  long long value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw IoError("cannot parse '" + text + "' as an integer");
  return value;
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (!have_header) table.comments.push_back(line);
      continue;
    }
    if (!have_header) {
      table.header = split_fields(line);
      have_header = true;
    } else {
      std::vector<std::string> row = split_fields(line);
      if (row.size() != table.header.size())
        throw IoError(path + ": row has " + std::to_string(row.size()) +
                      " fields, header has " + std::to_string(table.header.size()));
      table.rows.push_back(std::move(row));
    }
  }
  if (!have_header) throw IoError(path + ": no header row");
  return table;
}

std::string join_csv_row(const std::vector<std::string>& fields) {
  std::ostringstream out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << fields[i];
  }
  return out.str();
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const std::string& c : table.comments) out << c << "\n";
  out << join_csv_row(table.header) << "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size())
      throw IoError(path + ": row width does not match header");
    out << join_csv_row(row) << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace cnppo
