#pragma once

#include <string>
#include <vector>

namespace cnppo {

// Locale-independent shortest round-trip formatting (std::to_chars), so
// identical runs produce byte-identical files.
std::string format_double(double value);
std::string format_int(long long value);

double parse_double(const std::string& text);   // throws IoError on malformed input
long long parse_int(const std::string& text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> comments;  // leading lines starting with '#'

  int column(const std::string& name) const;  // -1 when absent
};

// Comma-separated, first non-comment line is the header. Fields contain no
// commas or quotes by construction in this project.
CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

std::string join_csv_row(const std::vector<std::string>& fields);

}  // namespace cnppo
