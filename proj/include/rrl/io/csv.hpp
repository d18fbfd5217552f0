#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rrl::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position by name; throws ContractError when absent.
  std::size_t column(const std::string& name) const;
};

// Reads a comma-separated file whose first line is a header. Throws IoError
// when the file cannot be opened and ContractError on ragged rows.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

double parse_double(const std::string& text);
long long parse_int(const std::string& text);
std::vector<std::string> split(const std::string& text, char separator);
std::string trim(const std::string& text);
// Shortest text that parses back to the same double.
std::string format_double(double value);

// Writes `contents` to a temporary sibling then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace rrl::io
