#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rgcn {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or throws a parse error naming it.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

/// Comma-separated with optional double-quoted fields; the first line is the
/// header. Blank lines are skipped.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text, const std::string& source = "<memory>");
std::string format_csv(const CsvTable& table);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);
double parse_double(const std::string& text, const std::string& context);

/// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace rgcn
