#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace herdscope::csv {

struct Row {
  int line = 0;  // 1-based line number in the source file
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Column index by name, or -1.
  int column(const std::string& name) const;
};

// Plain comma-separated text: no quoting, CR/LF tolerant, blank lines skipped,
// fields whitespace-trimmed. The first non-blank line is the header.
Table parse(const std::string& text);
Table read_file(const std::filesystem::path& path);

// Header must contain at least these columns (any order).
void require_columns(const Table& t, const std::vector<std::string>& names,
                     const std::string& source);

double to_double(const Row& row, int col, const std::string& source);
long long to_int(const Row& row, int col, const std::string& source);

std::string format_double(double v);

}  // namespace herdscope::csv
