#include "herdscope/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "herdscope/error.hpp"

namespace herdscope::csv {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string where(const std::string& source, const Row& row) {
  return source + " line " + std::to_string(row.line);
}

}  // namespace

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

Table parse(const std::string& text) {
  Table t;
  std::string_view rest(text);
  // Strip a UTF-8 byte order mark.
  if (rest.size() >= 3 && rest.substr(0, 3) == "\xEF\xBB\xBF") rest.remove_prefix(3);
  int line_no = 0;
  bool have_header = false;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    if (!have_header) {
      t.header = split(line);
      have_header = true;
      continue;
    }
    t.rows.push_back({line_no, split(line)});
  }
  return t;
}

Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Table t = parse(ss.str());
  require(!t.header.empty(), ErrorCode::kData, path.string() + ": missing CSV header");
  return t;
}

void require_columns(const Table& t, const std::vector<std::string>& names,
                     const std::string& source) {
  for (const auto& n : names)
    require(t.column(n) >= 0, ErrorCode::kData,
            source + ": missing required column '" + n + "'");
}

double to_double(const Row& row, int col, const std::string& source) {
  require(col >= 0 && col < static_cast<int>(row.fields.size()), ErrorCode::kData,
          where(source, row) + ": too few fields");
  const std::string& s = row.fields[col];
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v),
          ErrorCode::kData, where(source, row) + ": malformed number '" + s + "'");
  return v;
}

long long to_int(const Row& row, int col, const std::string& source) {
  require(col >= 0 && col < static_cast<int>(row.fields.size()), ErrorCode::kData,
          where(source, row) + ": too few fields");
  const std::string& s = row.fields[col];
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size(), ErrorCode::kData,
          where(source, row) + ": malformed integer '" + s + "'");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace herdscope::csv
