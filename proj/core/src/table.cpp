#include "misc/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace misc {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = line.find(',');
    out.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

std::vector<std::string> split_names(std::string_view list) {
  std::vector<std::string> out;
  if (trim(list).empty()) return out;
  for (auto name : split_line(list)) out.emplace_back(name);
  return out;
}

std::size_t NumericTable::column(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) {
    std::string have;
    for (const auto& c : columns) have += (have.empty() ? "" : ", ") + c;
    throw TableError("no column named '" + std::string(name) + "' (have: " + have + ")");
  }
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<Vec> NumericTable::select(const std::vector<std::string>& names) const {
  if (names.empty()) throw TableError("no columns selected");
  std::vector<std::size_t> idx;
  for (const auto& n : names) idx.push_back(column(n));
  std::vector<Vec> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    Vec v(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) v(static_cast<Eigen::Index>(k)) = row[idx[k]];
    out.push_back(std::move(v));
  }
  return out;
}

NumericTable parse_csv_table(std::string_view text) {
  NumericTable t;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (header) {
      std::set<std::string_view> seen;
      for (auto c : cells) {
        if (c.empty()) throw TableError("line 1: empty column name");
        if (!seen.insert(c).second) throw TableError("line 1: duplicate column '" + std::string(c) + "'");
        t.columns.emplace_back(c);
      }
      header = false;
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw TableError("line " + std::to_string(line_no) + ": expected " + std::to_string(t.columns.size()) +
                       " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto c : cells) {
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (c.empty() || res.ec != std::errc{} || res.ptr != c.data() + c.size() || !std::isfinite(v)) {
        throw TableError("line " + std::to_string(line_no) + ": '" + std::string(c) + "' is not a finite number");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (header) throw TableError("empty CSV (no header row)");
  return t;
}

NumericTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TableError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv_table(ss.str());
}

}  // namespace misc
