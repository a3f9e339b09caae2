#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "subag/error.hpp"
#include "subag/format.hpp"
#include "subag/version.hpp"

namespace subag {

using TableCell = std::variant<std::string, std::int64_t, double>;

/// Column-named rows destined for CSV.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<TableCell>> rows;

  void add(std::vector<TableCell> row) {
    require(row.size() == columns.size(), "row width does not match the table header");
    rows.push_back(std::move(row));
  }

  [[nodiscard]] std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw Error("no column named '" + name + "'");
  }
};

inline std::string format_cell(const TableCell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
  return format_number(std::get<double>(cell));
}

/// `# subag-lab v<version> seed=<seed>` header line.
inline std::string output_header(std::uint64_t seed) {
  return std::string("# subag-lab v") + std::string(version) + " seed=" + std::to_string(seed) + "\n";
}

/// Header comment, column names, then one line per row. `\n` line endings, no quoting.
inline std::string to_csv(const Table& table, std::uint64_t seed, const std::string& note = {}) {
  std::string out = output_header(seed);
  if (!note.empty()) out += "# " + note + "\n";
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out += ',';
    out += table.columns[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_cell(row[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace subag
