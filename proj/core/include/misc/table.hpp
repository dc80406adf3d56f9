#pragma once

// Numeric CSV tables: comma separated, '.' decimal point, one header row,
// LF or CRLF line endings.

#include "misc/ndmath.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace misc {

class TableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NumericTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  /// Index of a column; throws TableError listing the available names.
  std::size_t column(std::string_view name) const;
  /// One vector per row holding the named columns in the given order.
  std::vector<Vec> select(const std::vector<std::string>& names) const;
};

/// Throws TableError on ragged rows, empty input, duplicate column names or
/// cells that are not finite numbers.
NumericTable parse_csv_table(std::string_view text);
NumericTable read_csv_table(const std::filesystem::path& path);

/// Splits "a,b,c" into names, trimming blanks.
std::vector<std::string> split_names(std::string_view list);

}  // namespace misc
