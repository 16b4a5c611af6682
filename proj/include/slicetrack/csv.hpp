#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace slicetrack::csv {

using Row = std::vector<std::string>;

/// Splits one line on `delim`, honouring double-quoted fields.
Row split_line(std::string_view line, char delim = ',');

struct Table {
  Row header;
  std::vector<Row> rows;

  /// Column index by name; throws SchemaError when absent.
  [[nodiscard]] std::size_t column(std::string_view name) const;
  [[nodiscard]] bool has_column(std::string_view name) const;
};

/// Reads a delimited file.  The delimiter is sniffed from the header line
/// (',', ';' or tab) unless given.
Table read_table(const std::filesystem::path& path, char delim = '\0');

/// Quotes a field when it contains the delimiter, quotes or newlines.
std::string escape(std::string_view field, char delim = ',');

}  // namespace slicetrack::csv
