#ifndef SPECGRID_CSV_HPP
#define SPECGRID_CSV_HPP

#include <string>
#include <vector>

namespace specgrid {

/// In-memory CSV table. First row of the file is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index for `name`; throws DataError if absent.
  std::size_t col(const std::string& name) const;
  /// Column index or npos if absent.
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t col_opt(const std::string& name) const;
};

/// RFC-4180-ish reader: double-quoted fields may contain commas, quotes
/// ("" escape) and newlines. Throws DataError on missing file.
CsvTable read_csv(const std::string& path);

/// One CSV line from fields, quoting only when needed.
std::string csv_line(const std::vector<std::string>& fields);

/// Fixed formatting for floats in output files: shortest round-trip via
/// %.17g is noisy, so files use %.12g everywhere. Deterministic.
std::string fmt_double(double v);

double parse_double(const std::string& s, const std::string& what);
long parse_long(const std::string& s, const std::string& what);

}  // namespace specgrid

#endif  // SPECGRID_CSV_HPP
