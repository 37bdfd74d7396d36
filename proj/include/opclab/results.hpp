#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace opclab {

/// Empty cells mark excluded grid points (e.g. unstable closed loops).
using Cell = std::variant<std::monostate, double, std::string>;

/// Rectangular CSV table with a unique header and a provenance footer.
class ResultTable {
 public:
  explicit ResultTable(std::vector<std::string> columns);

  void add_row(std::vector<Cell> row);
  void set_provenance(std::string config_hash, std::uint64_t seed);

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const { return rows_; }
  std::size_t column(const std::string& name) const;
  /// Numeric value at (row, column name); throws on empty or string cells.
  double number(std::size_t row, const std::string& name) const;

  /// Header, rows, then "# config_hash=<hex>" and "# seed=<n>".
  void write_csv(std::ostream& out) const;
  std::string to_csv() const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
  std::string config_hash_;
  std::uint64_t seed_ = 0;
  bool has_provenance_ = false;
};

/// Write to a sibling temporary file and rename over `path`, so a failed
/// run never leaves a partial file behind.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace opclab
