#include "opclab/results.hpp"

#include "opclab/errors.hpp"
#include "opclab/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace opclab {

ResultTable::ResultTable(std::vector<std::string> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) throw ContractViolation("ResultTable: no columns");
  std::set<std::string> seen;
  for (const auto& c : columns_)
    if (c.empty() || !seen.insert(c).second)
      throw ContractViolation("ResultTable: empty or duplicate column '" + c + "'");
}

void ResultTable::add_row(std::vector<Cell> row) {
  if (row.size() != columns_.size())
    throw ContractViolation("ResultTable: row has " + std::to_string(row.size()) +
                            " cells, expected " + std::to_string(columns_.size()));
  rows_.push_back(std::move(row));
}

void ResultTable::set_provenance(std::string config_hash, std::uint64_t seed) {
  config_hash_ = std::move(config_hash);
  seed_ = seed;
  has_provenance_ = true;
}

std::size_t ResultTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i] == name) return i;
  throw ContractViolation("ResultTable: no column '" + name + "'");
}

double ResultTable::number(std::size_t row, const std::string& name) const {
  const Cell& cell = rows_.at(row).at(column(name));
  if (const auto* x = std::get_if<double>(&cell)) return *x;
  throw ContractViolation("ResultTable: cell (" + std::to_string(row) + ", " + name +
                          ") is not numeric");
}

void ResultTable::write_csv(std::ostream& out) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << csv_escape(columns_[i]);
  out << '\n';
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      if (const auto* x = std::get_if<double>(&row[i]))
        out << format_double(*x);
      else if (const auto* s = std::get_if<std::string>(&row[i]))
        out << csv_escape(*s);
    }
    out << '\n';
  }
  if (has_provenance_) out << "# config_hash=" << config_hash_ << "\n# seed=" << seed_ << '\n';
}

std::string ResultTable::to_csv() const {
  std::ostringstream out;
  write_csv(out);
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename onto '" + path + "': " + ec.message());
  }
}

}  // namespace opclab
