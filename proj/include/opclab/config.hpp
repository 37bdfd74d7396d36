#pragma once

#include "opclab/linalg.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace opclab {

/// Flat key-value experiment description:
///
///   # comment
///   [section]
///   key = value
///   list = 1, 2, 3
///
/// Keys are addressed as "section.key". Matrices are given row-major as a
/// flat list plus the expected shape. All lookup failures raise ConfigError
/// naming the key.
class ExperimentConfig {
 public:
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key) const;
  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const;
  std::vector<std::string> get_string_list(const std::string& key) const;
  Matrix get_matrix(const std::string& key, Eigen::Index rows, Eigen::Index cols) const;
  Matrix get_matrix(const std::string& key, Eigen::Index rows, Eigen::Index cols,
                    const Matrix& fallback) const;

  /// Required, nonnegative.
  std::uint64_t seed() const;

  /// Raise ConfigError for any key not in `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  /// Sorted "section.key=value" lines.
  std::string canonical() const;
  /// FNV-1a 64 of canonical(), as 16 hex digits.
  std::string hash() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace opclab
