#include "opclab/config.hpp"

#include "opclab/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace opclab {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_name(section)) throw ConfigError(where, "invalid section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_name(key)) throw ConfigError(where, "invalid key '" + key + "'");
    if (section.empty()) throw ConfigError(where, "key '" + key + "' outside any section");
    const std::string full = section + "." + key;
    if (cfg.entries_.count(full)) throw ConfigError(full, "duplicate key");
    if (value.empty()) throw ConfigError(full, "empty value");
    cfg.entries_[full] = value;
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool ExperimentConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  if (dot == std::string::npos || !valid_name(key.substr(0, dot)) ||
      !valid_name(key.substr(dot + 1)))
    throw ConfigError(key, "keys must have the form section.key");
  if (trim(value).empty()) throw ConfigError(key, "empty value");
  entries_[key] = trim(value);
}

std::string ExperimentConfig::get_string(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(key, "missing required key");
  return it->second;
}

std::string ExperimentConfig::get_string(const std::string& key,
                                         const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double ExperimentConfig::get_double(const std::string& key) const {
  const std::string value = get_string(key);
  double x;
  try {
    x = parse_double(value);
  } catch (const ContractViolation&) {
    throw ConfigError(key, "expected a number, got '" + value + "'");
  }
  if (!std::isfinite(x)) throw ConfigError(key, "value must be finite");
  return x;
}

double ExperimentConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long ExperimentConfig::get_int(const std::string& key) const {
  const std::string value = get_string(key);
  try {
    return parse_int(value);
  } catch (const ContractViolation&) {
    throw ConfigError(key, "expected an integer, got '" + value + "'");
  }
}

long long ExperimentConfig::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool ExperimentConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected a boolean, got '" + v + "'");
}

std::vector<double> ExperimentConfig::get_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key))) {
    try {
      out.push_back(parse_double(item));
    } catch (const ContractViolation&) {
      throw ConfigError(key, "expected a number list, bad entry '" + item + "'");
    }
    if (!std::isfinite(out.back())) throw ConfigError(key, "list entries must be finite");
  }
  if (out.empty()) throw ConfigError(key, "list must not be empty");
  return out;
}

std::vector<double> ExperimentConfig::get_list(const std::string& key,
                                               std::vector<double> fallback) const {
  return has(key) ? get_list(key) : fallback;
}

std::vector<std::string> ExperimentConfig::get_string_list(const std::string& key) const {
  auto out = split_list(get_string(key));
  for (const auto& item : out)
    if (item.empty()) throw ConfigError(key, "empty list entry");
  return out;
}

Matrix ExperimentConfig::get_matrix(const std::string& key, Eigen::Index rows,
                                    Eigen::Index cols) const {
  const auto values = get_list(key);
  if (static_cast<Eigen::Index>(values.size()) != rows * cols)
    throw ConfigError(key, "expected " + std::to_string(rows * cols) + " entries for a " +
                               std::to_string(rows) + "x" + std::to_string(cols) +
                               " matrix, got " + std::to_string(values.size()));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return m;
}

Matrix ExperimentConfig::get_matrix(const std::string& key, Eigen::Index rows, Eigen::Index cols,
                                    const Matrix& fallback) const {
  return has(key) ? get_matrix(key, rows, cols) : fallback;
}

std::uint64_t ExperimentConfig::seed() const {
  const long long s = get_int("experiment.seed");
  if (s < 0) throw ConfigError("experiment.seed", "must be nonnegative");
  return static_cast<std::uint64_t>(s);
}

void ExperimentConfig::require_known(const std::set<std::string>& allowed) const {
  for (const auto& [key, value] : entries_)
    if (!allowed.count(key)) throw ConfigError(key, "unknown key");
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [key, value] : entries_) out += key + "=" + value + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

}  // namespace opclab
