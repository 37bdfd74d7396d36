#include "opclab/io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace opclab {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  double value = 0.0;
  const auto res = std::from_chars(first, last, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != last)
    throw ContractViolation("not a number: '" + std::string(text) + "'");
  return value;
}

long long parse_int(std::string_view text) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  long long value = 0;
  const auto res = std::from_chars(first, last, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != last)
    throw ContractViolation("not an integer: '" + std::string(text) + "'");
  return value;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) throw ContractViolation("csv: unterminated quoted field");
  return fields;
}

namespace {

void header_block(std::ostream& out, const char* prefix, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) out << ',' << prefix << i;
}

void values_block(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << format_double(v(i));
}

void transition_tail(std::ostream& out, const Vector& s, const Vector& a, const Vector& next,
                     double reward, bool terminal) {
  values_block(out, s);
  values_block(out, a);
  values_block(out, next);
  out << ',' << format_double(reward) << ',' << (terminal ? 1 : 0) << '\n';
}

Eigen::Index count_prefix(const std::vector<std::string>& header, const std::string& prefix) {
  Eigen::Index n = 0;
  for (const auto& h : header)
    if (h == prefix + std::to_string(n)) ++n;
  return n;
}

}  // namespace

void write_replay_csv(std::ostream& out, const ReplayBuffer& buffer) {
  Eigen::Index n = 0, m = 0;
  if (!buffer.empty() && !buffer.trajectories().front().empty()) {
    n = buffer.trajectories().front().transitions.front().state.size();
    m = buffer.trajectories().front().transitions.front().action.size();
  }
  out << "iteration,b,t";
  header_block(out, "s", n);
  header_block(out, "a", m);
  header_block(out, "next_s", n);
  out << ",reward,terminal\n";
  for (const auto& traj : buffer.trajectories()) {
    for (const auto& tr : traj.transitions) {
      out << traj.iteration << ',' << traj.index << ',' << tr.t;
      transition_tail(out, tr.state, tr.action, tr.next_state, tr.reward, tr.terminal);
    }
  }
}

ReplayBuffer read_replay_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ContractViolation("replay csv: missing header");
  const auto header = csv_split(line);
  const Eigen::Index n = count_prefix(header, "s");
  const Eigen::Index m = count_prefix(header, "a");
  const std::size_t width = static_cast<std::size_t>(3 + 2 * n + m + 2);
  if (header.size() != width || header[0] != "iteration" || header[1] != "b" || header[2] != "t")
    throw ContractViolation("replay csv: unexpected header");

  ReplayBuffer buffer;
  Trajectory current;
  bool open = false;
  auto flush = [&] {
    if (open) buffer.add(std::move(current));
    current = Trajectory{};
    open = false;
  };
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = csv_split(line);
    if (f.size() != width)
      throw ContractViolation("replay csv: row " + std::to_string(row) + " has wrong width");
    const int iteration = static_cast<int>(parse_int(f[0]));
    const int b = static_cast<int>(parse_int(f[1]));
    Transition tr;
    tr.t = static_cast<int>(parse_int(f[2]));
    if (!open || iteration != current.iteration || b != current.index || tr.t == 0) {
      flush();
      current.iteration = iteration;
      current.index = b;
      open = true;
    }
    std::size_t k = 3;
    auto read_vec = [&](Eigen::Index len) {
      Vector v(len);
      for (Eigen::Index i = 0; i < len; ++i) v(i) = parse_double(f[k++]);
      return v;
    };
    tr.state = read_vec(n);
    tr.action = read_vec(m);
    tr.next_state = read_vec(n);
    tr.reward = parse_double(f[k++]);
    tr.terminal = parse_int(f[k]) != 0;
    current.transitions.push_back(std::move(tr));
  }
  flush();
  return buffer;
}

void write_sim_csv(std::ostream& out, const SimBuffer& sim) {
  Eigen::Index n = 0, m = 0;
  if (!sim.transitions.empty()) {
    n = sim.transitions.front().state.size();
    m = sim.transitions.front().action.size();
  }
  out << "branch,source_b,source_t,step,t";
  header_block(out, "s", n);
  header_block(out, "a", m);
  header_block(out, "next_s", n);
  out << ",reward,terminal\n";
  for (const auto& tr : sim.transitions) {
    out << tr.branch << ',' << tr.source_b << ',' << tr.source_t << ',' << tr.step << ','
        << tr.source_t + tr.step;
    transition_tail(out, tr.state, tr.action, tr.next_state, tr.reward, tr.terminal);
  }
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

}  // namespace opclab
