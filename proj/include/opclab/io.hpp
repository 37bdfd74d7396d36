#pragma once

#include "opclab/models.hpp"
#include "opclab/rollout.hpp"

#include <iosfwd>
#include <string>
#include <string_view>

namespace opclab {

/// 17 significant digits, which always round-trip. Locale independent.
std::string format_double(double value);

/// Strict locale-independent parse of a whole field. Throws ContractViolation.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

/// RFC-4180 quoting when the field contains a comma, quote or line break.
std::string csv_escape(std::string_view field);

/// Split one CSV record (no embedded line breaks).
std::vector<std::string> csv_split(std::string_view line);

/// Columns: iteration,b,t,s0..,a0..,next_s0..,reward,terminal.
void write_replay_csv(std::ostream& out, const ReplayBuffer& buffer);
ReplayBuffer read_replay_csv(std::istream& in);

/// ReplayBuffer schema without the iteration column, preceded by the
/// provenance columns branch,source_b,source_t,step.
void write_sim_csv(std::ostream& out, const SimBuffer& sim);

/// Plain numeric grid, one matrix row per line, no header.
void write_matrix_csv(std::ostream& out, const Matrix& m);

}  // namespace opclab
