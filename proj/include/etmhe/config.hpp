#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "etmhe/simulation.hpp"

namespace etmhe {

/// Reads a simulation config.
///
/// Grammar: `[section]` headers ([model], [certificate], [mhe], [sim]) followed by
/// `key = value` lines; `#` starts a comment. Vectors are comma-separated, matrices
/// are semicolon-separated rows of comma-separated numbers, e.g.
/// `P = 4.539, 4.171; 4.171, 3.834`. `P` sets P1 = P2. Unknown or duplicate keys
/// and missing required keys are ConfigErrors carrying `source:line:`.
SimConfig parse_config(const std::filesystem::path& path);
SimConfig parse_config_text(std::string_view text, const std::string& source = "<config>");

Vector parse_vector(std::string_view text);
Matrix parse_matrix(std::string_view text);

/// %.17g, round-trips every double.
std::string format_double(double v);

/// trace.csv: t, x1..xn, xhat1..xhatn, y (y1..yp if p > 1), gamma, delta, eps, d,
/// err_norm, rges_bound, solver_iters, solver_converged, tx_count.
void write_trace_csv(std::ostream& os, const SimTrace& trace);
/// sweep.csv: alpha, seed, t, gamma, err_norm; one row per (alpha, seed, t >= 1).
void write_sweep_csv(std::ostream& os, const SweepReport& report);

}  // namespace etmhe
