#pragma once

// Run records and their CSV / JSON forms.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rowgossip/errors.hpp"
#include "rowgossip/optim.hpp"

namespace rowgossip::harness {

using Json = nlohmann::ordered_json;

struct RunRecord {
  std::string label;
  std::size_t nodes = 0;
  std::size_t rounds = 1;  // R
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::vector<StepReport> rows;  // ascending comm_rounds
  double wall_seconds = 0.0;
  double max_centroid_error = 0.0;
  double max_tracker_error = 0.0;
  double min_diag = 1.0;
  std::optional<std::string> error;  // set when the run aborted
  ExitCode error_code = ExitCode::kSuccess;

  /// Final centroid objective; +inf for aborted runs so they always lose.
  double final_objective() const {
    if (error || rows.empty()) return std::numeric_limits<double>::infinity();
    return rows.back().objective;
  }
  double final_grad_norm() const {
    if (error || rows.empty()) return std::numeric_limits<double>::infinity();
    return rows.back().grad_norm;
  }
};

inline constexpr const char* kRunCsvHeader = "comm_rounds,samples,grad_norm,consensus_err,descent_dev,objective";

inline void write_run_csv(std::ostream& os, const std::vector<StepReport>& rows) {
  os << kRunCsvHeader << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.comm_rounds << ',' << r.samples << ',' << r.grad_norm << ',' << r.consensus_error << ','
       << r.descent_deviation << ',' << r.objective << '\n';
  }
}

inline void write_run_csv(const std::string& path, const std::vector<StepReport>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write_run_csv(out, rows);
}

/// NaN and inf are not JSON numbers; they are emitted as null.
inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json summary_json(const RunRecord& r) {
  Json j;
  j["label"] = r.label;
  j["nodes"] = r.nodes;
  j["R"] = r.rounds;
  j["alpha"] = r.alpha;
  j["seed"] = r.seed;
  j["rows"] = r.rows.size();
  j["iterations"] = r.rows.empty() ? 0 : r.rows.back().iter;
  j["comm_rounds"] = r.rows.empty() ? 0 : r.rows.back().comm_rounds;
  j["final_grad_norm"] = json_number(r.final_grad_norm());
  j["final_objective"] = json_number(r.final_objective());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& row : r.rows)
    if (std::isfinite(row.grad_norm)) best = std::min(best, row.grad_norm);
  j["best_grad_norm"] = json_number(best);
  j["max_centroid_error"] = r.max_centroid_error;
  j["max_tracker_error"] = r.max_tracker_error;
  j["min_diag"] = r.min_diag;
  j["wall_seconds"] = r.wall_seconds;
  if (r.error) {
    j["error"] = *r.error;
    j["exit_code"] = static_cast<int>(r.error_code);
  }
  return j;
}

/// Mean of grad_norm over the last 10% of rows (at least one row).
inline double plateau(const std::vector<StepReport>& rows) {
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t window = std::max<std::size_t>(1, rows.size() / 10);
  double sum = 0.0;
  for (std::size_t k = rows.size() - window; k < rows.size(); ++k) sum += rows[k].grad_norm;
  return sum / static_cast<double>(window);
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace rowgossip::harness
