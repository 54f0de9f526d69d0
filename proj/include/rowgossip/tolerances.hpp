#pragma once

namespace rowgossip {

/// Numerical tolerances shared by every module. The harness copies these
/// and lets a config file override individual fields.
struct Tolerances {
  double row_sum = 1e-12;          // |sum_j a_ij - 1|
  double perron_residual = 1e-12;  // ||pi^T A - pi^T||_inf
  double spectral_rel = 1e-10;     // relative residual of Gram power iteration
  double diag_floor = 1e-14;       // smallest diagonal estimate that may be inverted
  double bound_slack = 1e-9;       // relative slack for inequality verifiers
  double centroid_rel = 1e-10;     // centroid recursion probe
  double tracker_rel = 1e-8;       // tracker identity probe
};

inline constexpr Tolerances kDefaultTolerances{};

}  // namespace rowgossip
