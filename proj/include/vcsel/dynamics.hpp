#pragma once

#include <iosfwd>
#include <vector>

#include "vcsel/params.hpp"

namespace vcsel {

using Scaled = ScaledParams<double>;

/// Tangential Stokes drift: the component of `pull` orthogonal to P plus the
/// rotation `rotation x P`. Both parts are orthogonal to P for |P| = 1.
///
/// The gain-loss part moves P toward the pull vector, so a gain excess along
/// an axis attracts the polarization to that axis' positive pole.
inline Vector3d stokes_drift(const Vector3d& P, const Vector3d& pull, const Vector3d& rotation) {
  return pull - P.dot(pull) * P + rotation.cross(P);
}

/// Right-hand side of the rate equations for arbitrary anisotropy vectors.
/// Rates are in units of gamma. The returned LaserState holds time derivatives.
LaserState general_rhs(const LaserState& state, const Scaled& params);

/// Component form for g, l and Omega along e1. Throws AnisotropyNotAligned.
LaserState aligned_rhs(const LaserState& state, const Scaled& params);

/// Largest rate of the problem (units of gamma) near the given state; bounds
/// the admissible integration step.
double max_rate(const Scaled& params, const LaserState& state);

struct Trajectory {
  std::vector<double> t;  // units of 1/gamma
  std::vector<LaserState> states;
  double time_unit = 1.0;  // seconds per scaled time unit

  // |1 - |P|| removed by renormalization after each step.
  double max_norm_correction = 0.0;
  double total_norm_correction = 0.0;
  int halvings = 0;  // steps retried with a smaller dt to keep n >= 0
};

struct IntegrateOptions {
  int record_every = 1;
  bool use_aligned_rhs = false;
};

/// Fixed-step classical RK4 with P renormalized after every step.
/// Throws StepTooLarge when dt > 0.01 / max_rate, StateDiverged when D or n
/// exceeds 1e12 times its stationary scale.
Trajectory integrate(const LaserState& initial, const Scaled& params, double t_end, double dt,
                     const IntegrateOptions& options = {});

/// Stationary lasing state (D_s, n_s, 0, e1). Throws BelowThreshold.
LaserState find_stationary(const LaserParams& params);

/// max(|dD|/D, |dn|/n, |dd|/D, |dP|) of the aligned rhs; a fixed point gives
/// values at rounding level.
double stationary_residual(const LaserState& state, const Scaled& params);

/// CSV with columns t_seconds, t_scaled, D, n, d, P1, P2, P3.
void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory);

}  // namespace vcsel
