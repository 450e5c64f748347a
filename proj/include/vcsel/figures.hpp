#pragma once

// Plot data for the Stokes-sphere vector fields, the stationary (P2, P3)
// distribution and the polarization correlators.

#include <string>
#include <vector>

#include "vcsel/correlation.hpp"
#include "vcsel/params.hpp"

namespace vcsel {

enum class FieldCase { rotation, gain_loss };
const char* to_string(FieldCase c);

struct FieldSample {
  Vector3d P;
  Vector3d dP;  // units of gamma
};

/// dP/dt on a latitude/longitude grid of the sphere (poles along e1) at the
/// stationary carrier and photon numbers with d = 0. `rotation` keeps only
/// Omega, `gain_loss` only g and l. A missing anisotropy is replaced by a
/// unit-strength one along e1 so the field shape is still visible.
std::vector<FieldSample> vector_field(const LaserParams& params, FieldCase which, int rings,
                                      int per_ring);

struct PolarizationSpread {
  double var_p2 = 0.0;
  double cov_p2p3 = 0.0;
  double var_p3 = 0.0;
  /// Physical polarization-direction spread, half the Stokes angle, degrees.
  double direction_std_deg = 0.0;
  double ellipticity_std = 0.0;
};

/// Spread read from the tau = 0 entry of a record.
PolarizationSpread polarization_spread(const CorrelationRecord& record);

/// k-sigma contour of the Gaussian (P2, P3) density.
std::vector<std::pair<double, double>> spread_ellipse(const PolarizationSpread& s, double k,
                                                      int points);

std::string vector_field_csv(const LaserParams& params, int rings, int per_ring);
std::string covariance_csv(const LaserParams& params);
std::string ellipse_csv(const LaserParams& params, int points);
/// Analytic and exact-linear P3P3, P3P2, P2P2 against tau (units of 1/gamma).
std::string correlator_curves_csv(const LaserParams& params, double max_tau, double step);

}  // namespace vcsel
