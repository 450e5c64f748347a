#pragma once

#include <Eigen/Dense>

#include "vcsel/error.hpp"

namespace vcsel {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
using Vector3d = Vector3<double>;

/// Anisotropy expressed on the Stokes basis (e1, e2, e3).
///
/// Gain and loss anisotropies are dimensionless relative modulations of the
/// emission and cavity-loss rates, 2w(1 + P.g) and 2k(1 + P.l). The frequency
/// anisotropy is an angular frequency (rad/s): half the splitting between the
/// two orthogonal polarization modes along its axis.
struct AnisotropyVector {
  Vector3d components = Vector3d::Zero();

  AnisotropyVector() = default;
  explicit AnisotropyVector(const Vector3d& c) : components(c) {}
  AnisotropyVector(double a1, double a2, double a3) : components(a1, a2, a3) {}

  static AnisotropyVector along_e1(double value) { return {value, 0.0, 0.0}; }

  double e1() const { return components.x(); }
  bool aligned_with_e1() const { return components.y() == 0.0 && components.z() == 0.0; }
  double norm() const { return components.norm(); }
};

/// Physical model parameters in SI units.
struct LaserParams {
  double kappa2 = 0.0;  // 2k, photon emission rate from the cavity (1/s)
  double gamma = 0.0;   // spontaneous carrier decay rate (1/s)
  double Gamma = 0.0;   // gamma_s + gamma (1/s)
  double w2 = 0.0;      // 2w, spontaneous emission rate into the laser mode (1/s)
  double alpha = 0.0;   // linewidth enhancement factor
  double D0 = 0.0;      // injection, in units of gamma (carrier number)
  AnisotropyVector g;
  AnisotropyVector l;
  AnisotropyVector Omega;  // rad/s

  /// Throws Error(invalid_parameters) on the first violated invariant.
  void validate() const;

  bool aligned() const {
    return g.aligned_with_e1() && l.aligned_with_e1() && Omega.aligned_with_e1();
  }

  /// 2k(1 + l), the cavity loss rate at the stationary polarization e1.
  double loss_rate() const { return kappa2 * (1.0 + l.e1()); }
  /// w(1 + g), half the spontaneous emission rate at e1.
  double emission_rate() const { return 0.5 * w2 * (1.0 + g.e1()); }
};

/// Dimensionless parameter set of the aligned model plus the stationary point.
struct DerivedParams {
  double x = 0.0;      // injection in threshold units
  double rho = 0.0;    // scaled gain-loss anisotropy
  double theta = 0.0;  // scaled frequency anisotropy, alpha*Omega/gamma
  double r = 0.0;      // Gamma/gamma - 1
  double nu = 0.0;     // relaxation-oscillation angular frequency (rad/s); NaN below threshold
  double A = 0.0;      // noise magnitude
  double n_s = 0.0;    // stationary photon number
  double D_s = 0.0;    // stationary total carrier number

  // Carried along so the linear system can be built from this struct alone.
  double gamma = 0.0;
  double alpha = 0.0;
  double loss_rate = 0.0;      // 2k(1+l)
  double emission_rate = 0.0;  // w(1+g)
  double Omega = 0.0;          // e1 component, rad/s

  bool lasing() const { return x > 1.0; }
  /// nu in units of gamma.
  double nu_scaled() const { return nu / gamma; }
  /// Polarization damping combinations that must be positive for stability.
  double polarization_slow_rate() const { return rho + theta; }
  double polarization_fast_rate() const { return x + r + rho - theta; }
  bool polarization_stable() const {
    return polarization_slow_rate() > 0.0 && polarization_fast_rate() > 0.0;
  }
};

/// Throws AnisotropyNotAligned for non-e1 anisotropies. Below threshold is
/// reported through DerivedParams::lasing(), not as an error.
DerivedParams derive(const LaserParams& params);

/// Throws BelowThreshold when x <= 1.
void require_lasing(const DerivedParams& derived);
/// Throws UnstablePolarization when rho+theta <= 0 or x+r+rho-theta <= 0.
void require_stable_polarization(const DerivedParams& derived);

/// Injection D0 that yields the requested x for the given rates.
double injection_for_x(const LaserParams& params, double x);

/// Dimensionless description of an aligned operating point, used to build
/// parameter sets directly from the quantities the correlators depend on.
struct OperatingPoint {
  double gamma = 1e10;  // 1/s
  double x = 2.0;
  double r = 2.0;
  double rho = 2.0;
  double theta = 2.0;
  double alpha = 2.0;
  double nu_over_gamma = 10.0;
  double A = 0.01;
  double l = 0.0;  // e1 loss anisotropy; g follows from rho
};

/// Inverts derive(): returns aligned parameters with derive(result)
/// reproducing the operating point up to rounding.
LaserParams from_operating_point(const OperatingPoint& op);

/// Rates in units of gamma; the time unit 1/gamma is recorded in seconds.
template <typename Scalar>
struct ScaledParams {
  Scalar kappa2{};
  Scalar Gamma{};
  Scalar w2{};
  Scalar alpha{};
  Scalar D0{};
  Vector3<Scalar> g = Vector3<Scalar>::Zero();
  Vector3<Scalar> l = Vector3<Scalar>::Zero();
  Vector3<Scalar> Omega = Vector3<Scalar>::Zero();
  Scalar time_unit{};  // 1/gamma in seconds
  Scalar gamma_si{};   // gamma in 1/s

  // gamma is 1 in these units by construction.
  static constexpr Scalar gamma = Scalar(1);
};

template <typename Scalar = double>
ScaledParams<Scalar> nondimensionalize(const LaserParams& p) {
  const Scalar gamma = static_cast<Scalar>(p.gamma);
  ScaledParams<Scalar> s;
  s.kappa2 = static_cast<Scalar>(p.kappa2) / gamma;
  s.Gamma = static_cast<Scalar>(p.Gamma) / gamma;
  s.w2 = static_cast<Scalar>(p.w2) / gamma;
  s.alpha = static_cast<Scalar>(p.alpha);
  s.D0 = static_cast<Scalar>(p.D0);
  s.g = p.g.components.cast<Scalar>();
  s.l = p.l.components.cast<Scalar>();
  s.Omega = p.Omega.components.cast<Scalar>() / gamma;
  s.time_unit = Scalar(1) / gamma;
  s.gamma_si = gamma;
  return s;
}

/// Inverse of nondimensionalize. The products are formed in long double,
/// which makes the round trip exact for Scalar = long double.
template <typename Scalar>
LaserParams redimensionalize(const ScaledParams<Scalar>& s) {
  using Wide = long double;
  const Wide gamma = static_cast<Wide>(s.gamma_si);
  auto up = [gamma](Scalar v) { return static_cast<double>(static_cast<Wide>(v) * gamma); };
  LaserParams p;
  p.gamma = static_cast<double>(s.gamma_si);
  p.kappa2 = up(s.kappa2);
  p.Gamma = up(s.Gamma);
  p.w2 = up(s.w2);
  p.alpha = static_cast<double>(s.alpha);
  p.D0 = static_cast<double>(s.D0);
  p.g = AnisotropyVector(s.g.template cast<double>());
  p.l = AnisotropyVector(s.l.template cast<double>());
  p.Omega = AnisotropyVector(up(s.Omega.x()), up(s.Omega.y()), up(s.Omega.z()));
  return p;
}

/// Carrier and photon numbers plus the normalized Stokes vector.
struct LaserState {
  double D = 0.0;
  double n = 0.0;
  double d = 0.0;
  Vector3d P = Vector3d::UnitX();
};

}  // namespace vcsel
