#include "vcsel/params.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace vcsel {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_parameters: return "InvalidParameters";
    case ErrorCode::schema: return "SchemaError";
    case ErrorCode::anisotropy_not_aligned: return "AnisotropyNotAligned";
    case ErrorCode::below_threshold: return "BelowThreshold";
    case ErrorCode::unstable_system: return "UnstableSystem";
    case ErrorCode::unstable_polarization: return "UnstablePolarization";
    case ErrorCode::step_too_large: return "StepTooLarge";
    case ErrorCode::state_diverged: return "StateDiverged";
    case ErrorCode::defective_matrix: return "DefectiveMatrix";
    case ErrorCode::series_too_short: return "SeriesTooShort";
    case ErrorCode::fit_diverged: return "FitDiverged";
    case ErrorCode::io: return "IOError";
  }
  return "UnknownError";
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_parameters:
    case ErrorCode::schema:
    case ErrorCode::anisotropy_not_aligned:
      return 1;
    case ErrorCode::below_threshold:
      return 2;
    case ErrorCode::unstable_system:
    case ErrorCode::unstable_polarization:
      return 3;
    case ErrorCode::step_too_large:
    case ErrorCode::state_diverged:
    case ErrorCode::defective_matrix:
    case ErrorCode::series_too_short:
    case ErrorCode::fit_diverged:
      return 4;
    case ErrorCode::io:
      return 5;
  }
  return 4;
}

namespace {

void fail(const std::string& field, const std::string& message) {
  throw Error(ErrorCode::invalid_parameters, field + ": " + message);
}

void require_positive_rate(double value, const char* field) {
  if (!std::isfinite(value) || value <= 0.0) {
    std::ostringstream os;
    os << "rate must be finite and > 0, got " << value;
    fail(field, os.str());
  }
}

}  // namespace

void LaserParams::validate() const {
  require_positive_rate(kappa2, "kappa2");
  require_positive_rate(gamma, "gamma");
  require_positive_rate(Gamma, "Gamma");
  require_positive_rate(w2, "w2");
  if (Gamma < gamma) fail("Gamma", "must be >= gamma (spin relaxation rate is non-negative)");
  if (!std::isfinite(alpha) || alpha < 0.0) fail("alpha", "must be finite and >= 0");
  if (!std::isfinite(D0) || D0 < 0.0) fail("D0", "must be finite and >= 0");
  if (!g.components.allFinite() || g.norm() >= 1.0) fail("g", "|g| must be < 1");
  if (!l.components.allFinite() || l.norm() >= 1.0) fail("l", "|l| must be < 1");
  if (!Omega.components.allFinite()) fail("Omega", "must be finite");
}

DerivedParams derive(const LaserParams& params) {
  params.validate();
  if (!params.aligned()) {
    throw Error(ErrorCode::anisotropy_not_aligned,
                "g, l and Omega must lie along e1 for the stationary linear-polarization model");
  }
  const double loss = params.loss_rate();
  const double emission = params.emission_rate();
  const double gamma = params.gamma;

  DerivedParams out;
  out.gamma = gamma;
  out.alpha = params.alpha;
  out.loss_rate = loss;
  out.emission_rate = emission;
  out.Omega = params.Omega.e1();

  out.D_s = loss / emission;
  // x = w(1+g) n_s / gamma + 1 with n_s = gamma D0 / 2k(1+l) - gamma / w(1+g).
  out.x = emission * params.D0 / loss;
  out.n_s = gamma * (out.x - 1.0) / emission;
  out.rho = loss / gamma * (params.g.e1() - params.l.e1());
  out.theta = params.alpha * params.Omega.e1() / gamma;
  out.r = params.Gamma / gamma - 1.0;
  const double nu2 = loss * gamma * (out.x - 1.0);
  out.nu = nu2 >= 0.0 ? std::sqrt(nu2) : std::numeric_limits<double>::quiet_NaN();
  out.A = loss * emission / (gamma * gamma);
  return out;
}

void require_lasing(const DerivedParams& derived) {
  if (!derived.lasing()) {
    std::ostringstream os;
    os << "x = " << derived.x << " (stationary photon number " << derived.n_s << ")";
    throw Error(ErrorCode::below_threshold, os.str());
  }
}

void require_stable_polarization(const DerivedParams& derived) {
  if (!derived.polarization_stable()) {
    std::ostringstream os;
    os << "rho+theta = " << derived.polarization_slow_rate()
       << ", x+r+rho-theta = " << derived.polarization_fast_rate() << "; both must be > 0";
    throw Error(ErrorCode::unstable_polarization, os.str());
  }
}

double injection_for_x(const LaserParams& params, double x) {
  return x * params.loss_rate() / params.emission_rate();
}

LaserParams from_operating_point(const OperatingPoint& op) {
  if (!(op.x > 1.0)) fail("x", "operating point must be above threshold");
  if (!(op.nu_over_gamma > 0.0)) fail("nu_over_gamma", "must be > 0");
  if (!(op.A > 0.0)) fail("A", "must be > 0");
  if (op.alpha <= 0.0 && op.theta != 0.0) fail("theta", "nonzero theta requires alpha > 0");

  const double gamma = op.gamma;
  const double nu = op.nu_over_gamma * gamma;
  const double loss = nu * nu / (gamma * (op.x - 1.0));
  const double emission = op.A * gamma * gamma / loss;
  const double g = op.l + op.rho * gamma / loss;

  LaserParams p;
  p.gamma = gamma;
  p.kappa2 = loss / (1.0 + op.l);
  p.w2 = 2.0 * emission / (1.0 + g);
  p.Gamma = gamma * (1.0 + op.r);
  p.alpha = op.alpha;
  p.g = AnisotropyVector::along_e1(g);
  p.l = AnisotropyVector::along_e1(op.l);
  p.Omega = AnisotropyVector::along_e1(op.alpha > 0.0 ? op.theta * gamma / op.alpha : 0.0);
  p.D0 = injection_for_x(p, op.x);
  p.validate();
  return p;
}

}  // namespace vcsel
