#include "vcsel/figures.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "vcsel/dynamics.hpp"
#include "vcsel/io.hpp"
#include "vcsel/linear.hpp"

namespace vcsel {

const char* to_string(FieldCase c) { return c == FieldCase::rotation ? "rotation" : "gain_loss"; }

std::vector<FieldSample> vector_field(const LaserParams& params, FieldCase which, int rings,
                                      int per_ring) {
  Scaled s = nondimensionalize(params);
  if (which == FieldCase::rotation) {
    s.g.setZero();
    s.l.setZero();
    if (s.Omega.norm() == 0.0) s.Omega = Vector3d::UnitX();
  } else {
    s.Omega.setZero();
    if (s.g.norm() == 0.0 && s.l.norm() == 0.0) s.g = 0.1 * Vector3d::UnitX();
  }
  LaserState state;
  state.D = s.kappa2 / (0.5 * s.w2);
  state.n = std::max(0.0, s.D0 / s.kappa2 - 1.0 / (0.5 * s.w2));
  state.d = 0.0;

  std::vector<FieldSample> out;
  for (int i = 0; i <= rings; ++i) {
    const double polar = std::numbers::pi * i / rings;
    const int count = (i == 0 || i == rings) ? 1 : per_ring;
    for (int j = 0; j < count; ++j) {
      const double az = 2.0 * std::numbers::pi * j / per_ring;
      state.P = Vector3d(std::cos(polar), std::sin(polar) * std::cos(az),
                         std::sin(polar) * std::sin(az));
      out.push_back({state.P, general_rhs(state, s).P});
    }
  }
  return out;
}

PolarizationSpread polarization_spread(const CorrelationRecord& r) {
  PolarizationSpread s;
  s.var_p2 = r.value.p2p2.at(0);
  s.var_p3 = r.value.p3p3.at(0);
  s.cov_p2p3 = r.value.p3p2.at(0);
  s.direction_std_deg = 0.5 * std::sqrt(s.var_p2) * 180.0 / std::numbers::pi;
  s.ellipticity_std = std::sqrt(s.var_p3);
  return s;
}

std::vector<std::pair<double, double>> spread_ellipse(const PolarizationSpread& s, double k,
                                                      int points) {
  Eigen::Matrix2d C;
  C << s.var_p2, s.cov_p2p3, s.cov_p2p3, s.var_p3;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(C);
  const Eigen::Matrix2d root =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::vector<std::pair<double, double>> out;
  for (int i = 0; i <= points; ++i) {
    const double t = 2.0 * std::numbers::pi * i / points;
    const Eigen::Vector2d p = k * root * Eigen::Vector2d(std::cos(t), std::sin(t));
    out.emplace_back(p.x(), p.y());
  }
  return out;
}

namespace {

std::string header(const LaserParams& params) {
  return "# params_hash=" + hex64(params_hash(params)) + " version=" + version() + "\n";
}

const char* f(double v, std::string& buf) {
  buf = format_double(v);
  return buf.c_str();
}

}  // namespace

std::string vector_field_csv(const LaserParams& params, int rings, int per_ring) {
  std::ostringstream os;
  os << header(params) << "case,P1,P2,P3,dP1,dP2,dP3\n";
  std::string b;
  for (FieldCase c : {FieldCase::rotation, FieldCase::gain_loss}) {
    for (const auto& s : vector_field(params, c, rings, per_ring)) {
      os << to_string(c);
      for (int i = 0; i < 3; ++i) os << ',' << f(s.P[i], b);
      for (int i = 0; i < 3; ++i) os << ',' << f(s.dP[i], b);
      os << '\n';
    }
  }
  return os.str();
}

std::string covariance_csv(const LaserParams& params) {
  const DerivedParams dp = derive(params);
  const LinearSystemd sys = build_linear_system(dp);
  const auto es = numeric_eigensystem(sys);
  std::ostringstream os;
  os << header(params) << "source,var_p2,cov_p2p3,var_p3,direction_std_deg,ellipticity_std\n";
  std::string b;
  for (const CorrelationRecord& r :
       {analytic_correlators(dp, {0.0}), linear_correlators(sys, es, {0.0})}) {
    const PolarizationSpread s = polarization_spread(r);
    os << r.source << ',' << f(s.var_p2, b) << ',' << f(s.cov_p2p3, b) << ',' << f(s.var_p3, b)
       << ',' << f(s.direction_std_deg, b) << ',' << f(s.ellipticity_std, b) << '\n';
  }
  return os.str();
}

std::string ellipse_csv(const LaserParams& params, int points) {
  const DerivedParams dp = derive(params);
  const PolarizationSpread s = polarization_spread(analytic_correlators(dp, {0.0}));
  std::ostringstream os;
  os << header(params) << "sigma,P2,P3,direction_deg\n";
  std::string b;
  for (int k = 1; k <= 3; ++k) {
    for (const auto& [p2, p3] : spread_ellipse(s, k, points)) {
      os << k << ',' << f(p2, b) << ',' << f(p3, b) << ','
         << f(0.5 * p2 * 180.0 / std::numbers::pi, b) << '\n';
    }
  }
  return os.str();
}

std::string correlator_curves_csv(const LaserParams& params, double max_tau, double step) {
  const DerivedParams dp = derive(params);
  const LinearSystemd sys = build_linear_system(dp);
  const auto es = numeric_eigensystem(sys);
  const auto tau = lag_grid(max_tau, step);
  const CorrelationRecord an = analytic_correlators(dp, tau);
  const CorrelationRecord ex = linear_correlators(sys, es, tau);
  std::ostringstream os;
  os << header(params)
     << "tau_scaled,p3p3,p3p2,p2p2,p3p3_exact_linear,p3p2_exact_linear,p2p2_exact_linear\n";
  std::string b;
  for (std::size_t k = 0; k < tau.size(); ++k) {
    os << f(tau[k], b) << ',' << f(an.value.p3p3[k], b) << ',' << f(an.value.p3p2[k], b) << ','
       << f(an.value.p2p2[k], b) << ',' << f(ex.value.p3p3[k], b) << ','
       << f(ex.value.p3p2[k], b) << ',' << f(ex.value.p2p2[k], b) << '\n';
  }
  return os.str();
}

}  // namespace vcsel
