#include "vcsel/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace vcsel {

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;

Vec6 pack(const LaserState& s) {
  Vec6 v;
  v << s.D, s.n, s.d, s.P;
  return v;
}

LaserState unpack(const Vec6& v) {
  LaserState s;
  s.D = v[0];
  s.n = v[1];
  s.d = v[2];
  s.P = v.tail<3>();
  return s;
}

}  // namespace

LaserState general_rhs(const LaserState& s, const Scaled& p) {
  const double w = 0.5 * p.w2;
  const double G = w * (1.0 + s.P.dot(p.g));
  const double K = p.kappa2 * (1.0 + s.P.dot(p.l));
  const double P3 = s.P.z();

  LaserState rate;
  rate.D = -G * s.D * s.n - (s.D - p.D0) - G * s.d * s.n * P3;
  rate.n = G * s.D * s.n - K * s.n + G * s.d * s.n * P3;
  rate.d = -G * s.d * s.n - p.Gamma * s.d - G * s.D * s.n * P3;

  const Vector3d pull = G * (s.D * p.g + s.d * Vector3d::UnitZ()) - K * p.l;
  const Vector3d rotation = p.Omega + G * p.alpha * s.d * Vector3d::UnitZ();
  rate.P = stokes_drift(s.P, pull, rotation);
  return rate;
}

LaserState aligned_rhs(const LaserState& s, const Scaled& p) {
  const auto off_axis = [](const Vector3d& v) { return v.y() != 0.0 || v.z() != 0.0; };
  if (off_axis(p.g) || off_axis(p.l) || off_axis(p.Omega)) {
    throw Error(ErrorCode::anisotropy_not_aligned, "aligned_rhs requires g, l, Omega along e1");
  }
  const double g = p.g.x();
  const double l = p.l.x();
  const double Omega = p.Omega.x();
  const double P1 = s.P.x(), P2 = s.P.y(), P3 = s.P.z();

  const double G = 0.5 * p.w2 * (1.0 + P1 * g);
  const double K = p.kappa2 * (1.0 + P1 * l);
  const double c = G * s.D * g - K * l;  // net gain-loss pull along e1
  const double Gd = G * s.d;

  LaserState rate;
  rate.D = -G * s.D * s.n - (s.D - p.D0) - Gd * s.n * P3;
  rate.n = G * s.D * s.n - K * s.n + Gd * s.n * P3;
  rate.d = -Gd * s.n - p.Gamma * s.d - G * s.D * s.n * P3;
  rate.P.x() = -c * (P1 * P1 - 1.0) - Gd * (P3 * P1 + p.alpha * P2);
  rate.P.y() = -c * P1 * P2 - Gd * (P3 * P2 - p.alpha * P1) - Omega * P3;
  rate.P.z() = -c * P1 * P3 - Gd * (P3 * P3 - 1.0) + Omega * P2;
  return rate;
}

double max_rate(const Scaled& p, const LaserState& s) {
  const double w = 0.5 * p.w2;
  const double gmax = 1.0 + p.g.norm();
  const double D_ref = std::max(std::abs(s.D), p.kappa2 / w);
  const double n_ref = std::max(std::abs(s.n), 1.0);
  return std::max({1.0, p.Gamma, p.kappa2 * (1.0 + p.l.norm()), p.Omega.norm(),
                   w * gmax * D_ref, w * gmax * n_ref});
}

Trajectory integrate(const LaserState& initial, const Scaled& p, double t_end, double dt,
                     const IntegrateOptions& options) {
  if (!(t_end > 0.0)) throw Error(ErrorCode::invalid_parameters, "t_end must be > 0");
  const double limit = 0.01 / max_rate(p, initial);
  if (!(dt > 0.0) || dt > limit) {
    std::ostringstream os;
    os << "dt = " << dt << " exceeds 0.01/max_rate = " << limit;
    throw Error(ErrorCode::step_too_large, os.str());
  }
  const auto rhs = [&](const Vec6& v) {
    const LaserState s = unpack(v);
    return pack(options.use_aligned_rhs ? aligned_rhs(s, p) : general_rhs(s, p));
  };

  const double D_scale = std::max(p.kappa2 / (0.5 * p.w2), std::abs(initial.D));
  const double n_scale = std::max({1.0, std::abs(initial.n), p.D0});
  const double blowup = 1e12;

  Trajectory traj;
  traj.time_unit = p.time_unit;
  traj.t.push_back(0.0);
  traj.states.push_back(initial);

  const auto rk4 = [&](const Vec6& y, double h) {
    const Vec6 k1 = rhs(y);
    const Vec6 k2 = rhs(y + 0.5 * h * k1);
    const Vec6 k3 = rhs(y + 0.5 * h * k2);
    const Vec6 k4 = rhs(y + h * k3);
    return Vec6(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  };

  // Advances by h, splitting into halves when n would turn negative.
  const auto advance = [&](auto&& self, const Vec6& y, double h, int depth) -> Vec6 {
    Vec6 next = rk4(y, h);
    if (next[1] >= 0.0 || y[1] < 0.0) return next;
    if (depth >= 10) {
      throw Error(ErrorCode::state_diverged, "photon number stays negative after 10 step halvings");
    }
    ++traj.halvings;
    const Vec6 mid = self(self, y, 0.5 * h, depth + 1);
    return self(self, mid, 0.5 * h, depth + 1);
  };

  Vec6 y = pack(initial);
  const long steps = static_cast<long>(std::ceil(t_end / dt - 1e-9));
  for (long k = 1; k <= steps; ++k) {
    const double h = std::min(dt, t_end - (k - 1) * dt);
    y = advance(advance, y, h, 0);
    const double norm = y.tail<3>().norm();
    const double correction = std::abs(1.0 - norm);
    traj.max_norm_correction = std::max(traj.max_norm_correction, correction);
    traj.total_norm_correction += correction;
    y.tail<3>() /= norm;

    if (!y.allFinite() || std::abs(y[0]) > blowup * D_scale || std::abs(y[1]) > blowup * n_scale) {
      std::ostringstream os;
      os << "state diverged at t = " << k * dt;
      throw Error(ErrorCode::state_diverged, os.str());
    }
    if (k % options.record_every == 0 || k == steps) {
      traj.t.push_back(std::min(k * dt, t_end));
      traj.states.push_back(unpack(y));
    }
  }
  return traj;
}

LaserState find_stationary(const LaserParams& params) {
  const DerivedParams derived = derive(params);
  if (!(derived.n_s > 0.0)) {
    std::ostringstream os;
    os << "stationary photon number " << derived.n_s << " <= 0 (x = " << derived.x << ")";
    throw Error(ErrorCode::below_threshold, os.str());
  }
  LaserState s;
  s.D = derived.D_s;
  s.n = derived.n_s;
  s.d = 0.0;
  s.P = Vector3d::UnitX();
  return s;
}

double stationary_residual(const LaserState& state, const Scaled& params) {
  const LaserState rate = aligned_rhs(state, params);
  const double D = std::max(std::abs(state.D), 1.0);
  const double n = std::max(std::abs(state.n), 1.0);
  return std::max({std::abs(rate.D) / D, std::abs(rate.n) / n, std::abs(rate.d) / D,
                   rate.P.cwiseAbs().maxCoeff()});
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t_seconds,t_scaled,D,n,d,P1,P2,P3\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    const LaserState& s = traj.states[i];
    os << traj.t[i] * traj.time_unit << ',' << traj.t[i] << ',' << s.D << ',' << s.n << ','
       << s.d << ',' << s.P.x() << ',' << s.P.y() << ',' << s.P.z() << '\n';
  }
}

}  // namespace vcsel
