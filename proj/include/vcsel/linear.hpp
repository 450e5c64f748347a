#pragma once

// Linearized Langevin system around the stationary linear polarization.
//
// State order is (dD, dn, d, P2, P3) with time in units of 1/gamma. The drift
// matrix uses the sign convention of the published Langevin matrix, in which
// the density-difference coordinate is minus the carrier difference d of the
// rate equations; linear_coordinates() performs that mapping.

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "vcsel/correlation.hpp"
#include "vcsel/params.hpp"

namespace vcsel {

template <typename Scalar>
using Matrix5 = Eigen::Matrix<Scalar, 5, 5>;
template <typename Scalar>
using Vector5 = Eigen::Matrix<Scalar, 5, 1>;
template <typename Scalar>
using CVector5 = Eigen::Matrix<std::complex<Scalar>, 5, 1>;
template <typename Scalar>
using CRowVector5 = Eigen::Matrix<std::complex<Scalar>, 1, 5>;

namespace idx {
enum : int { dD = 0, dn = 1, d = 2, P2 = 3, P3 = 4 };
}

/// Optional carrier-injection diffusion in scaled units. Zero by default:
/// injection noise is negligible next to the light-field noise.
struct CarrierNoise {
  double dD = 0.0;
  double d = 0.0;
};

template <typename Scalar>
struct LinearSystem {
  Matrix5<Scalar> drift = Matrix5<Scalar>::Zero();
  Matrix5<Scalar> diffusion = Matrix5<Scalar>::Zero();
  Scalar time_unit = Scalar(1);  // seconds per scaled time unit
  Scalar n_s = Scalar(1);

  static constexpr const char* basis =
      "(dD, dn, d, P2, P3), time in units of 1/gamma, rates scaled by gamma";
};

using LinearSystemd = LinearSystem<double>;

/// Drift and white-noise diffusion of the linearized equations (scaled units).
/// Throws BelowThreshold for x <= 1.
template <typename Scalar = double>
LinearSystem<Scalar> build_linear_system(const DerivedParams& dp, const CarrierNoise& carrier = {}) {
  require_lasing(dp);
  using S = Scalar;
  const S x = dp.x;
  const S gamma = dp.gamma;
  const S loss = S(dp.loss_rate) / gamma;    // 2k(1+l)/gamma = nu^2/(gamma^2 (x-1))
  const S w = S(dp.emission_rate) / gamma;   // w(1+g)/gamma
  const S Omega = S(dp.Omega) / gamma;        // gamma*theta/alpha in units of gamma
  const S n_s = (x - S(1)) / w;

  LinearSystem<S> sys;
  auto& M = sys.drift;
  M(idx::dD, idx::dD) = -x;
  M(idx::dD, idx::dn) = -loss;
  M(idx::dn, idx::dD) = x - S(1);
  M(idx::d, idx::d) = -(x + S(dp.r));
  M(idx::d, idx::P3) = loss * n_s;  // nu^2 / w(1+g)
  M(idx::P2, idx::d) = -w * S(dp.alpha);
  M(idx::P2, idx::P2) = -S(dp.rho);
  M(idx::P2, idx::P3) = -Omega;
  M(idx::P3, idx::d) = -w;
  M(idx::P3, idx::P2) = Omega;
  M(idx::P3, idx::P3) = -S(dp.rho);

  auto& N = sys.diffusion;
  N(idx::dn, idx::dn) = S(2) * loss * n_s;
  N(idx::P2, idx::P2) = S(2) * loss / n_s;
  N(idx::P3, idx::P3) = S(2) * loss / n_s;
  N(idx::dD, idx::dD) = S(carrier.dD);
  N(idx::d, idx::d) = S(carrier.d);

  sys.time_unit = S(1) / gamma;
  sys.n_s = n_s;
  return sys;
}

/// Deviation of a rate-equation state from the stationary point, in the
/// linear-system basis.
inline Vector5<double> linear_coordinates(const LaserState& s, const DerivedParams& dp) {
  Vector5<double> z;
  z << s.D - dp.D_s, s.n - dp.n_s, -s.d, s.P.y(), s.P.z();
  return z;
}

/// Inverse of linear_coordinates; P1 is restored from the unit-length constraint.
inline LaserState state_from_linear(const Vector5<double>& z, const DerivedParams& dp) {
  LaserState s;
  s.D = dp.D_s + z[idx::dD];
  s.n = dp.n_s + z[idx::dn];
  s.d = -z[idx::d];
  const double p_perp2 = z[idx::P2] * z[idx::P2] + z[idx::P3] * z[idx::P3];
  s.P = Vector3d(std::sqrt(std::max(0.0, 1.0 - p_perp2)), z[idx::P2], z[idx::P3]);
  return s;
}

/// Eigenvalue with its left (row) and right (column) eigenvectors, normalized
/// so that a.b = 1.
template <typename Scalar>
struct EigenTriple {
  std::complex<Scalar> lambda;
  CRowVector5<Scalar> a = CRowVector5<Scalar>::Zero();
  CVector5<Scalar> b = CVector5<Scalar>::Zero();
};

/// Ordered as 1/2 intensity pair (+Im first), 3 slow polarization mode,
/// 4/5 polarization pair (+Im first).
template <typename Scalar>
using Eigensystem = std::array<EigenTriple<Scalar>, 5>;

/// gamma/nu; the leading-order formulas assume this is small.
inline double perturbation_ratio(const DerivedParams& dp) { return dp.gamma / dp.nu; }
inline bool perturbative_regime(const DerivedParams& dp, double limit = 0.3) {
  return perturbation_ratio(dp) <= limit;
}

/// Leading-order eigensystem in gamma/nu (scaled units). Check
/// perturbative_regime() before relying on it.
template <typename Scalar = double>
Eigensystem<Scalar> analytic_eigensystem(const DerivedParams& dp) {
  using S = Scalar;
  using C = std::complex<S>;
  require_lasing(dp);
  const S x = dp.x, r = dp.r, rho = dp.rho, theta = dp.theta, alpha = dp.alpha;
  const S nu = S(dp.nu) / S(dp.gamma);
  const S w = S(dp.emission_rate) / S(dp.gamma);
  const S h = S(1) / std::sqrt(S(2));
  const C i(0, 1);

  Eigensystem<S> es;
  for (int k = 0; k < 2; ++k) {
    const S sgn = k == 0 ? S(1) : S(-1);
    auto& t = es[k];
    t.lambda = C(-x / S(2), sgn * nu);
    t.a(idx::dD) = -sgn * i * (x - S(1)) / nu * h;
    t.a(idx::dn) = h;
    t.b(idx::dD) = sgn * i * nu / (x - S(1)) * h;
    t.b(idx::dn) = h;
  }
  {
    auto& t = es[2];
    t.lambda = C(-(rho + theta), 0);
    t.a(idx::P2) = 1;
    t.a(idx::P3) = -alpha;
    t.b(idx::P2) = 1;
  }
  for (int k = 0; k < 2; ++k) {
    const S sgn = k == 0 ? S(1) : S(-1);
    auto& t = es[3 + k];
    t.lambda = C(-(x + r + rho - theta) / S(2), sgn * nu);
    t.a(idx::d) = -sgn * i * w / nu * h;
    t.a(idx::P3) = h;
    t.b(idx::d) = sgn * i * nu / w * h;
    t.b(idx::P2) = alpha * h;
    t.b(idx::P3) = h;
  }
  return es;
}

namespace detail {

/// Radix-2 diagonal balancing (Parlett-Reinsch). Returns the scaling vector s
/// with balanced = diag(s)^-1 * M * diag(s). Powers of two keep it exact.
template <typename Scalar, int N>
Eigen::Matrix<Scalar, N, 1> balance(Eigen::Matrix<Scalar, N, N>& M) {
  using std::abs;
  Eigen::Matrix<Scalar, N, 1> scale = Eigen::Matrix<Scalar, N, 1>::Ones();
  const Scalar radix = 2;
  bool converged = false;
  for (int sweep = 0; sweep < 200 && !converged; ++sweep) {
    converged = true;
    for (int i = 0; i < N; ++i) {
      Scalar c = 0, r = 0;
      for (int j = 0; j < N; ++j) {
        if (j == i) continue;
        c += abs(M(j, i));
        r += abs(M(i, j));
      }
      if (c == Scalar(0) || r == Scalar(0)) continue;
      const Scalar total = c + r;
      Scalar f = 1;
      while (c < r / radix) {
        c *= radix;
        r /= radix;
        f *= radix;
      }
      while (c >= r * radix) {
        c /= radix;
        r *= radix;
        f /= radix;
      }
      if ((c + r) < Scalar(0.95) * total) {
        converged = false;
        scale(i) *= f;
        M.col(i) *= f;
        M.row(i) /= f;
      }
    }
  }
  return scale;
}

template <typename Scalar>
std::complex<Scalar> cubic_value(const std::array<Scalar, 3>& c, std::complex<Scalar> z) {
  return ((z + c[0]) * z + c[1]) * z + c[2];
}

/// Roots of z^3 + c0 z^2 + c1 z + c2. Exactly conjugate when complex; the
/// real root (or all three, when real) first.
template <typename Scalar>
std::array<std::complex<Scalar>, 3> cubic_roots(const std::array<Scalar, 3>& c) {
  using std::abs;
  using C = std::complex<Scalar>;
  const auto f = [&](Scalar z) { return ((z + c[0]) * z + c[1]) * z + c[2]; };
  const auto df = [&](Scalar z) { return (Scalar(3) * z + Scalar(2) * c[0]) * z + c[1]; };

  // A real root exists; bracket it within the Cauchy bound and bisect.
  const Scalar bound = Scalar(1) + std::max({abs(c[0]), abs(c[1]), abs(c[2])});
  Scalar lo = -bound, hi = bound;
  for (int it = 0; it < 400 && hi - lo > std::numeric_limits<Scalar>::epsilon() * bound; ++it) {
    const Scalar mid = (lo + hi) / 2;
    if ((f(mid) > 0) == (f(hi) > 0)) hi = mid; else lo = mid;
  }
  Scalar real = (lo + hi) / 2;
  for (int it = 0; it < 3; ++it) {
    const Scalar d = df(real);
    if (d == Scalar(0)) break;
    const Scalar next = real - f(real) / d;
    if (abs(f(next)) < abs(f(real))) real = next; else break;
  }

  // Deflate to z^2 + e1 z + e0.
  const Scalar e1 = c[0] + real;
  const Scalar e0 = abs(real) > Scalar(1) && real != Scalar(0) ? -c[2] / real : c[1] + real * e1;
  const Scalar disc = e1 * e1 / Scalar(4) - e0;
  std::array<C, 3> roots;
  roots[0] = C(real, 0);
  if (disc >= 0) {
    const Scalar s = std::sqrt(disc);
    const Scalar q = e1 >= 0 ? -e1 / Scalar(2) - s : -e1 / Scalar(2) + s;
    roots[1] = C(q, 0);
    roots[2] = C(q != Scalar(0) ? e0 / q : Scalar(0), 0);
  } else {
    roots[1] = C(-e1 / Scalar(2), std::sqrt(-disc));
    roots[2] = std::conj(roots[1]);
  }
  // Newton polish against the undeflated polynomial.
  for (int k = 1; k < 3; ++k) {
    C z = roots[k];
    for (int it = 0; it < 4; ++it) {
      const C d = (Scalar(3) * z + Scalar(2) * c[0]) * z + c[1];
      if (d == C(0)) break;
      const C next = z - cubic_value(c, z) / d;
      if (abs(cubic_value(c, next)) < abs(cubic_value(c, z))) z = next; else break;
    }
    roots[k] = z;
  }
  if (disc < 0) roots[2] = std::conj(roots[1]);
  return roots;
}

template <typename Scalar>
[[noreturn]] void defective(const char* what) {
  throw Error(ErrorCode::defective_matrix, what);
}

/// Right and left null vectors of the singular complex matrix B (n = 2 or 3).
template <typename Scalar, int N>
std::pair<Eigen::Matrix<std::complex<Scalar>, N, 1>, Eigen::Matrix<std::complex<Scalar>, 1, N>>
null_vectors(const Eigen::Matrix<std::complex<Scalar>, N, N>& B) {
  using C = std::complex<Scalar>;
  using Col = Eigen::Matrix<C, N, 1>;
  using Row = Eigen::Matrix<C, 1, N>;
  const Scalar scale = B.cwiseAbs().maxCoeff();
  const Scalar tol = Scalar(1e3) * std::numeric_limits<Scalar>::epsilon();
  Col right;
  Row left;
  if constexpr (N == 2) {
    const Col r0(B(0, 1), -B(0, 0));
    const Col r1(-B(1, 1), B(1, 0));
    right = r0.norm() >= r1.norm() ? r0 : r1;
    const Row l0(B(1, 0), -B(0, 0));
    const Row l1(-B(1, 1), B(0, 1));
    left = l0.norm() >= l1.norm() ? l0 : l1;
    if (right.norm() <= tol * scale || left.norm() <= tol * scale) {
      defective<Scalar>("2x2 block has a degenerate eigenspace");
    }
  } else {
    const auto cross = [](const auto& u, const auto& v) {
      return Col(u(1) * v(2) - u(2) * v(1), u(2) * v(0) - u(0) * v(2), u(0) * v(1) - u(1) * v(0));
    };
    Scalar best = -1;
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        const Col c = cross(B.row(i).transpose(), B.row(j).transpose());
        if (c.norm() > best) { best = c.norm(); right = c; }
      }
    }
    if (best <= tol * scale * scale) defective<Scalar>("3x3 block: eigenspace rank check failed");
    best = -1;
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        const Col c = cross(B.col(i), B.col(j));
        if (c.norm() > best) { best = c.norm(); left = c.transpose(); }
      }
    }
    if (best <= tol * scale * scale) defective<Scalar>("3x3 block: eigenspace rank check failed");
  }
  return {right, left};
}

/// Scales b so that b(ref) = target (or |b| = 1 if that component vanishes),
/// then a so that a.b = 1.
template <typename Scalar>
void normalize(EigenTriple<Scalar>& t, int ref, Scalar target) {
  using C = std::complex<Scalar>;
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  if (std::abs(t.b(ref)) > std::sqrt(eps) * t.b.norm()) {
    t.b *= C(target) / t.b(ref);
  } else {
    t.b /= t.b.norm();
  }
  const C ab = t.a * t.b;
  if (std::abs(ab) <= Scalar(1e3) * eps * t.a.norm() * t.b.norm()) {
    defective<Scalar>("left and right eigenvectors are orthogonal (Jordan block)");
  }
  t.a /= ab;
}

}  // namespace detail

/// Exact eigensystem of the drift matrix: the 2x2 block in closed form, the
/// 3x3 block through its characteristic cubic, eigenvectors from null-space
/// cross products. Throws DefectiveMatrix when a rank check fails.
template <typename Scalar>
Eigensystem<Scalar> numeric_eigensystem(const LinearSystem<Scalar>& sys) {
  using S = Scalar;
  using C = std::complex<S>;
  const S h = S(1) / std::sqrt(S(2));
  Eigensystem<S> es;

  // Intensity block (dD, dn).
  {
    Eigen::Matrix<S, 2, 2> M = sys.drift.template block<2, 2>(0, 0);
    const Eigen::Matrix<S, 2, 1> scale = detail::balance<S, 2>(M);
    const S half_trace = (M(0, 0) + M(1, 1)) / S(2);
    const S half_diff = (M(0, 0) - M(1, 1)) / S(2);
    const S disc = half_diff * half_diff + M(0, 1) * M(1, 0);
    std::array<C, 2> lambdas;
    if (disc < 0) {
      lambdas = {C(half_trace, std::sqrt(-disc)), C(half_trace, -std::sqrt(-disc))};
    } else {
      const S s = std::sqrt(disc);
      lambdas = {C(half_trace + s, 0), C(half_trace - s, 0)};
    }
    for (int k = 0; k < 2; ++k) {
      auto& t = es[k];
      t.lambda = lambdas[k];
      if (k == 1 && disc < 0) {
        t.b = es[0].b.conjugate();
        t.a = es[0].a.conjugate();
        continue;
      }
      const Eigen::Matrix<C, 2, 2> B =
          M.template cast<C>() - t.lambda * Eigen::Matrix<C, 2, 2>::Identity();
      const auto [right, left] = detail::null_vectors<S, 2>(B);
      t.b.template head<2>() = scale.template cast<C>().cwiseProduct(right);
      t.a.template head<2>() = left.cwiseQuotient(scale.template cast<C>().transpose());
      detail::normalize(t, idx::dn, h);
    }
  }

  // Polarization block (d, P2, P3).
  {
    Eigen::Matrix<S, 3, 3> M = sys.drift.template block<3, 3>(2, 2);
    const Eigen::Matrix<S, 3, 1> scale = detail::balance<S, 3>(M);
    const S c2 = -M.trace();
    const S c1 = M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0) + M(0, 0) * M(2, 2) - M(0, 2) * M(2, 0) +
                 M(1, 1) * M(2, 2) - M(1, 2) * M(2, 1);
    const S c0 = -M.determinant();
    std::array<C, 3> roots = detail::cubic_roots<S>({c2, c1, c0});
    const bool complex_pair = roots[1].imag() != S(0);
    if (!complex_pair) {
      std::sort(roots.begin(), roots.end(),
                [](const C& a, const C& b) { return a.real() > b.real(); });
    }
    for (int k = 0; k < 3; ++k) {
      auto& t = es[2 + k];
      t.lambda = roots[k];
      if (k == 2 && complex_pair) {
        t.b = es[3].b.conjugate();
        t.a = es[3].a.conjugate();
        continue;
      }
      const Eigen::Matrix<C, 3, 3> B =
          M.template cast<C>() - t.lambda * Eigen::Matrix<C, 3, 3>::Identity();
      const auto [right, left] = detail::null_vectors<S, 3>(B);
      t.b.template tail<3>() = scale.template cast<C>().cwiseProduct(right);
      t.a.template tail<3>() = left.cwiseQuotient(scale.template cast<C>().transpose());
      if (k == 0) {
        detail::normalize(t, idx::P2, S(1));
      } else {
        detail::normalize(t, idx::P3, h);
      }
    }
  }
  return es;
}

/// max over triples of |drift b - lambda b| / (|drift| |b|) in the balanced
/// metric, i.e. componentwise relative to the row scale.
template <typename Scalar>
Scalar eigen_residual(const LinearSystem<Scalar>& sys, const Eigensystem<Scalar>& es) {
  using C = std::complex<Scalar>;
  Scalar worst = 0;
  const Matrix5<Scalar> absM = sys.drift.cwiseAbs();
  for (const auto& t : es) {
    const CVector5<Scalar> right = sys.drift.template cast<C>() * t.b - t.lambda * t.b;
    const CRowVector5<Scalar> left = t.a * sys.drift.template cast<C>() - t.lambda * t.a;
    const Vector5<Scalar> right_scale = absM * t.b.cwiseAbs() + std::abs(t.lambda) * t.b.cwiseAbs();
    const Eigen::Matrix<Scalar, 1, 5> left_scale =
        t.a.cwiseAbs() * absM + std::abs(t.lambda) * t.a.cwiseAbs();
    for (int i = 0; i < 5; ++i) {
      if (right_scale(i) > 0) worst = std::max(worst, std::abs(right(i)) / right_scale(i));
      if (left_scale(i) > 0) worst = std::max(worst, std::abs(left(i)) / left_scale(i));
    }
  }
  return worst;
}

inline void require_stable(const auto& es) {
  for (const auto& t : es) {
    if (!(t.lambda.real() < 0)) {
      std::ostringstream os;
      os << "eigenvalue " << t.lambda << " has non-negative real part";
      throw Error(ErrorCode::unstable_system, os.str());
    }
  }
}

enum class FluctuationMode { full, diagonal };

/// Complex-valued sum over eigen-dyads, F(tau) = sum_ij N_ij / (-l_i - l_j*)
/// exp(l_j* tau) b_i b_j^H with N_ij = a_i N a_j^H. Its imaginary part is
/// rounding noise for a real drift matrix.
template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, 5, 5> fluctuation_matrix_complex(
    const LinearSystem<Scalar>& sys, const Eigensystem<Scalar>& es, Scalar tau,
    FluctuationMode mode = FluctuationMode::full) {
  using C = std::complex<Scalar>;
  require_stable(es);
  const Matrix5<C> N = sys.diffusion.template cast<C>();
  Matrix5<C> F = Matrix5<C>::Zero();
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (mode == FluctuationMode::diagonal && i != j) continue;
      const C Nij = (es[i].a * N * es[j].a.adjoint())(0, 0);
      const C lj = std::conj(es[j].lambda);
      const C weight = Nij / (-es[i].lambda - lj) * std::exp(lj * tau);
      F.noalias() += weight * es[i].b * es[j].b.adjoint();
    }
  }
  return F;
}

/// F(tau)_kl = <z_k(t) z_l(t+tau)>. Throws UnstableSystem if any Re(lambda) >= 0.
template <typename Scalar>
Matrix5<Scalar> fluctuation_matrix(const LinearSystem<Scalar>& sys, const Eigensystem<Scalar>& es,
                                   Scalar tau, FluctuationMode mode = FluctuationMode::full) {
  return fluctuation_matrix_complex(sys, es, tau, mode).real();
}

/// exp(drift * t) assembled from the eigen-dyads.
template <typename Scalar>
Matrix5<Scalar> propagator(const Eigensystem<Scalar>& es, Scalar t) {
  Matrix5<std::complex<Scalar>> E = Matrix5<std::complex<Scalar>>::Zero();
  for (const auto& tr : es) E.noalias() += std::exp(tr.lambda * t) * tr.b * tr.a;
  return E.real();
}

/// Covariance accumulated over one step of length dt by the exact Gaussian
/// transition, Q = F(0) - exp(A dt) F(0) exp(A dt)^T, summed without cancellation.
template <typename Scalar>
Matrix5<Scalar> transition_covariance(const LinearSystem<Scalar>& sys,
                                      const Eigensystem<Scalar>& es, Scalar dt) {
  using C = std::complex<Scalar>;
  require_stable(es);
  const auto expm1_over = [dt](C z) {
    const C u = z * dt;
    if (std::abs(u) < Scalar(1e-3)) {
      return dt * (Scalar(1) + u / Scalar(2) + u * u / Scalar(6) + u * u * u / Scalar(24));
    }
    return (std::exp(u) - Scalar(1)) / z;
  };
  const Matrix5<C> N = sys.diffusion.template cast<C>();
  Matrix5<C> Q = Matrix5<C>::Zero();
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const C Nij = (es[i].a * N * es[j].a.adjoint())(0, 0);
      Q.noalias() += Nij * expm1_over(es[i].lambda + std::conj(es[j].lambda)) * es[i].b *
                     es[j].b.adjoint();
    }
  }
  const Matrix5<Scalar> R = Q.real();
  return (R + R.transpose()) / Scalar(2);
}

/// Closed-form correlators of the observable light field on a lag grid.
/// Throws BelowThreshold / UnstablePolarization outside their domain.
CorrelationRecord analytic_correlators(const DerivedParams& dp, const std::vector<double>& tau);

/// Correlators read off F(tau) of a linear system (the exact-linear route).
CorrelationRecord linear_correlators(const LinearSystemd& sys, const Eigensystem<double>& es,
                                     const std::vector<double>& tau,
                                     FluctuationMode mode = FluctuationMode::full);

/// Second-order corrections to the eigenvalue imaginary parts and the
/// intensity/polarization oscillation frequency difference.
struct FrequencySplitting {
  std::array<std::complex<double>, 5> delta_lambda;  // rad/s
  double nu_n_minus_nu_P = 0.0;                      // rad/s
  double nu_n_minus_nu_P_scaled = 0.0;               // units of gamma
  bool perturbative = true;                          // gamma/nu < 0.3
};

FrequencySplitting frequency_splitting(const DerivedParams& dp);

/// nu_n - nu_P in units of gamma for given dimensionless parameters.
double splitting_scaled(double x, double r, double rho, double theta, double alpha, double nu_scaled);

/// Eigensystem as JSON; complex numbers as [re, im] pairs, eigenvalues in
/// units of gamma and rad/s.
void write_eigensystem_json(std::ostream& os, const Eigensystem<double>& es, double gamma,
                            const char* route);

}  // namespace vcsel
