#include "vcsel/linear.hpp"

#include <cmath>
#include <ostream>

#include <json.hpp>

namespace vcsel {

CorrelationRecord analytic_correlators(const DerivedParams& dp, const std::vector<double>& tau) {
  require_lasing(dp);
  require_stable_polarization(dp);
  const double x = dp.x;
  const double nu = dp.nu_scaled();
  const double fast = dp.polarization_fast_rate();
  const double slow = dp.polarization_slow_rate();
  const double A = dp.A;
  const double a2 = dp.alpha * dp.alpha;

  const double intensity_abs = dp.loss_rate / dp.emission_rate * (x - 1.0) / x;
  const double intensity_rel = A / (x * (x - 1.0));
  const double ellipticity = A / ((x - 1.0) * fast);
  const double direction_slow = A * (1.0 + a2) / ((x - 1.0) * slow);

  CorrelationRecord rec;
  rec.tau = tau;
  rec.value.resize(tau.size());
  rec.time_unit = 1.0 / dp.gamma;
  rec.n_s = dp.n_s;
  rec.source = "analytic";
  for (std::size_t k = 0; k < tau.size(); ++k) {
    const double t = tau[k];
    const double c = std::cos(nu * t);
    const double intensity = std::exp(-x * t / 2.0) * c;
    const double polarization = std::exp(-fast * t / 2.0) * c;
    rec.value.dn_dn_abs[k] = intensity_abs * intensity;
    rec.value.dn_dn_rel[k] = intensity_rel * intensity;
    rec.value.p3p3[k] = ellipticity * polarization;
    rec.value.p3p2[k] = dp.alpha * ellipticity * polarization;
    rec.value.p2p2[k] = a2 * ellipticity * polarization + direction_slow * std::exp(-slow * t);
  }
  return rec;
}

CorrelationRecord linear_correlators(const LinearSystemd& sys, const Eigensystem<double>& es,
                                     const std::vector<double>& tau, FluctuationMode mode) {
  CorrelationRecord rec;
  rec.tau = tau;
  rec.value.resize(tau.size());
  rec.p2p3.resize(tau.size());
  rec.time_unit = sys.time_unit;
  rec.n_s = sys.n_s;
  rec.source = mode == FluctuationMode::full ? "exact-linear" : "diagonal-linear";
  for (std::size_t k = 0; k < tau.size(); ++k) {
    const Matrix5<double> F = fluctuation_matrix(sys, es, tau[k], mode);
    rec.value.dn_dn_abs[k] = F(idx::dn, idx::dn);
    rec.value.dn_dn_rel[k] = F(idx::dn, idx::dn) / (sys.n_s * sys.n_s);
    rec.value.p3p3[k] = F(idx::P3, idx::P3);
    rec.value.p3p2[k] = F(idx::P3, idx::P2);
    rec.value.p2p2[k] = F(idx::P2, idx::P2);
    rec.p2p3[k] = F(idx::P2, idx::P3);
  }
  return rec;
}

double splitting_scaled(double x, double r, double rho, double theta, double alpha,
                        double nu_scaled) {
  const double s = x + r - rho + theta;
  const double anisotropy = alpha > 0.0 ? 4.0 * theta * theta * (alpha * alpha + 1.0) / (alpha * alpha)
                                        : (theta == 0.0 ? 0.0 : INFINITY);
  return (s * s - x * x - anisotropy) / (8.0 * nu_scaled);
}

FrequencySplitting frequency_splitting(const DerivedParams& dp) {
  require_lasing(dp);
  const double g2 = dp.gamma * dp.gamma;
  const double nu = dp.nu;
  const double s = dp.x + dp.r - dp.rho + dp.theta;
  const double a2 = dp.alpha * dp.alpha;
  const std::complex<double> i(0.0, 1.0);

  FrequencySplitting out;
  const std::complex<double> d1 = -i * g2 * dp.x * dp.x / (8.0 * nu);
  // The coupling through the slow mode carries 1/alpha^2, as required for
  // consistency with the frequency difference below.
  const std::complex<double> d4 =
      -i * g2 * s * s / (8.0 * nu) +
      (a2 > 0.0 ? i * g2 * dp.theta * dp.theta * (a2 + 1.0) / (2.0 * nu * a2) : 0.0);
  out.delta_lambda = {d1, -d1, 0.0, d4, -d4};
  out.nu_n_minus_nu_P_scaled =
      splitting_scaled(dp.x, dp.r, dp.rho, dp.theta, dp.alpha, dp.nu_scaled());
  out.nu_n_minus_nu_P = out.nu_n_minus_nu_P_scaled * dp.gamma;
  out.perturbative = perturbative_regime(dp);
  return out;
}

void write_eigensystem_json(std::ostream& os, const Eigensystem<double>& es, double gamma,
                            const char* route) {
  using nlohmann::ordered_json;
  const auto pair = [](std::complex<double> z) { return ordered_json::array({z.real(), z.imag()}); };
  ordered_json doc;
  doc["route"] = route;
  doc["basis"] = LinearSystemd::basis;
  doc["gamma_per_s"] = gamma;
  ordered_json modes = ordered_json::array();
  for (std::size_t k = 0; k < es.size(); ++k) {
    ordered_json m;
    m["index"] = k + 1;
    m["lambda_scaled"] = pair(es[k].lambda);
    m["lambda_per_s"] = pair(es[k].lambda * gamma);
    ordered_json a = ordered_json::array(), b = ordered_json::array();
    for (int c = 0; c < 5; ++c) {
      a.push_back(pair(es[k].a(c)));
      b.push_back(pair(es[k].b(c)));
    }
    m["left"] = a;
    m["right"] = b;
    modes.push_back(m);
  }
  doc["modes"] = modes;
  os << doc.dump(2) << '\n';
}

}  // namespace vcsel
