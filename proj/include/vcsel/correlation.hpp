#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace vcsel {

/// The four observable correlators, plus the absolute intensity form.
/// Cross-correlation convention: p3p2(tau) = <P3(t) P2(t+tau)>.
struct CorrelatorChannels {
  std::vector<double> dn_dn_abs;
  std::vector<double> dn_dn_rel;
  std::vector<double> p3p3;
  std::vector<double> p3p2;
  std::vector<double> p2p2;

  void resize(std::size_t n);
};

/// Correlators on a lag grid. Analytic records leave `stderr_` and the
/// diagnostic channels empty.
struct CorrelationRecord {
  std::vector<double> tau;  // units of 1/gamma
  CorrelatorChannels value;
  CorrelatorChannels stderr_;

  // Empirical diagnostics: transposed cross-correlation <P2(t)P3(t+tau)>
  // and intensity/polarization cross terms <dn(t)P(t+tau)>/n_s.
  std::vector<double> p2p3;
  std::vector<double> dn_p2;
  std::vector<double> dn_p3;
  std::vector<double> dn_p2_se;
  std::vector<double> dn_p3_se;

  double time_unit = 1.0;  // seconds per scaled unit
  double n_s = 1.0;
  bool empirical = false;
  std::uint64_t params_hash = 0;
  std::uint64_t seed = 0;
  std::string source;  // "analytic", "exact-linear" or "empirical"

  std::size_t size() const { return tau.size(); }
};

/// Lags 0, step, 2*step, ... up to and including max_lag (scaled units).
std::vector<double> lag_grid(double max_lag, double step);

/// CSV columns tau_scaled, tau_seconds, dn_dn_abs, dn_dn_rel, p3p3, p3p2, p2p2,
/// preceded by one '#' comment line carrying params_hash, seed and source.
void write_correlation_csv(std::ostream& os, const CorrelationRecord& record);
void write_correlation_stderr_csv(std::ostream& os, const CorrelationRecord& record);
/// Reads the CSV written above; an optional stderr table fills `stderr_`.
CorrelationRecord read_correlation_csv(std::istream& is);
void read_correlation_stderr_csv(std::istream& is, CorrelationRecord& record);

}  // namespace vcsel
