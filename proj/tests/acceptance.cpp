// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vcsel/analysis.hpp"
#include "vcsel/dynamics.hpp"
#include "vcsel/figures.hpp"
#include "vcsel/linear.hpp"

using namespace vcsel;

namespace {

constexpr std::uint64_t kSeed = 20240611;

struct Verdict {
  bool pass = true;
  std::vector<std::string> lines;

  void check(bool ok, const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    lines.push_back(std::string(ok ? "ok   " : "MISS ") + buf);
    pass = pass && ok;
  }
  void info(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    lines.push_back(std::string("info ") + buf);
  }
};

LaserParams reference_laser(double nu_over_gamma) {
  OperatingPoint op;
  op.nu_over_gamma = nu_over_gamma;
  return from_operating_point(op);
}

double rel(double value, double expected) { return std::abs(value / expected - 1.0); }

struct Fits {
  FitResult intensity, ellipticity, direction, cross;
};

Fits fit_all(const CorrelationRecord& rec) {
  const auto& v = rec.value;
  const auto& s = rec.stderr_;
  Fits f;
  f.intensity = fit_damped_cosine(rec.tau, v.dn_dn_rel, s.dn_dn_rel, FitModel::single);
  f.ellipticity = fit_damped_cosine(rec.tau, v.p3p3, s.p3p3, FitModel::single);
  f.direction = fit_damped_cosine(rec.tau, v.p2p2, s.p2p2, FitModel::cosine_plus_exponential);
  f.cross = fit_damped_cosine(rec.tau, v.p3p2, s.p3p2, FitModel::cosine_plus_exponential);
  return f;
}

void fit_status(Verdict& v, const Fits& f) {
  for (const auto& [name, fit] : {std::pair{"intensity", &f.intensity}, {"ellipticity", &f.ellipticity},
                                  {"direction", &f.direction}, {"cross", &f.cross}}) {
    v.check(fit->status == FitStatus::ok, "%s fit status %s (weighted rms %.2f)", name,
            to_string(fit->status), fit->weighted_rms);
  }
}

// 1. The fixed point is stationary under integration and |P| stays 1.
Verdict stationarity() {
  Verdict v;
  const LaserParams p = reference_laser(10.0);
  const Scaled s = nondimensionalize(p);
  const LaserState st = find_stationary(p);
  const double dt = 0.005 / max_rate(s, st);
  const Trajectory tr = integrate(st, s, 10.0, dt);
  const LaserState& e = tr.states.back();
  const double drift = std::max({rel(e.D, st.D), rel(e.n, st.n), std::abs(e.d) / st.D,
                                 (e.P - st.P).cwiseAbs().maxCoeff()});
  v.check(drift < 1e-9, "max relative drift over 10/gamma = %.2e (< 1e-9), dt = %.2e", drift, dt);
  v.check(tr.total_norm_correction < 1e-6, "cumulative |P| correction = %.2e (< 1e-6)",
          tr.total_norm_correction);
  return v;
}

// 2. Numeric eigenvalues against the leading-order analytic ones.
struct EigenGap {
  double re = 0.0, im = 0.0;  // relative errors over (gamma/nu)^2
  int re_mode = 0, im_mode = 0;
};

EigenGap eigen_gap(const DerivedParams& dp) {
  const double eps2 = std::pow(dp.gamma / dp.nu, 2);
  const auto num = numeric_eigensystem(build_linear_system(dp));
  const auto ana = analytic_eigensystem(dp);
  EigenGap g;
  for (int k = 0; k < 5; ++k) {
    const auto a = ana[k].lambda, n = num[k].lambda;
    const double re = std::abs(n.real() - a.real()) / std::abs(n.real()) / eps2;
    if (re > g.re) g.re = re, g.re_mode = k + 1;
    if (a.imag() != 0.0) {
      const double im = std::abs(n.imag() - a.imag()) / std::abs(n.imag()) / eps2;
      if (im > g.im) g.im = im, g.im_mode = k + 1;
    }
  }
  return g;
}

Verdict eigen_oracle() {
  Verdict v;
  std::mt19937_64 rng(2);
  EigenGap worst;
  OperatingPoint worst_re_op, worst_im_op;
  int sets = 0;
  while (sets < 50) {
    const OperatingPoint op = oracle::random_point(rng, 0.01, 0.1);
    const DerivedParams dp = derive(from_operating_point(op));
    if (!dp.polarization_stable()) continue;
    ++sets;
    const EigenGap g = eigen_gap(dp);
    if (g.re > worst.re) worst.re = g.re, worst.re_mode = g.re_mode, worst_re_op = op;
    if (g.im > worst.im) worst.im = g.im, worst.im_mode = g.im_mode, worst_im_op = op;
  }
  v.check(worst.re <= 5.0, "worst real-part error = %.3f (gamma/nu)^2 (<= 5), mode %d, over %d sets",
          worst.re, worst.re_mode, sets);
  v.check(worst.im <= 2.0, "worst imaginary-part error = %.3f (gamma/nu)^2 (<= 2), mode %d", worst.im,
          worst.im_mode);
  for (const auto* op : {&worst_re_op, &worst_im_op}) {
    OperatingPoint finer = *op;
    finer.nu_over_gamma *= 4.0;
    const EigenGap a = eigen_gap(derive(from_operating_point(*op)));
    const EigenGap b = eigen_gap(derive(from_operating_point(finer)));
    v.info("x=%.2f r=%.2f rho=%.2f theta=%.2f alpha=%.2f nu/gamma=%.1f: coefficients re %.2f im %.2f; "
           "at 4x nu: re %.2f im %.2f",
           op->x, op->r, op->rho, op->theta, op->alpha, op->nu_over_gamma, a.re, a.im, b.re, b.im);
  }
  return v;
}

// 3. The eigen-dyad covariance solves the Lyapunov equation.
Verdict lyapunov() {
  Verdict v;
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int n = 0; n < 20; ++n) {
    const DerivedParams dp = derive(from_operating_point(oracle::random_point(rng, 0.01, 0.1)));
    const LinearSystemd sys = build_linear_system(dp);
    const Matrix5<double> F = fluctuation_matrix(sys, numeric_eigensystem(sys), 0.0);
    const Matrix5<double> R = sys.drift * F + F * sys.drift.transpose() + sys.diffusion;
    const Matrix5<double> absA = sys.drift.cwiseAbs(), absF = F.cwiseAbs();
    const Matrix5<double> scale = absA * absF + absF * absA.transpose() + sys.diffusion.cwiseAbs();
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        if (scale(i, j) > 0.0) worst = std::max(worst, std::abs(R(i, j)) / scale(i, j));
      }
    }
  }
  v.check(worst < 1e-8, "worst componentwise residual = %.2e (< 1e-8) over 20 sets", worst);
  return v;
}

// 4. Closed forms at the reference point and the implied direction spread.
Verdict closed_forms() {
  Verdict v;
  const DerivedParams dp = derive(reference_laser(10.0));
  const CorrelationRecord rec = analytic_correlators(dp, {0.0});
  v.check(rel(rec.value.p3p3[0], 0.0025) < 1e-12, "<P3P3>(0) = %.6g (0.0025)", rec.value.p3p3[0]);
  v.check(rel(rec.value.p3p2[0], 0.005) < 1e-12, "<P3P2>(0) = %.6g (0.005)", rec.value.p3p2[0]);
  v.check(rel(rec.value.p2p2[0], 0.0225) < 1e-12, "<P2P2>(0) = %.6g (0.0225)", rec.value.p2p2[0]);
  const PolarizationSpread spread = polarization_spread(rec);
  v.check(spread.direction_std_deg >= 3.0 && spread.direction_std_deg <= 7.0,
          "direction spread = %.3f deg (in [3, 7])", spread.direction_std_deg);
  return v;
}

struct Run {
  StreamedEstimate estimate;
  Fits fits;
  double seconds = 0.0;
};

Run simulate_and_fit(const LaserParams& p, double dt, double duration, int members, double lag_step,
                     const PolarizationFilter* filter) {
  NoiseConfig cfg;
  cfg.seed = kSeed;
  cfg.dt = dt;
  cfg.duration = duration;
  cfg.ensemble_size = members;
  const auto start = std::chrono::steady_clock::now();
  Run run;
  run.estimate = estimate_from_simulation(p, cfg, 3.0, lag_step, filter);
  run.fits = fit_all(run.estimate.record);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

// 5. Monte Carlo against the closed forms, where they apply (gamma/nu = 0.01).
Verdict monte_carlo(const Run& run) {
  Verdict v;
  const DerivedParams dp = derive(reference_laser(100.0));
  const CorrelationRecord& rec = run.estimate.record;
  const CorrelationRecord closed = analytic_correlators(dp, {0.0});
  v.info("gamma/nu = 0.01, %zu samples, %.1f s", run.estimate.samples, run.seconds);
  fit_status(v, run.fits);
  const auto amp = [&](const char* name, double value, double expected) {
    v.check(rel(value, expected) < 0.05, "%s(0) = %.6g vs %.6g (%.1f%%, < 5%%)", name, value,
            expected, 100.0 * rel(value, expected));
  };
  amp("dn dn/n_s^2", rec.value.dn_dn_rel[0], closed.value.dn_dn_rel[0]);
  amp("P3P3", rec.value.p3p3[0], closed.value.p3p3[0]);
  amp("P3P2", rec.value.p3p2[0], closed.value.p3p2[0]);
  amp("P2P2", rec.value.p2p2[0], closed.value.p2p2[0]);

  const double x = dp.x, u = dp.polarization_fast_rate(), s = dp.polarization_slow_rate();
  const Fits& f = run.fits;
  const auto rate = [&](const char* name, double value, double expected) {
    v.check(rel(value, expected) < 0.10, "%s = %.4f vs %.4f (%.1f%%, < 10%%)", name, value,
            expected, 100.0 * rel(value, expected));
  };
  rate("intensity decay", f.intensity.decay, x / 2.0);
  rate("P3P3 decay", f.ellipticity.decay, u / 2.0);
  rate("P2P2 oscillation decay", f.direction.decay, u / 2.0);
  rate("P2P2 slow decay", f.direction.slow_decay, s);
  rate("P3P2 oscillation decay", f.cross.decay, u / 2.0);
  rate("P3P2 slow decay", f.cross.slow_decay, s);

  const double nu = dp.nu_scaled();
  for (const auto& [name, fit] : {std::pair{"intensity", &f.intensity}, {"P3P3", &f.ellipticity},
                                  {"P3P2", &f.cross}}) {
    v.check(rel(fit->frequency, nu) < 0.02, "%s frequency = %.3f vs nu = %.3f (< 2%%)", name,
            fit->frequency, nu);
  }
  const double period = 2.0 * std::numbers::pi / nu;
  const RatioEstimate ratio = cross_ratio(rec, period);
  v.check(rel(ratio.value, dp.alpha) < 0.05, "<P3P2>/<P3P3> over the first period = %.4f +- %.4f vs alpha = %.1f",
          ratio.value, ratio.se, dp.alpha);
  return v;
}

// 6. Intensity minus polarization oscillation frequency at the reference point.
Verdict splitting(const Run& run) {
  Verdict v;
  const DerivedParams dp = derive(reference_laser(10.0));
  v.info("gamma/nu = 0.1, %zu samples, %.1f s", run.estimate.samples, run.seconds);
  fit_status(v, run.fits);
  const FitResult& n = run.fits.intensity;
  const FitResult& e = run.fits.ellipticity;
  const double measured = n.frequency - e.frequency;
  const double se = std::hypot(n.frequency_se, e.frequency_se);
  const double expected = splitting_scaled(dp.x, dp.r, dp.rho, dp.theta, dp.alpha, dp.nu_scaled());
  v.check(measured < 0.0, "splitting sign: %.4f gamma (negative expected)", measured);
  v.check(rel(measured, expected) < 0.25, "splitting = %.4f +- %.4f gamma vs %.4f (%.1f%%, < 25%%)",
          measured, se, expected, 100.0 * rel(measured, expected));
  return v;
}

// 7. Fits to parameters and back at the reference point.
Verdict round_trip(const Run& run) {
  Verdict v;
  const DerivedParams dp = derive(reference_laser(10.0));
  InversionInput in;
  in.intensity = run.fits.intensity;
  in.ellipticity = run.fits.ellipticity;
  in.direction = run.fits.direction;
  in.cross = run.fits.cross;
  in.x = dp.x;
  in.time_unit = run.estimate.record.time_unit;
  RecoveredParams rec;
  try {
    rec = invert_parameters(in);
  } catch (const Error& e) {
    v.check(false, "inversion failed: %s", e.what());
    return v;
  }
  v.check(rec.status == InversionStatus::ok, "inversion status %s", to_string(rec.status));
  const auto cmp = [&](const char* name, const Measured& m, double truth, double tol) {
    v.check(rel(m.value, truth) < tol, "%s = %.5g +- %.2g vs %.5g (%.1f%%, < %.0f%%)", name, m.value,
            m.se, truth, 100.0 * rel(m.value, truth), 100.0 * tol);
  };
  cmp("gamma [1/s]", rec.gamma, dp.gamma, 0.15);
  cmp("nu [rad/s]", rec.nu, dp.nu, 0.15);
  cmp("alpha", rec.alpha, dp.alpha, 0.15);
  cmp("rho+theta", rec.slow_rate, dp.polarization_slow_rate(), 0.15);
  cmp("x+r+rho-theta", rec.fast_rate, dp.polarization_fast_rate(), 0.15);
  cmp("r", rec.r, dp.r, 0.25);
  cmp("rho", rec.rho, dp.rho, 0.25);
  cmp("theta", rec.theta, dp.theta, 0.25);
  v.info("A = %.4g, nu consistency %.3g, ellipticity ratio %.3f", rec.A.value, rec.nu_consistency,
         rec.ellipticity_ratio);
  return v;
}

// 8. Right-circular filtered intensity against half the summed noises.
Verdict filtered(const Run& run) {
  Verdict v;
  const FilteredIntensity& fi = run.estimate.filtered;
  const double expected = 0.5 * (0.005 + 0.0025);
  const double z0 = (fi.relative[0] - expected) / fi.relative_se[0];
  v.check(std::abs(z0) < 2.0, "relative noise(0) = %.5f +- %.5f vs %.5f (z = %.1f, < 2)",
          fi.relative[0], fi.relative_se[0], expected, z0);
  const auto within = [&](const std::vector<double>& r, const std::vector<double>& se) {
    std::size_t good = 0;
    for (std::size_t k = 0; k < r.size(); ++k) good += std::abs(r[k]) < 2.0 * se[k];
    return static_cast<double>(good) / static_cast<double>(r.size());
  };
  const double avg = within(fi.average_residual, fi.average_residual_se);
  v.check(avg >= 0.95, "relative - (<nn>/n_s^2 + <pp>)/2 within 2 SE at %.1f%% of %zu lags (>= 95%%)",
          100.0 * avg, fi.tau.size());
  v.info("residual at 0: %.5f +- %.5f", fi.average_residual[0], fi.average_residual_se[0]);
  v.info("relative - (<nn>/n_s^2 + <pp>) within 2 SE at %.1f%% of lags",
         100.0 * within(fi.sum_residual, fi.sum_residual_se));
  return v;
}

// 9. No equal-time correlation between intensity and polarization.
Verdict decoupling(const Run& run) {
  Verdict v;
  const CorrelationRecord& rec = run.estimate.record;
  const double z2 = rec.dn_p2[0] / rec.dn_p2_se[0];
  const double z3 = rec.dn_p3[0] / rec.dn_p3_se[0];
  v.check(std::abs(z2) < 2.0, "<dn P2>(0)/n_s = %.3g +- %.2g (z = %.2f, < 2)", rec.dn_p2[0],
          rec.dn_p2_se[0], z2);
  v.check(std::abs(z3) < 2.0, "<dn P3>(0)/n_s = %.3g +- %.2g (z = %.2f, < 2)", rec.dn_p3[0],
          rec.dn_p3_se[0], z3);
  return v;
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int id, const char* name, const Verdict& v) {
    std::printf("%s %d %s\n", v.pass ? "PASS" : "FAIL", id, name);
    for (const auto& line : v.lines) std::printf("       %s\n", line.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  };
  const auto guarded = [](const std::function<Verdict()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      Verdict v;
      v.check(false, "threw: %s", e.what());
      return v;
    }
  };

  report(1, "stationarity and norm", guarded(stationarity));
  report(2, "eigenvalues vs leading order", guarded(eigen_oracle));
  report(3, "Lyapunov consistency", guarded(lyapunov));
  report(4, "closed forms at the reference point", guarded(closed_forms));

  // gamma/nu = 0.01: dt resolves the 2 pi/100 period with ~30 samples.
  Run fine;
  Verdict fine_error;
  try {
    fine = simulate_and_fit(reference_laser(100.0), 0.002, 10000.0, 4, 0.004, nullptr);
  } catch (const std::exception& e) {
    fine_error.check(false, "simulation threw: %s", e.what());
  }
  report(5, "Monte Carlo vs closed forms",
         fine_error.pass ? guarded([&] { return monte_carlo(fine); }) : fine_error);

  PolarizationFilter right;
  Run coarse;
  Verdict coarse_error;
  try {
    coarse = simulate_and_fit(reference_laser(10.0), 0.02, 100000.0, 4, 0.02, &right);
  } catch (const std::exception& e) {
    coarse_error.check(false, "simulation threw: %s", e.what());
  }
  report(6, "frequency splitting",
         coarse_error.pass ? guarded([&] { return splitting(coarse); }) : coarse_error);
  report(7, "round-trip inversion",
         coarse_error.pass ? guarded([&] { return round_trip(coarse); }) : coarse_error);
  report(8, "filtered-intensity identity",
         coarse_error.pass ? guarded([&] { return filtered(coarse); }) : coarse_error);
  report(9, "intensity-polarization decoupling",
         fine_error.pass ? guarded([&] { return decoupling(fine); }) : fine_error);

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
