#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "vcsel/linear.hpp"

using namespace vcsel;

namespace {

DerivedParams reference(double nu_over_gamma = 10.0) {
  OperatingPoint op;
  op.nu_over_gamma = nu_over_gamma;
  return derive(from_operating_point(op));
}

std::vector<std::complex<double>> sorted(std::vector<std::complex<double>> v) {
  std::sort(v.begin(), v.end(), [](auto a, auto b) {
    return a.imag() != b.imag() ? a.imag() < b.imag() : a.real() < b.real();
  });
  return v;
}

}  // namespace

TEST_SUITE("linear") {
  TEST_CASE("drift and diffusion entries at the reference point") {
    const DerivedParams dp = reference();
    const LinearSystemd sys = build_linear_system(dp);
    // Scaled by gamma = 1e10/s: 2e16/s and 2e8/s.
    CHECK(sys.diffusion(idx::dn, idx::dn) * dp.gamma == doctest::Approx(2e16).epsilon(1e-12));
    CHECK(sys.diffusion(idx::P2, idx::P2) * dp.gamma == doctest::Approx(2e8).epsilon(1e-12));
    CHECK(sys.diffusion(idx::P3, idx::P3) == sys.diffusion(idx::P2, idx::P2));
    CHECK(sys.drift(idx::dD, idx::dD) == doctest::Approx(-dp.x));
    const double nu = dp.nu_scaled();
    CHECK(sys.drift(idx::dD, idx::dn) == doctest::Approx(-nu * nu / (dp.x - 1.0)).epsilon(1e-12));
    CHECK(sys.drift(idx::P3, idx::P2) == doctest::Approx(dp.theta / dp.alpha));
    CHECK(sys.drift(idx::P2, idx::P3) == doctest::Approx(-dp.theta / dp.alpha));
    CHECK(sys.drift(idx::P2, idx::d) ==
          doctest::Approx(-dp.emission_rate / dp.gamma * dp.alpha));
    // Off-block entries are structurally zero; N is diagonal.
    CHECK(sys.drift.block<2, 3>(0, 2).isZero(0.0));
    CHECK(sys.drift.block<3, 2>(2, 0).isZero(0.0));
    CHECK(Matrix5<double>(sys.diffusion.diagonal().asDiagonal()) == sys.diffusion);
  }

  TEST_CASE("isotropic limit leaves P2 undamped") {
    OperatingPoint op;
    op.rho = 0.0;
    op.theta = 0.0;
    op.r = 0.0;
    const LinearSystemd sys = build_linear_system(derive(from_operating_point(op)));
    CHECK(sys.drift(idx::P2, idx::P2) == 0.0);
    CHECK(sys.drift(idx::d, idx::d) == doctest::Approx(-2.0));
  }

  TEST_CASE("below threshold has no linear system") {
    LaserParams p = from_operating_point({});
    p.D0 = 0.5 * p.loss_rate() / p.emission_rate();
    CHECK_THROWS_AS(build_linear_system(derive(p)), Error);
  }

  TEST_CASE("leading-order eigensystem at the figure point") {
    const auto es = analytic_eigensystem(reference());
    CHECK(es[2].lambda.real() == doctest::Approx(-4.0));
    CHECK(es[3].lambda.real() == doctest::Approx(-2.0));
    CHECK(es[0].lambda == std::complex<double>(-1.0, 10.0));
    const double h = 1.0 / std::sqrt(2.0);
    CHECK(es[3].b(idx::P2).real() == doctest::Approx(2.0 * h));
    CHECK(es[3].b(idx::P3).real() == doctest::Approx(h));
    CHECK(es[2].a(idx::P3).real() == doctest::Approx(-2.0));
  }

  TEST_CASE("printed eigenvectors are biorthonormal to leading order") {
    for (double nu : {10.0, 100.0}) {
      const auto es = analytic_eigensystem(reference(nu));
      double worst = 0.0;
      for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
          const std::complex<double> ab = (es[i].a * es[j].b)(0, 0);
          worst = std::max(worst, std::abs(ab - (i == j ? 1.0 : 0.0)));
        }
      }
      CHECK(worst < 1e-12);
    }
  }

  TEST_CASE("numeric eigensystem matches a general eigensolver") {
    std::mt19937_64 rng(21);
    for (int n = 0; n < 50; ++n) {
      const DerivedParams dp = derive(from_operating_point(oracle::random_point(rng, 0.01, 0.5)));
      const LinearSystemd sys = build_linear_system(dp);
      const auto es = numeric_eigensystem(sys);
      std::vector<std::complex<double>> mine;
      for (const auto& t : es) mine.push_back(t.lambda);
      const auto ref = sorted(oracle::eigenvalues<5>(sys.drift));
      mine = sorted(mine);
      for (int k = 0; k < 5; ++k) {
        CHECK(std::abs(mine[k] - ref[k]) <= 1e-9 * std::abs(ref[k]));
      }
      CHECK(eigen_residual(sys, es) < 1e-10);
      for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
          const std::complex<double> ab = (es[i].a * es[j].b)(0, 0);
          CHECK(std::abs(ab - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
      }
      CHECK(es[1].lambda == std::conj(es[0].lambda));
      if (es[3].lambda.imag() != 0.0) CHECK(es[4].lambda == std::conj(es[3].lambda));
      CHECK(es[0].lambda.real() == sys.drift.block<2, 2>(0, 0).trace() / 2.0);
    }
  }

  TEST_CASE("slow polarization eigenvalue is second order in gamma/nu") {
    for (double nu : {10.0, 30.0, 100.0}) {
      OperatingPoint op;
      op.nu_over_gamma = nu;
      op.theta = 0.7;
      op.rho = 1.3;
      op.r = 0.5;
      const DerivedParams dp = derive(from_operating_point(op));
      const auto es = numeric_eigensystem(build_linear_system(dp));
      const double rel = std::abs(es[2].lambda.real() + 2.0) / 2.0;
      CHECK(rel <= 5.0 / (nu * nu));
    }
  }

  TEST_CASE("Lyapunov oracle agrees with the eigen-dyad sum") {
    std::mt19937_64 rng(22);
    for (int n = 0; n < 20; ++n) {
      const DerivedParams dp = derive(from_operating_point(oracle::random_point(rng, 0.01, 0.3)));
      const LinearSystemd sys = build_linear_system(dp);
      const auto es = numeric_eigensystem(sys);
      const auto Fc = fluctuation_matrix_complex(sys, es, 0.0);
      const Matrix5<double> F = Fc.real();
      const Matrix5<double> ref = oracle::lyapunov<5>(sys.drift, sys.diffusion);
      // Compare block by block: photon and polarization variances differ by ~1e12.
      for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
          const double scale = std::sqrt(std::abs(ref(i, i) * ref(j, j)));
          CHECK(std::abs(F(i, j) - ref(i, j)) <= 1e-8 * scale + 1e-300);
        }
      }
      CHECK(Fc.imag().cwiseAbs().maxCoeff() <= 1e-10 * F.cwiseAbs().maxCoeff());
      CHECK((F - F.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * F.cwiseAbs().maxCoeff());
      for (int i = 0; i < 5; ++i) CHECK(F(i, i) >= 0.0);
    }
  }

  TEST_CASE("intensity and polarization blocks do not correlate") {
    const DerivedParams dp = reference();
    const LinearSystemd sys = build_linear_system(dp);
    const auto es = numeric_eigensystem(sys);
    for (double tau : {0.0, 0.3, 1.7}) {
      const Matrix5<double> F = fluctuation_matrix(sys, es, tau);
      CHECK(F.block<2, 3>(0, 2).isZero(0.0));
      CHECK(F.block<3, 2>(2, 0).isZero(0.0));
    }
  }

  TEST_CASE("closed-form correlators at the figure point") {
    const DerivedParams dp = reference();
    const auto rec = analytic_correlators(dp, lag_grid(3.0, 0.01));
    CHECK(rec.value.p3p3[0] == doctest::Approx(0.0025).epsilon(1e-14));
    CHECK(rec.value.p3p2[0] == doctest::Approx(0.005).epsilon(1e-14));
    CHECK(rec.value.p2p2[0] == doctest::Approx(0.0225).epsilon(1e-14));
    CHECK(rec.value.dn_dn_rel[0] == doctest::Approx(0.005).epsilon(1e-14));
    CHECK(rec.value.dn_dn_abs[0] == doctest::Approx(0.005 * 1e8).epsilon(1e-12));
    CHECK(rec.value.dn_dn_rel[0] / dp.A == doctest::Approx(1.0 / (dp.x * (dp.x - 1.0))));
    for (std::size_t k = 0; k < rec.size(); ++k) {
      CHECK(rec.value.p3p2[k] == doctest::Approx(2.0 * rec.value.p3p3[k]).epsilon(1e-14));
    }
    const double direction_deg = 0.5 * std::sqrt(rec.value.p2p2[0]) * 180.0 / std::numbers::pi;
    CHECK(direction_deg == doctest::Approx(4.297).epsilon(1e-3));
  }

  TEST_CASE("closed forms reject unstable polarization") {
    OperatingPoint op;
    op.rho = -3.0;
    op.theta = 2.0;
    const DerivedParams dp = derive(from_operating_point(op));
    try {
      analytic_correlators(dp, {0.0});
      FAIL("expected UnstablePolarization");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::unstable_polarization);
    }
    const LinearSystemd sys = build_linear_system(dp);
    try {
      fluctuation_matrix(sys, numeric_eigensystem(sys), 0.0);
      FAIL("expected UnstableSystem");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::unstable_system);
    }
  }

  TEST_CASE("diagonal sum over printed eigenvectors gives the closed forms") {
    std::mt19937_64 rng(23);
    for (int n = 0; n < 10; ++n) {
      const DerivedParams dp = derive(from_operating_point(oracle::random_point(rng)));
      const LinearSystemd sys = build_linear_system(dp);
      const auto tau = lag_grid(2.0, 0.05);
      const auto diag = linear_correlators(sys, analytic_eigensystem(dp), tau,
                                           FluctuationMode::diagonal);
      const auto closed = analytic_correlators(dp, tau);
      const auto close = [](const std::vector<double>& a, const std::vector<double>& b) {
        double worst = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
          worst = std::max(worst, std::abs(a[k] - b[k]) / std::abs(b[0]));
        }
        return worst;
      };
      CHECK(close(diag.value.dn_dn_rel, closed.value.dn_dn_rel) < 1e-12);
      CHECK(close(diag.value.dn_dn_abs, closed.value.dn_dn_abs) < 1e-12);
      CHECK(close(diag.value.p3p3, closed.value.p3p3) < 1e-12);
      CHECK(close(diag.value.p3p2, closed.value.p3p2) < 1e-12);
      CHECK(close(diag.value.p2p2, closed.value.p2p2) < 1e-12);
    }
  }

  TEST_CASE("full and diagonal sums differ at first order in gamma/nu") {
    std::vector<double> gaps;
    for (double nu : {10.0, 100.0}) {
      const DerivedParams dp = reference(nu);
      const LinearSystemd sys = build_linear_system(dp);
      const auto es = numeric_eigensystem(sys);
      const auto full = linear_correlators(sys, es, {0.0});
      const auto diag = linear_correlators(sys, es, {0.0}, FluctuationMode::diagonal);
      const double gap = std::abs(full.value.p2p2[0] - diag.value.p2p2[0]) / diag.value.p2p2[0];
      CHECK(gap <= 5.0 / nu);
      gaps.push_back(gap);
    }
    CHECK(gaps[1] < gaps[0] / 5.0);
  }

  TEST_CASE("direction variance falls as the slow damping grows") {
    double previous = INFINITY;
    for (double rho : {0.5, 1.0, 2.0, 4.0, 8.0}) {
      OperatingPoint op;
      op.rho = rho;
      const DerivedParams dp = derive(from_operating_point(op));
      const double v = analytic_correlators(dp, {0.0}).value.p2p2[0];
      CHECK(v < previous);
      previous = v;
    }
  }

  TEST_CASE("frequency splitting formulas") {
    const DerivedParams dp = reference();
    const FrequencySplitting s = frequency_splitting(dp);
    CHECK(s.nu_n_minus_nu_P == doctest::Approx(-1e9).epsilon(1e-12));
    CHECK(s.delta_lambda[1] == -s.delta_lambda[0]);
    CHECK(s.delta_lambda[4] == -s.delta_lambda[3]);
    CHECK(s.delta_lambda[2] == 0.0);
    CHECK(s.perturbative);
    CHECK(splitting_scaled(2.0, 1.5, 1.5, 0.0, 2.0, 10.0) == 0.0);
  }

  TEST_CASE("splitting formula tracks the exact eigenvalues") {
    std::vector<double> errors;
    for (double nu : {10.0, 1.0 / 0.03}) {
      OperatingPoint op;
      op.nu_over_gamma = nu;
      op.r = 1.0;
      op.rho = 1.5;
      op.theta = 0.7;
      op.alpha = 1.5;
      const DerivedParams dp = derive(from_operating_point(op));
      const auto es = numeric_eigensystem(build_linear_system(dp));
      const double exact = es[0].lambda.imag() - es[3].lambda.imag();
      const double predicted = frequency_splitting(dp).nu_n_minus_nu_P_scaled;
      errors.push_back(std::abs(exact - predicted) / std::abs(predicted));
    }
    CHECK(errors[0] < 0.2);
    CHECK(errors[1] < 0.2 * errors[0]);
  }

  TEST_CASE("transition covariance matches the stationary identity") {
    const DerivedParams dp = reference();
    const LinearSystemd sys = build_linear_system(dp);
    const auto es = numeric_eigensystem(sys);
    const Matrix5<double> F0 = fluctuation_matrix(sys, es, 0.0);
    for (double dt : {1e-5, 0.01, 0.5}) {
      const Matrix5<double> M = propagator(es, dt);
      const Matrix5<double> Q = transition_covariance(sys, es, dt);
      const Matrix5<double> expected = F0 - M * F0 * M.transpose();
      for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
          const double scale = std::sqrt(F0(i, i) * F0(j, j));
          CHECK(std::abs(Q(i, j) - expected(i, j)) <= 1e-9 * scale + 1e-300);
        }
      }
    }
  }

  TEST_CASE("eigensystem JSON stores complex numbers as pairs") {
    const DerivedParams dp = reference();
    std::ostringstream os;
    write_eigensystem_json(os, numeric_eigensystem(build_linear_system(dp)), dp.gamma, "numeric");
    const auto j = nlohmann::json::parse(os.str());
    CHECK(j["modes"].size() == 5);
    CHECK(j["modes"][0]["lambda_scaled"].size() == 2);
    CHECK(j["modes"][0]["right"].size() == 5);
    CHECK(j["modes"][0]["lambda_scaled"][0].get<double>() == doctest::Approx(-1.0));
  }
}
