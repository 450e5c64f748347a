#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "vcsel/params.hpp"

using namespace vcsel;

namespace {

LaserParams reference_laser() {
  LaserParams p;
  p.kappa2 = 1e12;
  p.gamma = 1e10;
  p.Gamma = 3e10;
  p.w2 = 2e6;
  p.alpha = 2.0;
  p.D0 = injection_for_x(p, 2.0);
  return p;
}

}  // namespace

TEST_SUITE("params") {
  TEST_CASE("noise magnitude and photon number at the reference rates") {
    const DerivedParams dp = derive(reference_laser());
    CHECK(dp.A == doctest::Approx(0.01).epsilon(1e-14));
    CHECK(dp.x == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(dp.n_s == doctest::Approx(1e4).epsilon(1e-12));
    CHECK(dp.nu == doctest::Approx(1e11).epsilon(1e-14));
    CHECK(dp.D_s == doctest::Approx(1e6).epsilon(1e-14));
    CHECK(dp.r == doctest::Approx(2.0));
  }

  TEST_CASE("threshold injection gives x = 1 and nu = 0") {
    LaserParams p = reference_laser();
    p.D0 = p.loss_rate() / p.emission_rate();
    const DerivedParams dp = derive(p);
    CHECK(dp.x == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(dp.n_s == doctest::Approx(0.0));
    CHECK(dp.nu == 0.0);
    CHECK_FALSE(dp.lasing());
    CHECK_THROWS_AS(require_lasing(dp), Error);
  }

  TEST_CASE("frequency anisotropy sets theta") {
    LaserParams p = reference_laser();
    p.Omega = AnisotropyVector::along_e1(1e10);
    CHECK(derive(p).theta == doctest::Approx(2.0));
  }

  TEST_CASE("isotropic parameters give rho = theta = 0") {
    const DerivedParams dp = derive(reference_laser());
    CHECK(dp.rho == 0.0);
    CHECK(dp.theta == 0.0);
  }

  TEST_CASE("derive is covariant under a common rate scale") {
    LaserParams p = reference_laser();
    p.g = AnisotropyVector::along_e1(0.02);
    p.l = AnisotropyVector::along_e1(-0.01);
    p.Omega = AnisotropyVector::along_e1(3e9);
    const DerivedParams a = derive(p);
    for (double c : {0.1, 7.0, 1e3}) {
      LaserParams q = p;
      q.kappa2 *= c;
      q.gamma *= c;
      q.Gamma *= c;
      q.w2 *= c;
      q.Omega.components *= c;
      const DerivedParams b = derive(q);
      CHECK(b.x == doctest::Approx(a.x).epsilon(1e-13));
      CHECK(b.rho == doctest::Approx(a.rho).epsilon(1e-13));
      CHECK(b.theta == doctest::Approx(a.theta).epsilon(1e-13));
      CHECK(b.r == doctest::Approx(a.r).epsilon(1e-13));
      CHECK(b.A == doctest::Approx(a.A).epsilon(1e-13));
      CHECK(b.nu == doctest::Approx(c * a.nu).epsilon(1e-13));
    }
  }

  TEST_CASE("invalid parameters are rejected") {
    LaserParams p = reference_laser();
    SUBCASE("negative rate") { p.gamma = -1.0; }
    SUBCASE("Gamma below gamma") { p.Gamma = 0.5 * p.gamma; }
    SUBCASE("negative alpha") { p.alpha = -0.1; }
    SUBCASE("gain anisotropy of unit norm") { p.g = AnisotropyVector(0.6, 0.8, 0.0); }
    SUBCASE("loss anisotropy above one") { p.l = AnisotropyVector::along_e1(1.2); }
    try {
      p.validate();
      FAIL("validate accepted invalid parameters");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_parameters);
    }
  }

  TEST_CASE("off-axis anisotropy is not aligned") {
    LaserParams p = reference_laser();
    p.Omega = AnisotropyVector(1e9, 1e8, 0.0);
    try {
      derive(p);
      FAIL("derive accepted an off-axis anisotropy");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::anisotropy_not_aligned);
    }
  }

  TEST_CASE("nondimensionalize divides by gamma") {
    LaserParams p = reference_laser();
    p.Omega = AnisotropyVector::along_e1(1e10);
    const auto s = nondimensionalize(p);
    CHECK(s.kappa2 == doctest::Approx(100.0));
    CHECK(s.Omega.x() == doctest::Approx(1.0));
    CHECK(s.time_unit == doctest::Approx(1e-10));
  }

  TEST_CASE("long double round trip is bit exact") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
      const LaserParams p = from_operating_point(oracle::random_point(rng));
      const LaserParams q = redimensionalize(nondimensionalize<long double>(p));
      CHECK(q.kappa2 == p.kappa2);
      CHECK(q.gamma == p.gamma);
      CHECK(q.Gamma == p.Gamma);
      CHECK(q.w2 == p.w2);
      CHECK(q.alpha == p.alpha);
      CHECK(q.D0 == p.D0);
      CHECK(q.g.components == p.g.components);
      CHECK(q.l.components == p.l.components);
      CHECK(q.Omega.components == p.Omega.components);
    }
  }

  TEST_CASE("operating point reproduces its dimensionless parameters") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
      const OperatingPoint op = oracle::random_point(rng);
      const DerivedParams dp = derive(from_operating_point(op));
      CHECK(dp.x == doctest::Approx(op.x).epsilon(1e-12));
      CHECK(dp.r == doctest::Approx(op.r).epsilon(1e-12));
      CHECK(dp.rho == doctest::Approx(op.rho).epsilon(1e-9));
      CHECK(dp.theta == doctest::Approx(op.theta).epsilon(1e-12));
      CHECK(dp.A == doctest::Approx(op.A).epsilon(1e-12));
      CHECK(dp.nu_scaled() == doctest::Approx(op.nu_over_gamma).epsilon(1e-12));
    }
  }
}
