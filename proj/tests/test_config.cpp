#include <doctest.h>

#include <string>

#include "vcsel/config.hpp"

using namespace vcsel;

namespace {

ErrorCode code_of(const std::string& text, std::string* message = nullptr) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  FAIL("expected a configuration error");
  return ErrorCode::io;
}

const char* kLaser = R"({"laser": {"kappa2_per_s": 1e12, "gamma_per_s": 1e10,
  "Gamma_per_s": 3e10, "w2_per_s": 2e6, "alpha": 2, "x": 2,
  "Omega_rad_per_s": [1e10, 0, 0]}})";

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("shipped reference configuration") {
    const RunConfig c = load_config(VCSEL_SOURCE_DIR "/configs/reference.json");
    const DerivedParams dp = derive(c.laser);
    CHECK(dp.x == doctest::Approx(2.0));
    CHECK(dp.theta == doctest::Approx(2.0));
    CHECK(dp.nu_scaled() == doctest::Approx(10.0));
    CHECK(c.noise.seed == 20240611u);
    CHECK(c.noise.ensemble_size == 4);
    CHECK(c.analysis.max_lag == 3.0);
    REQUIRE(c.analysis.filter.has_value());
    CHECK(c.analysis.filter->kind == FilterKind::right_circular);
  }

  TEST_CASE("shipped physical configuration") {
    const RunConfig c = load_config(VCSEL_SOURCE_DIR "/configs/physical.json");
    const DerivedParams dp = derive(c.laser);
    CHECK(dp.x == doctest::Approx(2.0));
    CHECK(dp.r == doctest::Approx(2.0));
    CHECK(dp.theta == doctest::Approx(2.0));
  }

  TEST_CASE("laser block with x") {
    const RunConfig c = parse_config(kLaser);
    CHECK(derive(c.laser).x == doctest::Approx(2.0));
    CHECK(c.noise.mode == SimulationMode::linearized);
    CHECK(c.format == SeriesFormat::csv);
    CHECK(c.output_directory.empty());
  }

  TEST_CASE("x = 1 is accepted and sits at threshold") {
    std::string text = kLaser;
    text.replace(text.find("\"x\": 2"), 6, "\"x\": 1");
    const RunConfig c = parse_config(text);
    CHECK_FALSE(derive(c.laser).lasing());
  }

  TEST_CASE("missing injection is a schema error naming the field") {
    std::string text = kLaser;
    text.replace(text.find(", \"x\": 2"), 8, "");
    std::string msg;
    CHECK(code_of(text, &msg) == ErrorCode::schema);
    CHECK(msg.find("laser.D0") != std::string::npos);
  }

  TEST_CASE("both injections are rejected") {
    std::string text = kLaser;
    text.replace(text.find("\"x\": 2"), 6, "\"x\": 2, \"D0\": 1e8");
    CHECK(code_of(text) == ErrorCode::schema);
  }

  TEST_CASE("unknown keys are rejected with their path") {
    std::string msg;
    CHECK(code_of(R"({"operating_point": {"gamma_per_s": 1e10, "x": 2, "r": 2, "rho": 2,
      "theta": 2, "alpha": 2, "nu_over_gamma": 10, "A": 0.01},
      "simulation": {"sead": 1}})", &msg) == ErrorCode::schema);
    CHECK(msg.find("simulation.sead") != std::string::npos);
  }

  TEST_CASE("malformed JSON reports the line") {
    std::string msg;
    CHECK(code_of("{\n  \"laser\": {\n    \"x\": 2,,\n  }\n}", &msg) == ErrorCode::schema);
    CHECK(msg.find("line 3") != std::string::npos);
  }

  TEST_CASE("invalid values") {
    CHECK(code_of(std::string(kLaser).insert(1, "\"simulation\": {\"mode\": \"fast\"}, ")) ==
          ErrorCode::schema);
    CHECK(code_of(std::string(kLaser).insert(1, "\"simulation\": {\"ensemble_size\": 0}, ")) ==
          ErrorCode::schema);
    CHECK(code_of(std::string(kLaser).insert(1, "\"analysis\": {\"lag_step\": 9}, ")) ==
          ErrorCode::schema);
    CHECK(code_of(R"({"laser": {"kappa2_per_s": -1, "gamma_per_s": 1e10, "Gamma_per_s": 3e10,
      "w2_per_s": 2e6, "x": 2}})") == ErrorCode::schema);
    CHECK(code_of(R"({"laser": {"kappa2_per_s": 1e12, "gamma_per_s": 1e10, "Gamma_per_s": 3e10,
      "w2_per_s": 2e6, "x": 2, "Omega_rad_per_s": [1, 2]}})") == ErrorCode::schema);
  }

  TEST_CASE("filter and output blocks") {
    const RunConfig c = parse_config(std::string(kLaser).insert(
        1, R"("analysis": {"filter": {"kind": "linear", "angle_deg": 45}}, "output": {"directory": "o"}, )"));
    REQUIRE(c.analysis.filter.has_value());
    CHECK(c.analysis.filter->kind == FilterKind::linear);
    CHECK(c.analysis.filter->angle == doctest::Approx(std::numbers::pi / 4));
    CHECK(c.output_directory == "o");
  }
}
