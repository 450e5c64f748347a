#include "vcsel/config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <json.hpp>

#include "vcsel/io.hpp"

namespace vcsel {

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::schema, field + ": " + what);
}

class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) schema_error(path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    const std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [key, value] : j_.items()) {
      if (!known.count(key)) schema_error(field(key), "unknown key");
    }
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double number(const char* key) const {
    if (!has(key)) schema_error(field(key), "required number is missing");
    return as_number(key);
  }
  double number(const char* key, double fallback) const {
    return has(key) ? as_number(key) : fallback;
  }
  std::int64_t integer(const char* key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) schema_error(field(key), "expected an integer");
    return v.get<std::int64_t>();
  }
  std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) schema_error(field(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) schema_error(field(key), "expected true or false");
    return v.get<bool>();
  }
  std::string text(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string()) schema_error(field(key), "expected a string");
    return v.get<std::string>();
  }
  AnisotropyVector vector(const char* key) const {
    if (!has(key)) return {};
    const json& v = j_.at(key);
    if (v.is_number()) return AnisotropyVector::along_e1(v.get<double>());
    if (!v.is_array() || v.size() != 3) {
      schema_error(field(key), "expected a number (e1 component) or an array of 3 numbers");
    }
    Vector3d c;
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) schema_error(field(key), "array entries must be numbers");
      c[i] = v[i].get<double>();
    }
    return AnisotropyVector(c);
  }
  Block child(const char* key) const { return Block(j_.at(key), field(key)); }

 private:
  double as_number(const char* key) const {
    const json& v = j_.at(key);
    if (!v.is_number()) schema_error(field(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) schema_error(field(key), "must be finite");
    return d;
  }

  const json& j_;
  std::string path_;
};

void require(bool ok, const Block& b, const char* key, const char* what) {
  if (!ok) schema_error(b.field(key), what);
}

LaserParams read_laser(const Block& b) {
  b.allow({"kappa2_per_s", "gamma_per_s", "Gamma_per_s", "w2_per_s", "alpha", "D0", "x", "g", "l",
           "Omega_rad_per_s"});
  LaserParams p;
  p.kappa2 = b.number("kappa2_per_s");
  p.gamma = b.number("gamma_per_s");
  p.Gamma = b.number("Gamma_per_s");
  p.w2 = b.number("w2_per_s");
  p.alpha = b.number("alpha", 0.0);
  p.g = b.vector("g");
  p.l = b.vector("l");
  p.Omega = b.vector("Omega_rad_per_s");
  if (b.has("D0") == b.has("x")) schema_error(b.field("D0"), "specify exactly one of D0 and x");
  if (b.has("x")) {
    const double x = b.number("x");
    require(x >= 0.0, b, "x", "must be >= 0");
    p.D0 = injection_for_x(p, x);
  } else {
    p.D0 = b.number("D0");
  }
  return p;
}

LaserParams read_operating_point(const Block& b) {
  b.allow({"gamma_per_s", "x", "r", "rho", "theta", "alpha", "nu_over_gamma", "A", "l"});
  OperatingPoint op;
  op.gamma = b.number("gamma_per_s");
  op.x = b.number("x");
  op.r = b.number("r");
  op.rho = b.number("rho");
  op.theta = b.number("theta");
  op.alpha = b.number("alpha");
  op.nu_over_gamma = b.number("nu_over_gamma");
  op.A = b.number("A");
  op.l = b.number("l", 0.0);
  return from_operating_point(op);
}

void read_simulation(const Block& b, RunConfig& c) {
  b.allow({"seed", "dt", "mode", "scheme", "duration", "burn_in", "ensemble_size", "sample_every",
           "frozen_noise", "threads", "format"});
  NoiseConfig& n = c.noise;
  n.seed = b.unsigned_integer("seed", n.seed);
  n.dt = b.number("dt", n.dt);
  require(n.dt >= 0.0, b, "dt", "must be >= 0 (0 selects the default step)");
  const std::string mode = b.text("mode", "linearized");
  if (mode == "linearized") n.mode = SimulationMode::linearized;
  else if (mode == "nonlinear") n.mode = SimulationMode::nonlinear;
  else schema_error(b.field("mode"), "expected \"linearized\" or \"nonlinear\"");
  const std::string scheme = b.text("scheme", "exact");
  if (scheme == "exact") n.scheme = LinearScheme::exact;
  else if (scheme == "euler_maruyama") n.scheme = LinearScheme::euler_maruyama;
  else schema_error(b.field("scheme"), "expected \"exact\" or \"euler_maruyama\"");
  n.duration = b.number("duration", n.duration);
  require(n.duration > 0.0, b, "duration", "must be > 0");
  n.burn_in = b.number("burn_in", n.burn_in);
  const auto members = b.integer("ensemble_size", n.ensemble_size);
  require(members >= 1 && members <= 1000000, b, "ensemble_size", "must be in [1, 1e6]");
  n.ensemble_size = static_cast<int>(members);
  const auto every = b.integer("sample_every", n.sample_every);
  require(every >= 1 && every <= 1000000, b, "sample_every", "must be in [1, 1e6]");
  n.sample_every = static_cast<int>(every);
  n.frozen_noise = b.boolean("frozen_noise", n.frozen_noise);
  const auto threads = b.integer("threads", n.threads);
  require(threads >= 0 && threads <= 4096, b, "threads", "must be in [0, 4096]");
  n.threads = static_cast<int>(threads);
  const std::string format = b.text("format", "csv");
  if (format == "csv") c.format = SeriesFormat::csv;
  else if (format == "binary") c.format = SeriesFormat::binary;
  else schema_error(b.field("format"), "expected \"csv\" or \"binary\"");
}

void read_analysis(const Block& b, AnalysisConfig& a) {
  b.allow({"max_lag", "lag_step", "x_known", "fit_max_tau", "filter"});
  a.max_lag = b.number("max_lag", a.max_lag);
  require(a.max_lag > 0.0, b, "max_lag", "must be > 0");
  a.lag_step = b.number("lag_step", a.lag_step);
  require(a.lag_step > 0.0 && a.lag_step <= a.max_lag, b, "lag_step", "must be in (0, max_lag]");
  a.x_known = b.number("x_known", a.x_known);
  if (b.has("x_known")) require(a.x_known > 1.0, b, "x_known", "must exceed 1");
  a.fit_max_tau = b.number("fit_max_tau", a.fit_max_tau);
  require(a.fit_max_tau > 0.0, b, "fit_max_tau", "must be > 0");
  if (b.has("filter")) {
    const Block f = b.child("filter");
    f.allow({"kind", "angle_deg"});
    PolarizationFilter filter;
    const std::string kind = f.text("kind", "right_circular");
    if (kind == "right_circular") filter.kind = FilterKind::right_circular;
    else if (kind == "left_circular") filter.kind = FilterKind::left_circular;
    else if (kind == "linear") filter.kind = FilterKind::linear;
    else schema_error(f.field("kind"), "expected right_circular, left_circular or linear");
    filter.angle = f.number("angle_deg", 0.0) * std::numbers::pi / 180.0;
    a.filter = filter;
  }
}

int line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::schema, "line " + std::to_string(line_of(text, e.byte)) +
                                       ": malformed JSON (" + e.what() + ")");
  }
  const Block top(root, "");
  top.allow({"laser", "operating_point", "simulation", "analysis", "output"});

  RunConfig c;
  if (top.has("laser") == top.has("operating_point")) {
    schema_error("laser", "specify exactly one of \"laser\" and \"operating_point\"");
  }
  try {
    c.laser = top.has("laser") ? read_laser(top.child("laser"))
                               : read_operating_point(top.child("operating_point"));
    c.laser.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_parameters) throw Error(ErrorCode::schema, e.what());
    throw;
  }
  if (top.has("simulation")) read_simulation(top.child("simulation"), c);
  if (top.has("analysis")) read_analysis(top.child("analysis"), c.analysis);
  if (top.has("output")) {
    const Block o = top.child("output");
    o.allow({"directory"});
    c.output_directory = o.text("directory", "");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

}  // namespace vcsel
