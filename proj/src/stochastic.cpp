#include "vcsel/stochastic.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "vcsel/dynamics.hpp"
#include "vcsel/io.hpp"

namespace vcsel {

const char* to_string(SimulationMode mode) {
  return mode == SimulationMode::nonlinear ? "nonlinear" : "linearized";
}

const char* to_string(LinearScheme scheme) {
  return scheme == LinearScheme::exact ? "exact" : "euler_maruyama";
}

double max_step(const DerivedParams& dp) {
  const double nu = dp.nu_scaled();
  return 0.02 * std::min({1.0 / dp.x, 1.0 / dp.polarization_fast_rate(),
                          2.0 * std::numbers::pi / (10.0 * nu)});
}

double default_burn_in(const DerivedParams& dp) { return 10.0 / dp.polarization_slow_rate(); }

NoiseConfig resolve(const NoiseConfig& cfg, const DerivedParams& dp) {
  require_lasing(dp);
  require_stable_polarization(dp);
  NoiseConfig out = cfg;
  const double bound = max_step(dp);
  if (out.dt == 0.0) out.dt = bound;
  if (out.burn_in < 0.0) out.burn_in = default_burn_in(dp);
  if (!(out.dt > 0.0) || !std::isfinite(out.dt)) {
    throw Error(ErrorCode::invalid_parameters, "simulation dt must be > 0");
  }
  if (!(out.duration > 0.0)) throw Error(ErrorCode::invalid_parameters, "duration must be > 0");
  if (out.ensemble_size < 1) throw Error(ErrorCode::invalid_parameters, "ensemble_size must be >= 1");
  if (out.sample_every < 1) throw Error(ErrorCode::invalid_parameters, "sample_every must be >= 1");
  const bool discretized =
      out.mode == SimulationMode::nonlinear || out.scheme == LinearScheme::euler_maruyama;
  if (discretized && out.dt > bound * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "dt = " << out.dt << " exceeds 0.02 min(1/x, 1/(x+r+rho-theta), 2pi/(10 nu)) = " << bound;
    throw Error(ErrorCode::step_too_large, os.str());
  }
  return out;
}

std::mt19937_64 member_engine(std::uint64_t seed, std::uint64_t member) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(member), static_cast<std::uint32_t>(member >> 32)};
  return std::mt19937_64(seq);
}

void FluctuationSeries::reserve(std::size_t n) {
  dn_rel.reserve(n);
  p2.reserve(n);
  p3.reserve(n);
}

void FluctuationSeries::push(double dn, double P2, double P3) {
  dn_rel.push_back(dn);
  p2.push_back(P2);
  p3.push_back(P3);
}

namespace {

struct Schedule {
  long burn_steps;
  long samples;
};

Schedule schedule(const NoiseConfig& cfg) {
  Schedule s;
  s.burn_steps = static_cast<long>(std::ceil(cfg.burn_in / cfg.dt - 1e-9));
  s.samples = static_cast<long>(std::llround(cfg.duration / (cfg.dt * cfg.sample_every)));
  if (s.samples < 1) s.samples = 1;
  return s;
}

// Lower factor L with L L^T = Q, tolerant of a singular Q. Computed on the
// unit-diagonal form so the disparate component scales do not matter.
Matrix5<double> noise_factor(const Matrix5<double>& Q) {
  Vector5<double> scale;
  for (int i = 0; i < 5; ++i) scale(i) = Q(i, i) > 0.0 ? std::sqrt(Q(i, i)) : 0.0;
  Matrix5<double> R = Matrix5<double>::Identity();
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (scale(i) > 0.0 && scale(j) > 0.0) R(i, j) = Q(i, j) / (scale(i) * scale(j));
      else if (i != j) R(i, j) = 0.0;
    }
  }
  const Eigen::LDLT<Matrix5<double>> ldlt(R);
  Matrix5<double> L = ldlt.matrixL();
  const Vector5<double> d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  L = ldlt.transpositionsP().transpose() * (L * d.asDiagonal());
  return scale.asDiagonal() * L;
}

}  // namespace

void stream_linear(const LinearSystemd& sys, const NoiseConfig& cfg, std::uint64_t member,
                   const SampleSink& sink) {
  if (!(cfg.dt > 0.0) || !(cfg.burn_in >= 0.0) || !(cfg.duration > 0.0) || cfg.sample_every < 1) {
    throw Error(ErrorCode::invalid_parameters, "noise config not resolved: need dt > 0, burn_in >= 0");
  }
  const Eigensystem<double> es = numeric_eigensystem(sys);
  require_stable(es);
  const Schedule plan = schedule(cfg);
  const double h = cfg.dt;

  auto engine = member_engine(cfg.seed, member);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector5<double> z = Vector5<double>::Zero();
  Vector5<double> xi;

  Matrix5<double> M, L;
  if (cfg.scheme == LinearScheme::exact) {
    M = propagator(es, h);
    L = noise_factor(transition_covariance(sys, es, h));
  } else {
    M = Matrix5<double>::Identity() + h * sys.drift;
    L = (sys.diffusion.diagonal().cwiseMax(0.0) * h).cwiseSqrt().asDiagonal();
  }

  const auto step = [&] {
    for (int i = 0; i < 5; ++i) xi(i) = normal(engine);
    z = M * z + L * xi;
  };
  for (long k = 0; k < plan.burn_steps; ++k) step();
  const double inv_ns = 1.0 / sys.n_s;
  for (long s = 0; s < plan.samples; ++s) {
    for (int k = 0; k < cfg.sample_every; ++k) step();
    if (!z.allFinite()) throw Error(ErrorCode::state_diverged, "linear state became non-finite");
    sink(z(idx::dn) * inv_ns, z(idx::P2), z(idx::P3));
  }
}

FluctuationSeries simulate_linear(const LinearSystemd& sys, const NoiseConfig& cfg,
                                  std::uint64_t member) {
  const Schedule plan = schedule(cfg);
  FluctuationSeries out;
  out.t0 = plan.burn_steps * cfg.dt + cfg.sample_every * cfg.dt;
  out.dt = cfg.sample_every * cfg.dt;
  out.seed = cfg.seed;
  out.member = member;
  out.mode = SimulationMode::linearized;
  out.n_s = sys.n_s;
  out.gamma = 1.0 / sys.time_unit;
  out.reserve(static_cast<std::size_t>(plan.samples));
  stream_linear(sys, cfg, member, [&](double a, double b, double c) { out.push(a, b, c); });
  return out;
}

void stream_nonlinear(const LaserParams& params, const NoiseConfig& cfg, std::uint64_t member,
                      const SampleSink& sink) {
  const DerivedParams dp = derive(params);
  const NoiseConfig run = resolve(cfg, dp);
  const Scaled p = nondimensionalize(params);
  const Schedule plan = schedule(run);
  const double h = run.dt;
  const double loss = dp.loss_rate / dp.gamma;
  const double n_s = dp.n_s;
  const double D_s = dp.D_s;
  const double polarization_sigma = std::sqrt(2.0 * loss / n_s * h);

  auto engine = member_engine(run.seed, member);
  std::normal_distribution<double> normal(0.0, 1.0);

  using Vec6 = Eigen::Matrix<double, 6, 1>;
  const auto pack = [](const LaserState& s) {
    Vec6 v;
    v << s.D, s.n, s.d, s.P;
    return v;
  };
  const auto rhs = [&](const Vec6& v) {
    LaserState s;
    s.D = v[0];
    s.n = v[1];
    s.d = v[2];
    s.P = v.tail<3>();
    return pack(aligned_rhs(s, p));
  };

  Vec6 y = pack(find_stationary(params));
  const auto step = [&] {
    const double xi_n = normal(engine);
    const double xi_u = normal(engine);
    const double xi_v = normal(engine);
    const double n_noise = run.frozen_noise ? n_s : std::max(y[1], 0.0);

    const Vec6 f0 = rhs(y);
    const Vec6 pred = y + h * f0;
    Vec6 next = y + 0.5 * h * (f0 + rhs(pred));

    next[1] += std::sqrt(2.0 * loss * n_noise * h) * xi_n;
    const Vector3d P = y.tail<3>();
    Vector3d u = Vector3d::UnitY() - P.y() * P;
    if (u.norm() < 1e-6) u = Vector3d::UnitZ() - P.z() * P;
    u.normalize();
    const Vector3d v = P.cross(u);
    Vector3d Pn = next.tail<3>() + polarization_sigma * (xi_u * u + xi_v * v);
    next.tail<3>() = Pn / Pn.norm();

    if (!next.allFinite() || next[1] < 0.0 || std::abs(next[1]) > 1e12 * n_s ||
        std::abs(next[0]) > 1e12 * D_s) {
      throw Error(ErrorCode::state_diverged, "stochastic trajectory left the physical domain");
    }
    y = next;
  };

  for (long k = 0; k < plan.burn_steps; ++k) step();
  for (long s = 0; s < plan.samples; ++s) {
    for (int k = 0; k < run.sample_every; ++k) step();
    sink((y[1] - n_s) / n_s, y[4], y[5]);
  }
}

FluctuationSeries simulate_nonlinear(const LaserParams& params, const NoiseConfig& cfg,
                                     std::uint64_t member) {
  const DerivedParams dp = derive(params);
  const NoiseConfig run = resolve(cfg, dp);
  const Schedule plan = schedule(run);
  FluctuationSeries out;
  out.t0 = plan.burn_steps * run.dt + run.sample_every * run.dt;
  out.dt = run.sample_every * run.dt;
  out.seed = run.seed;
  out.member = member;
  out.mode = SimulationMode::nonlinear;
  out.params_hash = params_hash(params);
  out.n_s = dp.n_s;
  out.gamma = dp.gamma;
  out.reserve(static_cast<std::size_t>(plan.samples));
  stream_nonlinear(params, run, member, [&](double a, double b, double c) { out.push(a, b, c); });
  return out;
}

FluctuationSeries simulate(const LaserParams& params, const NoiseConfig& cfg,
                           std::uint64_t member) {
  if (cfg.mode == SimulationMode::nonlinear) return simulate_nonlinear(params, cfg, member);
  const DerivedParams dp = derive(params);
  const NoiseConfig run = resolve(cfg, dp);
  FluctuationSeries out = simulate_linear(build_linear_system(dp), run, member);
  out.params_hash = params_hash(params);
  return out;
}

void stream(const LaserParams& params, const NoiseConfig& cfg, std::uint64_t member,
            const SampleSink& sink) {
  if (cfg.mode == SimulationMode::nonlinear) return stream_nonlinear(params, cfg, member, sink);
  const DerivedParams dp = derive(params);
  stream_linear(build_linear_system(dp), resolve(cfg, dp), member, sink);
}

std::vector<FluctuationSeries> simulate_ensemble(const LaserParams& params,
                                                 const NoiseConfig& cfg) {
  return run_ensemble<FluctuationSeries>(
      cfg.ensemble_size, cfg.threads,
      [&](std::uint64_t member) { return simulate(params, cfg, member); });
}

// Series files.

void write_series_csv(std::ostream& os, const std::vector<FluctuationSeries>& members) {
  if (members.empty()) throw Error(ErrorCode::invalid_parameters, "no series to write");
  const FluctuationSeries& first = members.front();
  os << "# params_hash=" << hex64(first.params_hash) << " seed=" << first.seed
     << " mode=" << to_string(first.mode) << " n_s=" << format_double(first.n_s)
     << " gamma_per_s=" << format_double(first.gamma) << " members=" << members.size() << '\n';
  os << "member,t_scaled,t_seconds,dn_rel,P2,P3\n";
  for (const auto& s : members) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double t = s.t0 + static_cast<double>(i) * s.dt;
      os << s.member << ',' << format_double(t) << ',' << format_double(t / s.gamma) << ','
         << format_double(s.dn_rel[i]) << ',' << format_double(s.p2[i]) << ','
         << format_double(s.p3[i]) << '\n';
    }
  }
}

std::vector<FluctuationSeries> read_series_csv(std::istream& is) {
  FluctuationSeries meta;
  std::vector<FluctuationSeries> out;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "params_hash") meta.params_hash = std::stoull(val, nullptr, 16);
        else if (key == "seed") meta.seed = std::stoull(val);
        else if (key == "mode") meta.mode = val == "nonlinear" ? SimulationMode::nonlinear : SimulationMode::linearized;
        else if (key == "n_s") meta.n_s = std::stod(val);
        else if (key == "gamma_per_s") meta.gamma = std::stod(val);
      }
      continue;
    }
    if (!header) {
      if (line != "member,t_scaled,t_seconds,dn_rel,P2,P3") {
        throw Error(ErrorCode::schema, "line " + std::to_string(lineno) + ": unexpected series header");
      }
      header = true;
      continue;
    }
    std::istringstream ss(line);
    std::string cell;
    double v[6];
    int col = 0;
    try {
      while (col < 6 && std::getline(ss, cell, ',')) v[col++] = std::stod(cell);
    } catch (const std::exception&) {
      col = -1;
    }
    if (col != 6) throw Error(ErrorCode::schema, "line " + std::to_string(lineno) + ": expected 6 numeric columns");
    const auto member = static_cast<std::uint64_t>(v[0]);
    if (out.empty() || out.back().member != member) {
      FluctuationSeries s = meta;
      s.member = member;
      s.t0 = v[1];
      out.push_back(s);
    } else if (out.back().size() == 1) {
      out.back().dt = v[1] - out.back().t0;
    }
    out.back().push(v[3], v[4], v[5]);
  }
  if (!header) throw Error(ErrorCode::schema, "series file has no header");
  return out;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

bool get_bytes(std::istream& is, unsigned char* b, int n) {
  is.read(reinterpret_cast<char*>(b), n);
  return is.gcount() == n;
}

std::uint64_t get_u(std::istream& is, int n) {
  unsigned char b[8];
  if (!get_bytes(is, b, n)) throw Error(ErrorCode::schema, "truncated series frame");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u(is, 8)); }

}  // namespace

void write_series_binary(std::ostream& os, const std::vector<FluctuationSeries>& members) {
  for (const auto& s : members) {
    os.write("VCSF", 4);
    put_u32(os, 1);
    put_u64(os, s.params_hash);
    put_u64(os, s.seed);
    put_u32(os, static_cast<std::uint32_t>(s.mode));
    put_u64(os, s.member);
    put_u64(os, s.size());
    put_f64(os, s.t0);
    put_f64(os, s.dt);
    put_f64(os, s.gamma);
    put_f64(os, s.n_s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      put_f64(os, s.dn_rel[i]);
      put_f64(os, s.p2[i]);
      put_f64(os, s.p3[i]);
    }
  }
}

std::vector<FluctuationSeries> read_series_binary(std::istream& is) {
  std::vector<FluctuationSeries> out;
  while (true) {
    unsigned char magic[4];
    is.read(reinterpret_cast<char*>(magic), 4);
    if (is.gcount() == 0) break;
    if (is.gcount() != 4 || std::string(magic, magic + 4) != "VCSF") {
      throw Error(ErrorCode::schema, "not a series frame (bad magic)");
    }
    const auto ver = get_u(is, 4);
    if (ver != 1) throw Error(ErrorCode::schema, "unsupported series frame version " + std::to_string(ver));
    FluctuationSeries s;
    s.params_hash = get_u(is, 8);
    s.seed = get_u(is, 8);
    const auto mode = get_u(is, 4);
    if (mode > 1) throw Error(ErrorCode::schema, "unknown simulation mode in series frame");
    s.mode = static_cast<SimulationMode>(mode);
    s.member = get_u(is, 8);
    const std::uint64_t count = get_u(is, 8);
    s.t0 = get_f64(is);
    s.dt = get_f64(is);
    s.gamma = get_f64(is);
    s.n_s = get_f64(is);
    s.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const double a = get_f64(is), b = get_f64(is), c = get_f64(is);
      s.push(a, b, c);
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw Error(ErrorCode::schema, "series file holds no frames");
  return out;
}

}  // namespace vcsel
