#pragma once

// Quantum-noise driven Langevin simulation, linearized and nonlinear.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "vcsel/linear.hpp"
#include "vcsel/params.hpp"

namespace vcsel {

enum class SimulationMode : std::uint32_t { linearized = 0, nonlinear = 1 };

/// Transition used by the linearized simulator. `exact` samples the Gaussian
/// Ornstein-Uhlenbeck transition over one step and has no discretization
/// bias; `euler_maruyama` is the first-order scheme.
enum class LinearScheme { exact, euler_maruyama };

const char* to_string(SimulationMode mode);
const char* to_string(LinearScheme scheme);

struct NoiseConfig {
  std::uint64_t seed = 1;
  double dt = 0.0;        // integration step, units of 1/gamma; 0 picks max_step()
  SimulationMode mode = SimulationMode::linearized;
  LinearScheme scheme = LinearScheme::exact;
  double duration = 100.0;  // recorded time per member, units of 1/gamma
  double burn_in = -1.0;    // < 0 picks default_burn_in()
  int ensemble_size = 1;
  int sample_every = 1;     // record every k-th step
  bool frozen_noise = false;
  int threads = 0;          // 0: hardware concurrency
};

/// 0.02 min(1/x, 1/(x+r+rho-theta), 2 pi/(10 nu)), units of 1/gamma.
double max_step(const DerivedParams& derived);
/// 10/(rho+theta): twice five decay times of the slowest mode.
double default_burn_in(const DerivedParams& derived);

/// Fills dt and burn_in defaults and checks the step bound. The bound is a
/// requirement of the discretized schemes; the exact transition accepts any
/// step. Throws InvalidParameters / StepTooLarge.
NoiseConfig resolve(const NoiseConfig& cfg, const DerivedParams& derived);

/// Generator for one ensemble member: streams are keyed by (seed, member).
std::mt19937_64 member_engine(std::uint64_t seed, std::uint64_t member);

/// Observable fluctuation channels: dn/n_s, P2, P3 at a uniform time grid.
struct FluctuationSeries {
  double t0 = 0.0;         // units of 1/gamma
  double dt = 0.0;         // sample interval, units of 1/gamma
  std::vector<double> dn_rel;
  std::vector<double> p2;
  std::vector<double> p3;

  std::uint64_t seed = 0;
  std::uint64_t member = 0;
  SimulationMode mode = SimulationMode::linearized;
  std::uint64_t params_hash = 0;
  double n_s = 1.0;
  double gamma = 1.0;      // 1/s, converts to seconds

  std::size_t size() const { return dn_rel.size(); }
  double time_unit() const { return 1.0 / gamma; }
  void reserve(std::size_t n);
  void push(double dn, double P2, double P3);
};

/// Receives (dn/n_s, P2, P3) for every recorded sample.
using SampleSink = std::function<void(double, double, double)>;

/// Linearized Langevin dz = drift z dt + dW, <dW dW^T> = N dt, started at
/// z = 0 and run through burn-in before recording. Throws UnstableSystem.
void stream_linear(const LinearSystemd& sys, const NoiseConfig& cfg, std::uint64_t member,
                   const SampleSink& sink);
FluctuationSeries simulate_linear(const LinearSystemd& sys, const NoiseConfig& cfg,
                                  std::uint64_t member = 0);

/// Aligned rate equations driven by light-field noise. Drift by Heun, noise
/// at the left point (Ito). The intensity channel uses the instantaneous
/// photon number unless cfg.frozen_noise; polarization noise is applied in
/// the tangent plane of P with the stationary amplitude, followed by
/// renormalization. Throws BelowThreshold, StateDiverged, StepTooLarge.
void stream_nonlinear(const LaserParams& params, const NoiseConfig& cfg, std::uint64_t member,
                      const SampleSink& sink);
FluctuationSeries simulate_nonlinear(const LaserParams& params, const NoiseConfig& cfg,
                                     std::uint64_t member = 0);

/// Dispatches on cfg.mode.
FluctuationSeries simulate(const LaserParams& params, const NoiseConfig& cfg,
                           std::uint64_t member = 0);
void stream(const LaserParams& params, const NoiseConfig& cfg, std::uint64_t member,
            const SampleSink& sink);

/// Runs fn(member) for member = 0..count-1 on up to `threads` workers and
/// returns the results in member order, independent of scheduling.
template <typename Result>
std::vector<Result> run_ensemble(int count, int threads,
                                 const std::function<Result(std::uint64_t)>& fn) {
  std::vector<Result> results(static_cast<std::size_t>(count));
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int m = 0; m < count; ++m) results[m] = fn(static_cast<std::uint64_t>(m));
    return results;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (int m = w; m < count; m += threads) {
        try {
          results[m] = fn(static_cast<std::uint64_t>(m));
        } catch (...) {
          errors[m] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::vector<FluctuationSeries> simulate_ensemble(const LaserParams& params,
                                                 const NoiseConfig& cfg);

/// CSV: one '#' metadata line, then member,t_scaled,t_seconds,dn_rel,P2,P3.
void write_series_csv(std::ostream& os, const std::vector<FluctuationSeries>& members);
std::vector<FluctuationSeries> read_series_csv(std::istream& is);

/// Binary frames, little-endian, one per member:
///   char[4] "VCSF", u32 version (1), u64 params_hash, u64 seed, u32 mode,
///   u64 member, u64 count, f64 t0, f64 dt, f64 gamma, f64 n_s,
///   then count triplets (dn_rel, P2, P3) of f64.
void write_series_binary(std::ostream& os, const std::vector<FluctuationSeries>& members);
std::vector<FluctuationSeries> read_series_binary(std::istream& is);

}  // namespace vcsel
