#pragma once

// JSON run configuration shared by the CLI subcommands.
//
// {
//   "laser": {                       // or "operating_point", exactly one
//     "kappa2_per_s": 1e12, "gamma_per_s": 1e10, "Gamma_per_s": 3e10,
//     "w2_per_s": 2e6, "alpha": 2,
//     "x": 2,                        // or "D0", exactly one
//     "g": [0.02, 0, 0], "l": 0,     // number = e1 component
//     "Omega_rad_per_s": [1e10, 0, 0]
//   },
//   "operating_point": {
//     "gamma_per_s": 1e10, "x": 2, "r": 2, "rho": 2, "theta": 2,
//     "alpha": 2, "nu_over_gamma": 10, "A": 0.01, "l": 0
//   },
//   "simulation": {
//     "seed": 1, "dt": 0, "mode": "linearized", "scheme": "exact",
//     "duration": 100, "burn_in": -1, "ensemble_size": 1, "sample_every": 1,
//     "frozen_noise": false, "threads": 0, "format": "csv"
//   },
//   "analysis": {
//     "max_lag": 3, "lag_step": 0.02, "x_known": 2,
//     "fit_max_tau": null, "filter": {"kind": "right_circular", "angle_deg": 0}
//   },
//   "output": {"directory": "out"}
// }
//
// Times in the simulation and analysis blocks are in units of 1/gamma.

#include <filesystem>
#include <optional>
#include <string>

#include "vcsel/analysis.hpp"
#include "vcsel/params.hpp"
#include "vcsel/stochastic.hpp"

namespace vcsel {

enum class SeriesFormat { csv, binary };

struct AnalysisConfig {
  double max_lag = 3.0;
  double lag_step = 0.02;
  double x_known = kNaN;  // NaN: take x from the laser block
  double fit_max_tau = std::numeric_limits<double>::infinity();
  std::optional<PolarizationFilter> filter;
};

struct RunConfig {
  LaserParams laser;
  NoiseConfig noise;
  SeriesFormat format = SeriesFormat::csv;
  AnalysisConfig analysis;
  std::string output_directory;  // empty: not set in the file
};

/// Parses and validates a configuration document. Throws Error(schema) with
/// the offending field path, or the line for malformed JSON.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace vcsel
