// vcsel-polar: derive, simulate, correlate, fit, invert, figures.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vcsel/analysis.hpp"
#include "vcsel/config.hpp"
#include "vcsel/figures.hpp"
#include "vcsel/io.hpp"
#include "vcsel/linear.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace vcsel;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string input;
  std::string stderr_input;
  std::string source = "empirical";
  std::optional<std::uint64_t> seed;
  bool frozen_noise = false;
  double x = kNaN;
};

fs::path output_dir(const Options& o, const RunConfig* cfg) {
  if (!o.out.empty()) return o.out;
  if (cfg && !cfg->output_directory.empty()) return cfg->output_directory;
  if (const char* env = std::getenv("VCSEL_POLAR_OUT"); env && *env) return env;
  return ".";
}

RunConfig load(const Options& o) {
  if (o.config.empty()) throw Error(ErrorCode::schema, "--config is required");
  RunConfig cfg = load_config(o.config);
  if (o.seed) cfg.noise.seed = *o.seed;
  if (o.frozen_noise) cfg.noise.frozen_noise = true;
  return cfg;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

void write_meta(const fs::path& dir, const std::string& command, std::uint64_t hash,
                std::optional<std::uint64_t> seed, const std::vector<std::string>& files,
                ordered_json extra = ordered_json::object()) {
  ordered_json j;
  j["command"] = command;
  j["version"] = version();
  j["params_hash"] = hex64(hash);
  j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
  j["files"] = files;
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_atomic(dir / (command + ".meta.json"), dump(j));
}

ordered_json derived_json(const DerivedParams& dp) {
  ordered_json j;
  j["x"] = dp.x;
  j["rho"] = dp.rho;
  j["theta"] = dp.theta;
  j["r"] = dp.r;
  j["nu_rad_per_s"] = dp.lasing() ? ordered_json(dp.nu) : ordered_json(nullptr);
  j["nu_over_gamma"] = dp.lasing() ? ordered_json(dp.nu_scaled()) : ordered_json(nullptr);
  j["A"] = dp.A;
  j["n_s"] = dp.n_s;
  j["D_s"] = dp.D_s;
  j["gamma_per_s"] = dp.gamma;
  j["alpha"] = dp.alpha;
  j["loss_rate_per_s"] = dp.loss_rate;
  j["emission_rate_per_s"] = dp.emission_rate;
  return j;
}

int cmd_derive(const Options& o) {
  const RunConfig cfg = load(o);
  const DerivedParams dp = derive(cfg.laser);
  const fs::path dir = output_dir(o, &cfg);
  const std::uint64_t hash = params_hash(cfg.laser);

  ordered_json j;
  j["params_hash"] = hex64(hash);
  j["derived"] = derived_json(dp);
  j["lasing"] = dp.lasing();
  j["stability"] = {{"rho_plus_theta", dp.polarization_slow_rate()},
                    {"x_plus_r_plus_rho_minus_theta", dp.polarization_fast_rate()},
                    {"rho_plus_theta_positive", dp.polarization_slow_rate() > 0.0},
                    {"x_plus_r_plus_rho_minus_theta_positive", dp.polarization_fast_rate() > 0.0}};
  int status = 0;
  std::vector<std::string> files{"derived.json"};
  if (!dp.lasing()) {
    j["status"] = to_string(ErrorCode::below_threshold);
    status = 2;
  } else if (!dp.polarization_stable()) {
    j["status"] = to_string(ErrorCode::unstable_polarization);
    status = 3;
  } else {
    j["status"] = "ok";
    const FrequencySplitting fs_ = frequency_splitting(dp);
    j["frequency_splitting"] = {{"nu_n_minus_nu_P_rad_per_s", fs_.nu_n_minus_nu_P},
                                {"nu_n_minus_nu_P_over_gamma", fs_.nu_n_minus_nu_P_scaled},
                                {"perturbative", fs_.perturbative}};
    j["gamma_over_nu"] = perturbation_ratio(dp);
    const LinearSystemd sys = build_linear_system(dp);
    std::ostringstream numeric, analytic;
    write_eigensystem_json(numeric, numeric_eigensystem(sys), dp.gamma, "numeric");
    write_eigensystem_json(analytic, analytic_eigensystem(dp), dp.gamma, "analytic");
    write_atomic(dir / "eigensystem_numeric.json", numeric.str());
    write_atomic(dir / "eigensystem_analytic.json", analytic.str());
    files.push_back("eigensystem_numeric.json");
    files.push_back("eigensystem_analytic.json");
  }
  const std::string text = dump(j);
  write_atomic(dir / "derived.json", text);
  write_meta(dir, "derive", hash, std::nullopt, files);
  std::cout << text;
  if (status == 2) std::cerr << "BelowThreshold: x = " << dp.x << " <= 1\n";
  if (status == 3) std::cerr << "UnstablePolarization: rho+theta or x+r+rho-theta is not positive\n";
  return status;
}

int cmd_simulate(const Options& o) {
  const RunConfig cfg = load(o);
  const DerivedParams dp = derive(cfg.laser);
  const NoiseConfig run = resolve(cfg.noise, dp);
  const auto series = simulate_ensemble(cfg.laser, run);
  const fs::path dir = output_dir(o, &cfg);
  std::ostringstream os;
  std::string name;
  if (cfg.format == SeriesFormat::csv) {
    write_series_csv(os, series);
    name = "series.csv";
  } else {
    write_series_binary(os, series);
    name = "series.bin";
  }
  write_atomic(dir / name, os.str());
  ordered_json extra;
  extra["mode"] = to_string(run.mode);
  extra["scheme"] = to_string(run.scheme);
  extra["dt_scaled"] = run.dt;
  extra["sample_every"] = run.sample_every;
  extra["duration_scaled"] = run.duration;
  extra["burn_in_scaled"] = run.burn_in;
  extra["ensemble_size"] = run.ensemble_size;
  extra["frozen_noise"] = run.frozen_noise;
  extra["n_s"] = dp.n_s;
  extra["gamma_per_s"] = dp.gamma;
  write_meta(dir, "simulate", params_hash(cfg.laser), run.seed, {name}, extra);
  std::cout << "wrote " << (dir / name).string() << " (" << series.size() << " member(s), "
            << (series.empty() ? 0 : series.front().size()) << " samples each)\n";
  return 0;
}

std::vector<FluctuationSeries> read_series(const fs::path& path) {
  const std::string data = read_file(path);
  std::istringstream is(data);
  if (data.compare(0, 4, "VCSF") == 0) return read_series_binary(is);
  return read_series_csv(is);
}

void write_filtered(const fs::path& path, const FilteredIntensity& f, std::uint64_t hash,
                    std::uint64_t seed) {
  std::ostringstream os;
  os << "# params_hash=" << hex64(hash) << " seed=" << seed
     << " mean_intensity_over_n_s=" << format_double(f.mean_intensity) << '\n';
  os << "tau_scaled,relative,relative_se,intensity,polarization,average_residual,"
        "average_residual_se,sum_residual,sum_residual_se\n";
  for (std::size_t k = 0; k < f.tau.size(); ++k) {
    os << format_double(f.tau[k]) << ',' << format_double(f.relative[k]) << ','
       << format_double(f.relative_se[k]) << ',' << format_double(f.intensity[k]) << ','
       << format_double(f.polarization[k]) << ',' << format_double(f.average_residual[k]) << ','
       << format_double(f.average_residual_se[k]) << ',' << format_double(f.sum_residual[k])
       << ',' << format_double(f.sum_residual_se[k]) << '\n';
  }
  write_atomic(path, os.str());
}

int cmd_correlate(const Options& o) {
  const RunConfig cfg = load(o);
  const fs::path dir = output_dir(o, &cfg);
  const AnalysisConfig& a = cfg.analysis;
  const std::uint64_t hash = params_hash(cfg.laser);
  std::vector<std::string> files{"correlators.csv"};
  CorrelationRecord rec;
  std::optional<FilteredIntensity> filtered;
  std::optional<std::uint64_t> seed;

  if (o.source == "analytic" || o.source == "exact-linear") {
    const DerivedParams dp = derive(cfg.laser);
    require_lasing(dp);
    const auto tau = lag_grid(a.max_lag, a.lag_step);
    if (o.source == "analytic") {
      rec = analytic_correlators(dp, tau);
    } else {
      const LinearSystemd sys = build_linear_system(dp);
      rec = linear_correlators(sys, numeric_eigensystem(sys), tau);
    }
    rec.params_hash = hash;
  } else if (o.source == "empirical") {
    if (!o.input.empty()) {
      const auto series = read_series(o.input);
      if (series.empty()) throw Error(ErrorCode::schema, "series file holds no members");
      if (series.front().params_hash != hash) {
        std::cerr << "warning: series params_hash " << hex64(series.front().params_hash)
                  << " differs from the config (" << hex64(hash) << ")\n";
      }
      rec = estimate_correlators(series, a.max_lag, a.lag_step);
      if (a.filter) filtered = filtered_intensity(series, *a.filter, a.max_lag, a.lag_step);
    } else {
      const StreamedEstimate est = estimate_from_simulation(
          cfg.laser, cfg.noise, a.max_lag, a.lag_step, a.filter ? &*a.filter : nullptr);
      rec = est.record;
      if (est.has_filtered) filtered = est.filtered;
    }
    seed = rec.seed;
  } else {
    throw Error(ErrorCode::schema, "--source must be analytic, exact-linear or empirical");
  }

  std::ostringstream os;
  write_correlation_csv(os, rec);
  write_atomic(dir / "correlators.csv", os.str());
  if (rec.empirical) {
    std::ostringstream es;
    write_correlation_stderr_csv(es, rec);
    write_atomic(dir / "correlators_stderr.csv", es.str());
    files.push_back("correlators_stderr.csv");

    std::ostringstream cs;
    cs << "# params_hash=" << hex64(rec.params_hash) << " seed=" << rec.seed << '\n';
    cs << "tau_scaled,p2p3,dn_p2,dn_p2_se,dn_p3,dn_p3_se\n";
    for (std::size_t k = 0; k < rec.size(); ++k) {
      cs << format_double(rec.tau[k]) << ',' << format_double(rec.p2p3[k]) << ','
         << format_double(rec.dn_p2[k]) << ',' << format_double(rec.dn_p2_se[k]) << ','
         << format_double(rec.dn_p3[k]) << ',' << format_double(rec.dn_p3_se[k]) << '\n';
    }
    write_atomic(dir / "cross_diagnostics.csv", cs.str());
    files.push_back("cross_diagnostics.csv");
  }
  if (filtered) {
    write_filtered(dir / "filtered_intensity.csv", *filtered, rec.params_hash, rec.seed);
    files.push_back("filtered_intensity.csv");
  }
  ordered_json extra;
  extra["source"] = rec.source;
  extra["max_lag_scaled"] = a.max_lag;
  extra["lag_step_scaled"] = a.lag_step;
  write_meta(dir, "correlate", rec.params_hash, seed, files, extra);
  std::cout << "wrote " << (dir / "correlators.csv").string() << " (" << rec.size() << " lags, "
            << rec.source << ")\n";
  return 0;
}

CorrelationRecord read_record(const Options& o) {
  if (o.input.empty()) throw Error(ErrorCode::schema, "--input <correlators.csv> is required");
  const fs::path in = o.input;
  std::istringstream is(read_file(in));
  CorrelationRecord rec = read_correlation_csv(is);
  fs::path se_path = o.stderr_input;
  if (se_path.empty()) {
    const fs::path guess = in.parent_path() / (in.stem().string() + "_stderr.csv");
    if (fs::exists(guess)) se_path = guess;
  }
  if (!se_path.empty()) {
    std::istringstream es(read_file(se_path));
    read_correlation_stderr_csv(es, rec);
  }
  return rec;
}

ordered_json fit_to_json(const FitResult& f, const std::string& channel) {
  std::ostringstream os;
  write_fit_json(os, f, channel);
  return ordered_json::parse(os.str());
}

FitResult fit_from_json(const nlohmann::json& j, const std::string& path) {
  const auto get = [&](const char* key, const char* part = "value") {
    if (!j.contains(key)) throw Error(ErrorCode::schema, path + "." + key + ": missing");
    const auto& v = j.at(key);
    const auto& x = v.is_object() ? v.at(part) : v;
    return x.is_null() ? kNaN : x.get<double>();
  };
  FitResult f;
  const std::string model = j.at("model").get<std::string>();
  f.model = model == "single" ? FitModel::single : FitModel::cosine_plus_exponential;
  const std::string status = j.at("status").get<std::string>();
  f.status = status == "ok" ? FitStatus::ok
             : status == "ModelMismatch" ? FitStatus::model_mismatch
                                         : FitStatus::diverged;
  f.amplitude = get("amplitude");
  f.amplitude_se = get("amplitude", "se");
  f.quadrature = get("quadrature");
  f.quadrature_se = get("quadrature", "se");
  f.envelope = get("envelope");
  f.envelope_se = get("envelope", "se");
  f.decay = get("decay_rate_scaled");
  f.decay_se = get("decay_rate_scaled", "se");
  f.frequency = get("frequency_scaled");
  f.frequency_se = get("frequency_scaled", "se");
  if (f.model == FitModel::cosine_plus_exponential) {
    f.slow_amplitude = get("slow_amplitude");
    f.slow_amplitude_se = get("slow_amplitude", "se");
    f.slow_decay = get("slow_decay_rate_scaled");
    f.slow_decay_se = get("slow_decay_rate_scaled", "se");
  }
  f.message = j.value("message", "");
  return f;
}

int cmd_fit(const Options& o) {
  std::optional<RunConfig> cfg;
  if (!o.config.empty()) cfg = load(o);
  const CorrelationRecord rec = read_record(o);
  FitOptions opt;
  if (cfg) opt.max_tau = cfg->analysis.fit_max_tau;
  const auto& v = rec.value;
  const auto& s = rec.stderr_;
  const auto se = [&](const std::vector<double>& e) {
    return e.size() == rec.size() ? e : std::vector<double>{};
  };
  const FitResult intensity = fit_damped_cosine(rec.tau, v.dn_dn_rel, se(s.dn_dn_rel), FitModel::single, opt);
  const FitResult ellipticity = fit_damped_cosine(rec.tau, v.p3p3, se(s.p3p3), FitModel::single, opt);
  const FitResult direction =
      fit_damped_cosine(rec.tau, v.p2p2, se(s.p2p2), FitModel::cosine_plus_exponential, opt);
  const FitResult cross =
      fit_damped_cosine(rec.tau, v.p3p2, se(s.p3p2), FitModel::cosine_plus_exponential, opt);

  ordered_json j;
  j["params_hash"] = hex64(rec.params_hash);
  j["seed"] = rec.seed;
  j["source"] = rec.source;
  j["time_unit_s"] = rec.time_unit;
  j["fits"]["intensity"] = fit_to_json(intensity, "dn_dn_rel");
  j["fits"]["ellipticity"] = fit_to_json(ellipticity, "p3p3");
  j["fits"]["direction"] = fit_to_json(direction, "p2p2");
  j["fits"]["cross"] = fit_to_json(cross, "p3p2");
  const double period = 2.0 * std::numbers::pi / ellipticity.frequency;
  const RatioEstimate ratio = cross_ratio(rec, period);
  j["cross_ratio_first_period"] = {{"value", ratio.value}, {"se", ratio.se}};

  const fs::path dir = output_dir(o, cfg ? &*cfg : nullptr);
  write_atomic(dir / "fits.json", dump(j));
  write_meta(dir, "fit", rec.params_hash, rec.seed, {"fits.json"});
  int status = 0;
  for (const FitResult* f : {&intensity, &ellipticity, &direction, &cross}) {
    if (f->status != FitStatus::ok) {
      std::cerr << to_string(f->status) << ": " << f->message << '\n';
      if (f->status == FitStatus::diverged) status = 4;
    }
  }
  std::cout << "wrote " << (dir / "fits.json").string() << '\n';
  return status;
}

int cmd_invert(const Options& o) {
  std::optional<RunConfig> cfg;
  if (!o.config.empty()) cfg = load(o);
  if (o.input.empty()) throw Error(ErrorCode::schema, "--input <fits.json> is required");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(o.input));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, o.input + ": " + e.what());
  }
  InversionInput in;
  try {
    const auto& fits = doc.at("fits");
    in.intensity = fit_from_json(fits.at("intensity"), "fits.intensity");
    in.ellipticity = fit_from_json(fits.at("ellipticity"), "fits.ellipticity");
    in.direction = fit_from_json(fits.at("direction"), "fits.direction");
    in.cross = fit_from_json(fits.at("cross"), "fits.cross");
    in.time_unit = doc.at("time_unit_s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, o.input + ": " + e.what());
  }
  in.x = o.x;
  if (!std::isfinite(in.x) && cfg) {
    in.x = std::isfinite(cfg->analysis.x_known) ? cfg->analysis.x_known : derive(cfg->laser).x;
  }
  if (!std::isfinite(in.x)) {
    throw Error(ErrorCode::schema, "x is required: pass --x or a config with analysis.x_known");
  }
  const RecoveredParams rec = invert_parameters(in);
  std::ostringstream os;
  write_recovered_json(os, rec);
  ordered_json j = ordered_json::parse(os.str());
  j["params_hash"] = doc.value("params_hash", "");
  j["seed"] = doc.value("seed", std::uint64_t{0});

  const fs::path dir = output_dir(o, cfg ? &*cfg : nullptr);
  write_atomic(dir / "recovered.json", dump(j));
  write_meta(dir, "invert", std::stoull(doc.value("params_hash", "0"), nullptr, 16),
             doc.value("seed", std::uint64_t{0}), {"recovered.json"});
  if (rec.status == InversionStatus::degenerate) std::cerr << "DegenerateSystem: " << rec.note << '\n';
  std::cout << "wrote " << (dir / "recovered.json").string() << '\n';
  return 0;
}

int cmd_figures(const Options& o) {
  const RunConfig cfg = load(o);
  const DerivedParams dp = derive(cfg.laser);
  require_lasing(dp);
  require_stable_polarization(dp);
  const fs::path dir = output_dir(o, &cfg);
  const double step = std::min(cfg.analysis.lag_step, 2.0 * std::numbers::pi / dp.nu_scaled() / 40.0);
  write_atomic(dir / "fig1_vector_field.csv", vector_field_csv(cfg.laser, 12, 24));
  write_atomic(dir / "fig2_covariance.csv", covariance_csv(cfg.laser));
  write_atomic(dir / "fig2_ellipse.csv", ellipse_csv(cfg.laser, 120));
  write_atomic(dir / "fig3_correlators.csv", correlator_curves_csv(cfg.laser, cfg.analysis.max_lag, step));
  write_meta(dir, "figures", params_hash(cfg.laser), std::nullopt,
             {"fig1_vector_field.csv", "fig2_covariance.csv", "fig2_ellipse.csv",
              "fig3_correlators.csv"});
  std::cout << "wrote figure data to " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polarization fluctuations of quantum-well VCSELs"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", o.config, "JSON run configuration");
    if (config_required) c->required();
    sub->add_option("--out", o.out, "output directory (default: config, then $VCSEL_POLAR_OUT, then .)");
    sub->add_option("--seed", o.seed, "override simulation.seed");
    sub->add_flag("--frozen-noise", o.frozen_noise, "nonlinear mode: noise amplitudes at n_s");
  };

  auto* derive_cmd = app.add_subcommand("derive", "derived parameters, stability, eigensystem");
  common(derive_cmd, true);
  auto* simulate_cmd = app.add_subcommand("simulate", "Langevin simulation to a series file");
  common(simulate_cmd, true);
  auto* correlate_cmd = app.add_subcommand("correlate", "correlator table");
  common(correlate_cmd, true);
  correlate_cmd->add_option("--input", o.input, "series file (CSV or binary); omit to simulate");
  correlate_cmd->add_option("--source", o.source, "empirical | analytic | exact-linear")
      ->check(CLI::IsMember({"empirical", "analytic", "exact-linear"}));
  auto* fit_cmd = app.add_subcommand("fit", "damped-oscillation fits of a correlator table");
  common(fit_cmd, false);
  fit_cmd->add_option("--input", o.input, "correlators.csv")->required();
  fit_cmd->add_option("--stderr", o.stderr_input, "standard-error table (default: <input>_stderr.csv)");
  auto* invert_cmd = app.add_subcommand("invert", "recover timescales and anisotropies from fits");
  common(invert_cmd, false);
  invert_cmd->add_option("--input", o.input, "fits.json")->required();
  invert_cmd->add_option("--x", o.x, "injection in threshold units (known from the L-I curve)");
  auto* figures_cmd = app.add_subcommand("figures", "plot data: vector fields, spread, correlators");
  common(figures_cmd, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*derive_cmd) return cmd_derive(o);
    if (*simulate_cmd) return cmd_simulate(o);
    if (*correlate_cmd) return cmd_correlate(o);
    if (*fit_cmd) return cmd_fit(o);
    if (*invert_cmd) return cmd_invert(o);
    if (*figures_cmd) return cmd_figures(o);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "IOError: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 1;
}
