#pragma once

// Correlator estimation, damped-oscillation fits, parameter inversion and
// polarization-filtered intensity.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vcsel/correlation.hpp"
#include "vcsel/stochastic.hpp"

namespace vcsel {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Streaming estimator of lagged products <x_i(t) x_j(t+k dt)> over several
/// channels. Samples are processed in FFT chunks; chunk sums are grouped into
/// batches (doubling the batch length as needed) for batch-means errors.
/// Segments (ensemble members) never correlate across their boundary.
class CorrelationAccumulator {
 public:
  struct Pair {
    int lead;
    int lag;
  };
  struct Estimate {
    std::vector<double> value;
    std::vector<double> stderr_;
  };
  struct Term {
    int pair;
    double coefficient;
  };

  CorrelationAccumulator(int channels, std::vector<Pair> pairs, std::size_t max_lag,
                         int target_batches = 32);

  void push(const double* sample);
  /// Closes the current segment; the next push starts an independent one.
  void end_segment();
  /// Appends the batches of another accumulator with identical layout.
  void merge(const CorrelationAccumulator& other);

  std::size_t samples() const { return total_samples_; }
  std::size_t batches() const { return batches_.size(); }
  std::size_t max_lag() const { return max_lag_; }
  double mean(int channel) const;

  /// Mean-corrected covariance of one pair at lags 0..max_lag.
  Estimate estimate(int pair) const;
  /// Sum of coefficient * covariance, with errors from the batch spread of the
  /// combination itself.
  Estimate combine(const std::vector<Term>& terms) const;

 private:
  struct Batch {
    std::vector<std::vector<double>> sums;  // [pair][lag]
    std::vector<double> counts;             // [lag]
    int chunks = 0;
  };

  void process(std::size_t lead_count, std::size_t lag_count);
  Batch& current_batch();
  void compact();

  int channels_;
  std::vector<Pair> pairs_;
  std::size_t max_lag_;
  int target_batches_;
  std::size_t chunk_;     // samples per chunk
  std::size_t fft_size_;
  int chunks_per_batch_ = 1;
  bool segment_open_ = false;

  std::vector<std::vector<double>> buffer_;  // [channel][sample]
  std::vector<double> channel_sums_;
  std::size_t total_samples_ = 0;
  std::vector<Batch> batches_;
};

/// Channels (dn/n_s, P2, P3) and the pairs of CorrelationRecord.
CorrelationAccumulator make_correlator_accumulator(std::size_t max_lag_samples);
/// Record on every `stride`-th lag of the accumulator.
CorrelationRecord correlator_record(const CorrelationAccumulator& acc, std::size_t stride,
                                    double dt, double n_s, double time_unit);

/// Lag stride and maximum lag in samples; throws InvalidParameters when
/// lag_step is not a multiple of dt.
std::pair<std::size_t, std::size_t> lag_layout(double dt, double max_lag, double lag_step);

/// Empirical correlators. Requires at least 50 max lags worth of samples in
/// total and more than one max lag per member; throws SeriesTooShort.
CorrelationRecord estimate_correlators(const std::vector<FluctuationSeries>& series,
                                       double max_lag, double lag_step);
CorrelationRecord estimate_correlators(const FluctuationSeries& series, double max_lag,
                                       double lag_step);

enum class FilterKind { right_circular, left_circular, linear };

struct PolarizationFilter {
  FilterKind kind = FilterKind::right_circular;
  double angle = 0.0;  // physical polarizer angle (rad) for FilterKind::linear
};

/// Stokes component transmitted by the filter: +-P3 for circular,
/// cos(2 phi) P1 + sin(2 phi) P2 for a linear polarizer at phi.
double projected_stokes(const PolarizationFilter& filter, double P2, double P3);

struct FilteredIntensity {
  std::vector<double> tau;
  std::vector<double> relative;      // <dI dI>/Ibar^2
  std::vector<double> relative_se;
  std::vector<double> intensity;     // <dn dn>/n_s^2
  std::vector<double> polarization;  // <Pp Pp>
  // relative - (intensity + polarization)/2, the averaged identity
  std::vector<double> average_residual;
  std::vector<double> average_residual_se;
  // relative - (intensity + polarization), first order in the fluctuations
  std::vector<double> sum_residual;
  std::vector<double> sum_residual_se;
  double mean_intensity = 0.0;  // Ibar/n_s
};

/// Channels (dn/n_s, projected Stokes component, I/n_s - 1/2).
CorrelationAccumulator make_filter_accumulator(std::size_t max_lag_samples);
void push_filtered(CorrelationAccumulator& acc, const PolarizationFilter& filter, double dn,
                   double P2, double P3);
FilteredIntensity filtered_record(const CorrelationAccumulator& acc, std::size_t stride,
                                  double dt);

/// Transmitted intensity n(1 + P_proj)/2 in units of n_s.
std::vector<double> filtered_series(const FluctuationSeries& series,
                                    const PolarizationFilter& filter);
FilteredIntensity filtered_intensity(const std::vector<FluctuationSeries>& series,
                                     const PolarizationFilter& filter, double max_lag,
                                     double lag_step);

/// Simulates an ensemble and estimates correlators (and optionally one
/// filtered intensity) on the fly, without storing the series.
struct StreamedEstimate {
  CorrelationRecord record;
  FilteredIntensity filtered;
  bool has_filtered = false;
  std::size_t samples = 0;
};
StreamedEstimate estimate_from_simulation(const LaserParams& params, const NoiseConfig& cfg,
                                          double max_lag, double lag_step,
                                          const PolarizationFilter* filter = nullptr);

enum class FitModel { single, cosine_plus_exponential };
enum class FitStatus { ok, diverged, model_mismatch };

const char* to_string(FitModel model);
const char* to_string(FitStatus status);

struct FitOptions {
  bool free_phase = true;  // sin term in the oscillator
  bool weighted = true;    // inverse-variance weights when errors are supplied
  double max_tau = std::numeric_limits<double>::infinity();
  int max_iterations = 200;
  int frequency_grid = 0;  // 0: chosen from the lag grid
  int decay_grid = 12;
};

/// Fitted model
///   e^{-a tau} (C cos(b tau) + S sin(b tau)) [+ E e^{-c tau}].
/// Parameter order in `covariance`: C, S, a, b, E, c.
struct FitResult {
  FitModel model = FitModel::single;
  FitStatus status = FitStatus::ok;
  bool weighted = false;
  bool free_phase = true;

  double amplitude = kNaN, amplitude_se = kNaN;  // C: oscillator value at tau = 0
  double quadrature = 0.0, quadrature_se = 0.0;  // S
  double decay = kNaN, decay_se = kNaN;          // a
  double frequency = kNaN, frequency_se = kNaN;  // b
  double slow_amplitude = 0.0, slow_amplitude_se = 0.0;  // E
  double slow_decay = kNaN, slow_decay_se = kNaN;        // c
  double envelope = kNaN, envelope_se = kNaN;            // sqrt(C^2 + S^2)

  double residual_rms = kNaN;  // unweighted
  double weighted_rms = kNaN;  // RMS of residual / error bar
  double reduced_chi2 = kNaN;
  int iterations = 0;
  std::size_t points = 0;
  Eigen::MatrixXd covariance;
  std::string message;

  double value(double tau) const;
};

/// Grid search over the nonlinear rates with the linear amplitudes solved at
/// each node, refined by Levenberg-Marquardt. Deterministic. Divergence and
/// model mismatch are reported in `status`; a diverged fit carries the best
/// grid point.
FitResult fit_damped_cosine(const std::vector<double>& tau, const std::vector<double>& y,
                            const std::vector<double>& se, FitModel model,
                            const FitOptions& options = {});

/// <P3 P2>/<P3 P3> averaged over tau <= tau_max with weights <P3 P3>^2.
struct RatioEstimate {
  double value = kNaN;
  double se = kNaN;
};
RatioEstimate cross_ratio(const CorrelationRecord& record, double tau_max);

struct Measured {
  double value = kNaN;
  double se = kNaN;
};

/// Fits feeding the inversion, in the time unit `time_unit` (seconds per tau
/// unit of the fitted records).
struct InversionInput {
  FitResult intensity;    // dn_dn_rel, single oscillator
  FitResult ellipticity;  // p3p3, single oscillator
  FitResult direction;    // p2p2, oscillator + exponential
  FitResult cross;        // p3p2, oscillator + exponential
  double x = kNaN;        // injection in threshold units, known from the L-I curve
  double time_unit = 1.0;
};

enum class InversionStatus { ok, degenerate };
const char* to_string(InversionStatus status);

struct RecoveredParams {
  InversionStatus status = InversionStatus::ok;
  Measured gamma, nu, x, A, alpha;
  Measured slow_rate;  // rho + theta
  Measured fast_rate;  // x + r + rho - theta
  Measured splitting;  // nu_n - nu_P (rad/s)
  Measured loss_rate;      // 2k(1+l), 1/s
  Measured emission_rate;  // w(1+g), 1/s
  Measured r, rho, theta;  // NaN when degenerate

  double theta_alternate = kNaN;  // other root of the splitting relation
  bool alternate_admissible = false;
  double nu_consistency = kNaN;      // |b3 + i a3| / nu - 1, ellipticity fit vs intensity fit
  double ellipticity_ratio = kNaN;   // measured / implied <P3P3>(0)
  std::string note;
};

/// Recovers the timescales and anisotropies from the four fits. Throws
/// FitDiverged if an input fit did not converge.
RecoveredParams invert_parameters(const InversionInput& input);

void write_fit_json(std::ostream& os, const FitResult& fit, const std::string& channel);
void write_recovered_json(std::ostream& os, const RecoveredParams& rec);

}  // namespace vcsel
