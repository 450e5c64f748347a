#include "vcsel/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <optional>
#include <ostream>
#include <sstream>

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include "vcsel/io.hpp"

namespace vcsel {

// ---------------------------------------------------------------------------
// Streaming correlation

CorrelationAccumulator::CorrelationAccumulator(int channels, std::vector<Pair> pairs,
                                               std::size_t max_lag, int target_batches)
    : channels_(channels),
      pairs_(std::move(pairs)),
      max_lag_(max_lag),
      target_batches_(std::max(2, target_batches)),
      buffer_(static_cast<std::size_t>(channels)),
      channel_sums_(static_cast<std::size_t>(channels), 0.0) {
  for (const Pair& p : pairs_) {
    if (p.lead < 0 || p.lead >= channels || p.lag < 0 || p.lag >= channels) {
      throw Error(ErrorCode::invalid_parameters, "correlation pair refers to a missing channel");
    }
  }
  fft_size_ = std::bit_ceil(std::max<std::size_t>(4 * (max_lag + 1), 8192));
  chunk_ = fft_size_ - max_lag;
}

void CorrelationAccumulator::push(const double* sample) {
  segment_open_ = true;
  for (int c = 0; c < channels_; ++c) {
    buffer_[c].push_back(sample[c]);
    channel_sums_[c] += sample[c];
  }
  ++total_samples_;
  if (buffer_[0].size() == chunk_ + max_lag_) {
    process(chunk_, chunk_ + max_lag_);
    for (auto& b : buffer_) b.erase(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(chunk_));
  }
}

void CorrelationAccumulator::end_segment() {
  while (buffer_[0].size() > chunk_) {
    process(chunk_, buffer_[0].size());
    for (auto& b : buffer_) b.erase(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(chunk_));
  }
  if (!buffer_[0].empty()) process(buffer_[0].size(), buffer_[0].size());
  for (auto& b : buffer_) b.clear();
  segment_open_ = false;
}

CorrelationAccumulator::Batch& CorrelationAccumulator::current_batch() {
  if (batches_.empty() || batches_.back().chunks >= chunks_per_batch_) {
    Batch b;
    b.sums.assign(pairs_.size(), std::vector<double>(max_lag_ + 1, 0.0));
    b.counts.assign(max_lag_ + 1, 0.0);
    batches_.push_back(std::move(b));
  }
  return batches_.back();
}

void CorrelationAccumulator::compact() {
  while (batches_.size() > 2 * static_cast<std::size_t>(target_batches_)) {
    std::vector<Batch> merged;
    merged.reserve(batches_.size() / 2 + 1);
    for (std::size_t i = 0; i < batches_.size(); i += 2) {
      Batch b = std::move(batches_[i]);
      if (i + 1 < batches_.size()) {
        const Batch& o = batches_[i + 1];
        for (std::size_t p = 0; p < b.sums.size(); ++p) {
          for (std::size_t k = 0; k <= max_lag_; ++k) b.sums[p][k] += o.sums[p][k];
        }
        for (std::size_t k = 0; k <= max_lag_; ++k) b.counts[k] += o.counts[k];
        b.chunks += o.chunks;
      }
      merged.push_back(std::move(b));
    }
    batches_ = std::move(merged);
    chunks_per_batch_ *= 2;
  }
}

void CorrelationAccumulator::process(std::size_t lead_count, std::size_t lag_count) {
  using Complex = std::complex<double>;
  thread_local Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  const std::size_t M = fft_size_;
  const std::size_t H = M / 2 + 1;

  std::vector<std::vector<Complex>> lead(channels_), lagged(channels_);
  std::vector<double> work(M);
  for (int c = 0; c < channels_; ++c) {
    std::fill(work.begin(), work.end(), 0.0);
    std::copy_n(buffer_[c].begin(), lead_count, work.begin());
    lead[c].resize(H);
    fft.fwd(lead[c].data(), work.data(), static_cast<Eigen::Index>(M));
    std::copy_n(buffer_[c].begin(), lag_count, work.begin());
    lagged[c].resize(H);
    fft.fwd(lagged[c].data(), work.data(), static_cast<Eigen::Index>(M));
  }

  Batch& batch = current_batch();
  const std::size_t top = std::min(max_lag_, lag_count - 1);
  std::vector<Complex> spectrum(H);
  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    const auto& X = lead[pairs_[p].lead];
    const auto& Y = lagged[pairs_[p].lag];
    for (std::size_t f = 0; f < H; ++f) spectrum[f] = std::conj(X[f]) * Y[f];
    fft.inv(work.data(), spectrum.data(), static_cast<Eigen::Index>(M));
    for (std::size_t k = 0; k <= top; ++k) batch.sums[p][k] += work[k];
  }
  for (std::size_t k = 0; k <= top; ++k) {
    batch.counts[k] += static_cast<double>(std::min(lead_count, lag_count - k));
  }
  ++batch.chunks;
  compact();
}

void CorrelationAccumulator::merge(const CorrelationAccumulator& other) {
  if (other.channels_ != channels_ || other.max_lag_ != max_lag_ ||
      other.pairs_.size() != pairs_.size()) {
    throw Error(ErrorCode::invalid_parameters, "cannot merge accumulators of different layout");
  }
  if (segment_open_ || other.segment_open_) {
    throw Error(ErrorCode::invalid_parameters, "end_segment() before merging accumulators");
  }
  for (int c = 0; c < channels_; ++c) channel_sums_[c] += other.channel_sums_[c];
  total_samples_ += other.total_samples_;
  for (const Batch& b : other.batches_) batches_.push_back(b);
  // A following push opens a fresh batch.
  chunks_per_batch_ = std::max(chunks_per_batch_, other.chunks_per_batch_);
  if (!batches_.empty()) batches_.back().chunks = std::max(batches_.back().chunks, chunks_per_batch_);
  compact();
}

double CorrelationAccumulator::mean(int channel) const {
  return total_samples_ > 0 ? channel_sums_[channel] / static_cast<double>(total_samples_) : 0.0;
}

CorrelationAccumulator::Estimate CorrelationAccumulator::estimate(int pair) const {
  return combine({{pair, 1.0}});
}

CorrelationAccumulator::Estimate CorrelationAccumulator::combine(
    const std::vector<Term>& terms) const {
  Estimate out;
  out.value.assign(max_lag_ + 1, kNaN);
  out.stderr_.assign(max_lag_ + 1, kNaN);
  std::vector<double> offset(terms.size());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const Pair& p = pairs_[terms[t].pair];
    offset[t] = mean(p.lead) * mean(p.lag);
  }
  const auto batch_value = [&](const Batch& b, std::size_t k) {
    double v = 0.0;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      v += terms[t].coefficient * (b.sums[terms[t].pair][k] / b.counts[k] - offset[t]);
    }
    return v;
  };
  for (std::size_t k = 0; k <= max_lag_; ++k) {
    double count = 0.0;
    std::vector<double> sums(terms.size(), 0.0);
    for (const Batch& b : batches_) {
      count += b.counts[k];
      for (std::size_t t = 0; t < terms.size(); ++t) sums[t] += b.sums[terms[t].pair][k];
    }
    if (count <= 0.0) continue;
    double value = 0.0;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      value += terms[t].coefficient * (sums[t] / count - offset[t]);
    }
    out.value[k] = value;

    double spread = 0.0;
    int used = 0;
    for (const Batch& b : batches_) {
      if (b.counts[k] <= 0.0) continue;
      const double dv = batch_value(b, k) - value;
      spread += b.counts[k] * b.counts[k] * dv * dv;
      ++used;
    }
    if (used >= 2) {
      out.stderr_[k] = std::sqrt(spread / (count * count) * used / (used - 1.0));
    }
  }
  return out;
}

namespace {

enum CorrPair { kDnDn = 0, kP3P3, kP3P2, kP2P2, kP2P3, kDnP2, kDnP3 };
enum FilterPair { kII = 0, kFilterDnDn, kPP };

template <typename T>
std::vector<T> strided(const std::vector<T>& v, std::size_t stride) {
  std::vector<T> out;
  for (std::size_t k = 0; k < v.size(); k += stride) out.push_back(v[k]);
  return out;
}

std::vector<double> scaled(std::vector<double> v, double s) {
  for (double& x : v) x *= s;
  return v;
}

void require_length(std::size_t total, std::size_t shortest, std::size_t max_lag) {
  if (max_lag == 0) return;
  if (total < 50 * max_lag || shortest <= max_lag) {
    std::ostringstream os;
    os << total << " samples (shortest member " << shortest << ") for a maximum lag of " << max_lag
       << " samples; need at least 50 max lags in total";
    throw Error(ErrorCode::series_too_short, os.str());
  }
}

}  // namespace

CorrelationAccumulator make_correlator_accumulator(std::size_t max_lag_samples) {
  // channels: 0 dn/n_s, 1 P2, 2 P3
  return CorrelationAccumulator(
      3, {{0, 0}, {2, 2}, {2, 1}, {1, 1}, {1, 2}, {0, 1}, {0, 2}}, max_lag_samples);
}

CorrelationRecord correlator_record(const CorrelationAccumulator& acc, std::size_t stride,
                                    double dt, double n_s, double time_unit) {
  CorrelationRecord rec;
  for (std::size_t k = 0; k <= acc.max_lag(); k += stride) rec.tau.push_back(k * dt);
  const auto take = [&](int pair) {
    const auto e = acc.estimate(pair);
    return std::make_pair(strided(e.value, stride), strided(e.stderr_, stride));
  };
  auto [dn, dn_se] = take(kDnDn);
  rec.value.dn_dn_rel = dn;
  rec.stderr_.dn_dn_rel = dn_se;
  rec.value.dn_dn_abs = scaled(dn, n_s * n_s);
  rec.stderr_.dn_dn_abs = scaled(dn_se, n_s * n_s);
  std::tie(rec.value.p3p3, rec.stderr_.p3p3) = take(kP3P3);
  std::tie(rec.value.p3p2, rec.stderr_.p3p2) = take(kP3P2);
  std::tie(rec.value.p2p2, rec.stderr_.p2p2) = take(kP2P2);
  rec.p2p3 = take(kP2P3).first;
  std::tie(rec.dn_p2, rec.dn_p2_se) = take(kDnP2);
  std::tie(rec.dn_p3, rec.dn_p3_se) = take(kDnP3);
  rec.n_s = n_s;
  rec.time_unit = time_unit;
  rec.empirical = true;
  rec.source = "empirical";
  return rec;
}

std::pair<std::size_t, std::size_t> lag_layout(double dt, double max_lag, double lag_step) {
  if (!(dt > 0.0) || !(lag_step > 0.0) || !(max_lag >= 0.0)) {
    throw Error(ErrorCode::invalid_parameters, "lag grid needs dt > 0, lag_step > 0, max_lag >= 0");
  }
  const auto stride = static_cast<std::size_t>(std::llround(lag_step / dt));
  if (stride < 1 || std::abs(stride * dt - lag_step) > 1e-6 * lag_step) {
    std::ostringstream os;
    os << "lag step " << lag_step << " is not a multiple of the sample interval " << dt;
    throw Error(ErrorCode::invalid_parameters, os.str());
  }
  const auto lags = static_cast<std::size_t>(std::floor(max_lag / lag_step + 1e-9));
  return {stride, lags * stride};
}

CorrelationRecord estimate_correlators(const std::vector<FluctuationSeries>& series,
                                       double max_lag, double lag_step) {
  if (series.empty()) throw Error(ErrorCode::series_too_short, "no series supplied");
  const FluctuationSeries& first = series.front();
  for (const auto& s : series) {
    if (std::abs(s.dt - first.dt) > 1e-12 * first.dt) {
      throw Error(ErrorCode::invalid_parameters, "ensemble members differ in sample interval");
    }
  }
  const auto [stride, L] = lag_layout(first.dt, max_lag, lag_step);
  std::size_t total = 0, shortest = first.size();
  for (const auto& s : series) {
    total += s.size();
    shortest = std::min(shortest, s.size());
  }
  require_length(total, shortest, L);

  CorrelationAccumulator acc = make_correlator_accumulator(L);
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double v[3] = {s.dn_rel[i], s.p2[i], s.p3[i]};
      acc.push(v);
    }
    acc.end_segment();
  }
  CorrelationRecord rec = correlator_record(acc, stride, first.dt, first.n_s, first.time_unit());
  rec.params_hash = first.params_hash;
  rec.seed = first.seed;
  return rec;
}

CorrelationRecord estimate_correlators(const FluctuationSeries& series, double max_lag,
                                       double lag_step) {
  return estimate_correlators(std::vector<FluctuationSeries>{series}, max_lag, lag_step);
}

// ---------------------------------------------------------------------------
// Filtered intensity

double projected_stokes(const PolarizationFilter& filter, double P2, double P3) {
  switch (filter.kind) {
    case FilterKind::right_circular: return P3;
    case FilterKind::left_circular: return -P3;
    case FilterKind::linear: {
      const double P1 = std::sqrt(std::max(0.0, 1.0 - P2 * P2 - P3 * P3));
      return std::cos(2.0 * filter.angle) * P1 + std::sin(2.0 * filter.angle) * P2;
    }
  }
  return P3;
}

CorrelationAccumulator make_filter_accumulator(std::size_t max_lag_samples) {
  // channels: 0 dn/n_s, 1 projected Stokes component, 2 I/n_s
  return CorrelationAccumulator(3, {{2, 2}, {0, 0}, {1, 1}}, max_lag_samples);
}

void push_filtered(CorrelationAccumulator& acc, const PolarizationFilter& filter, double dn,
                   double P2, double P3) {
  const double p = projected_stokes(filter, P2, P3);
  // Stored relative to the nominal mean 1/2 so the mean correction stays small.
  const double v[3] = {dn, p, 0.5 * (1.0 + dn) * (1.0 + p) - 0.5};
  acc.push(v);
}

FilteredIntensity filtered_record(const CorrelationAccumulator& acc, std::size_t stride,
                                  double dt) {
  FilteredIntensity out;
  for (std::size_t k = 0; k <= acc.max_lag(); k += stride) out.tau.push_back(k * dt);
  const double m = acc.mean(2) + 0.5;
  const double norm = 1.0 / (m * m);
  out.mean_intensity = m;
  const auto rel = acc.combine({{kII, norm}});
  out.relative = strided(rel.value, stride);
  out.relative_se = strided(rel.stderr_, stride);
  out.intensity = strided(acc.estimate(kFilterDnDn).value, stride);
  out.polarization = strided(acc.estimate(kPP).value, stride);
  const auto avg = acc.combine({{kII, norm}, {kFilterDnDn, -0.5}, {kPP, -0.5}});
  out.average_residual = strided(avg.value, stride);
  out.average_residual_se = strided(avg.stderr_, stride);
  const auto sum = acc.combine({{kII, norm}, {kFilterDnDn, -1.0}, {kPP, -1.0}});
  out.sum_residual = strided(sum.value, stride);
  out.sum_residual_se = strided(sum.stderr_, stride);
  return out;
}

std::vector<double> filtered_series(const FluctuationSeries& series,
                                    const PolarizationFilter& filter) {
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double p = projected_stokes(filter, series.p2[i], series.p3[i]);
    out[i] = 0.5 * (1.0 + series.dn_rel[i]) * (1.0 + p);
  }
  return out;
}

FilteredIntensity filtered_intensity(const std::vector<FluctuationSeries>& series,
                                     const PolarizationFilter& filter, double max_lag,
                                     double lag_step) {
  if (series.empty()) throw Error(ErrorCode::series_too_short, "no series supplied");
  const auto [stride, L] = lag_layout(series.front().dt, max_lag, lag_step);
  std::size_t total = 0, shortest = series.front().size();
  for (const auto& s : series) {
    total += s.size();
    shortest = std::min(shortest, s.size());
  }
  require_length(total, shortest, L);
  CorrelationAccumulator acc = make_filter_accumulator(L);
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.size(); ++i) push_filtered(acc, filter, s.dn_rel[i], s.p2[i], s.p3[i]);
    acc.end_segment();
  }
  return filtered_record(acc, stride, series.front().dt);
}

StreamedEstimate estimate_from_simulation(const LaserParams& params, const NoiseConfig& cfg,
                                          double max_lag, double lag_step,
                                          const PolarizationFilter* filter) {
  const DerivedParams dp = derive(params);
  const NoiseConfig run = resolve(cfg, dp);
  const double dt = run.dt * run.sample_every;
  const auto [stride, L] = lag_layout(dt, max_lag, lag_step);
  const auto per_member =
      static_cast<std::size_t>(std::llround(run.duration / dt));
  require_length(per_member * static_cast<std::size_t>(run.ensemble_size), per_member, L);

  struct Member {
    std::optional<CorrelationAccumulator> corr;
    std::optional<CorrelationAccumulator> filt;
  };
  const LinearSystemd sys = build_linear_system(dp);
  const auto members = run_ensemble<Member>(run.ensemble_size, run.threads, [&](std::uint64_t m) {
    Member out;
    out.corr.emplace(make_correlator_accumulator(L));
    if (filter) out.filt.emplace(make_filter_accumulator(L));
    const SampleSink sink = [&](double dn, double p2, double p3) {
      const double v[3] = {dn, p2, p3};
      out.corr->push(v);
      if (filter) push_filtered(*out.filt, *filter, dn, p2, p3);
    };
    if (run.mode == SimulationMode::linearized) {
      stream_linear(sys, run, m, sink);
    } else {
      stream_nonlinear(params, run, m, sink);
    }
    out.corr->end_segment();
    if (filter) out.filt->end_segment();
    return out;
  });

  CorrelationAccumulator corr = make_correlator_accumulator(L);
  std::optional<CorrelationAccumulator> filt;
  if (filter) filt.emplace(make_filter_accumulator(L));
  for (const auto& m : members) {
    corr.merge(*m.corr);
    if (filter) filt->merge(*m.filt);
  }

  StreamedEstimate out;
  out.samples = corr.samples();
  out.record = correlator_record(corr, stride, dt, dp.n_s, 1.0 / dp.gamma);
  out.record.params_hash = params_hash(params);
  out.record.seed = run.seed;
  if (filter) {
    out.filtered = filtered_record(*filt, stride, dt);
    out.has_filtered = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fitting

const char* to_string(FitModel model) {
  return model == FitModel::single ? "single" : "cosine_plus_exponential";
}

const char* to_string(FitStatus status) {
  switch (status) {
    case FitStatus::ok: return "ok";
    case FitStatus::diverged: return "FitDiverged";
    case FitStatus::model_mismatch: return "ModelMismatch";
  }
  return "unknown";
}

double FitResult::value(double tau) const {
  double v = std::exp(-decay * tau) *
             (amplitude * std::cos(frequency * tau) + quadrature * std::sin(frequency * tau));
  if (model == FitModel::cosine_plus_exponential) v += slow_amplitude * std::exp(-slow_decay * tau);
  return v;
}

namespace {

// Parameter vector layout: C, S, a, b, E, c.
enum Param { kC = 0, kS, kA, kB, kE, kSlow, kParams };

struct Problem {
  Eigen::VectorXd tau, y, sqrt_w;
  bool phase = true;
  bool slow = false;

  std::vector<int> active() const {
    std::vector<int> idx{kC};
    if (phase) idx.push_back(kS);
    idx.push_back(kA);
    idx.push_back(kB);
    if (slow) {
      idx.push_back(kE);
      idx.push_back(kSlow);
    }
    return idx;
  }

  // Weighted residual y - f and the weighted Jacobian of f on active params.
  double evaluate(const Eigen::Matrix<double, kParams, 1>& p, Eigen::VectorXd* residual,
                  Eigen::MatrixXd* jacobian) const {
    const auto idx = active();
    const Eigen::Index n = tau.size();
    if (residual) residual->resize(n);
    if (jacobian) jacobian->resize(n, static_cast<Eigen::Index>(idx.size()));
    double chi2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = tau[i];
      const double e = std::exp(-p[kA] * t);
      const double c = std::cos(p[kB] * t), s = std::sin(p[kB] * t);
      const double osc = e * (p[kC] * c + p[kS] * s);
      double f = osc;
      double es = 0.0;
      if (slow) {
        es = std::exp(-p[kSlow] * t);
        f += p[kE] * es;
      }
      const double r = sqrt_w[i] * (y[i] - f);
      chi2 += r * r;
      if (residual) (*residual)[i] = r;
      if (jacobian) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
          double d = 0.0;
          switch (idx[j]) {
            case kC: d = e * c; break;
            case kS: d = e * s; break;
            case kA: d = -t * osc; break;
            case kB: d = t * e * (-p[kC] * s + p[kS] * c); break;
            case kE: d = es; break;
            case kSlow: d = -t * p[kE] * es; break;
          }
          (*jacobian)(i, static_cast<Eigen::Index>(j)) = sqrt_w[i] * d;
        }
      }
    }
    return chi2;
  }
};

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    g[i] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  }
  return g;
}

struct GridBest {
  double chi2 = std::numeric_limits<double>::infinity();
  Eigen::Matrix<double, kParams, 1> p = Eigen::Matrix<double, kParams, 1>::Zero();
};

GridBest grid_search(const Problem& pr, const FitOptions& opt) {
  const Eigen::Index n = pr.tau.size();
  const double t0 = pr.tau.minCoeff();
  const double span = std::max(pr.tau.maxCoeff() - t0, 1e-300);
  double step = span;
  for (Eigen::Index i = 1; i < n; ++i) {
    const double d = pr.tau[i] - pr.tau[i - 1];
    if (d > 0.0) step = std::min(step, d);
  }
  const double b_max = 0.95 * std::numbers::pi / step;
  const double b_min = 0.25 * std::numbers::pi / span;
  int nb = opt.frequency_grid;
  if (nb <= 0) nb = static_cast<int>(std::ceil((b_max - b_min) / (0.25 * std::numbers::pi / span))) + 1;
  nb = std::max(nb, 2);
  const auto rates = log_grid(0.2 / span, 40.0 / span, std::max(2, opt.decay_grid));
  const auto slow_rates = pr.slow ? log_grid(0.2 / span, 40.0 / span, std::max(2, opt.decay_grid / 2))
                                  : std::vector<double>{0.0};

  std::vector<Eigen::VectorXd> decays;
  for (double a : rates) decays.push_back((-a * pr.tau.array()).exp().matrix().cwiseProduct(pr.sqrt_w));
  std::vector<Eigen::VectorXd> slows;
  for (double c : slow_rates) slows.push_back((-c * pr.tau.array()).exp().matrix().cwiseProduct(pr.sqrt_w));
  const Eigen::VectorXd yw = pr.y.cwiseProduct(pr.sqrt_w);
  const double yy = yw.squaredNorm();

  const int m = 1 + (pr.phase ? 1 : 0) + (pr.slow ? 1 : 0);
  GridBest best;
  Eigen::MatrixXd basis(n, m);
  Eigen::VectorXd cb(n), sb(n);
  for (int ib = 0; ib < nb; ++ib) {
    const double b = b_min + (b_max - b_min) * ib / (nb - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      cb[i] = std::cos(b * pr.tau[i]);
      sb[i] = std::sin(b * pr.tau[i]);
    }
    for (std::size_t ia = 0; ia < rates.size(); ++ia) {
      basis.col(0) = decays[ia].cwiseProduct(cb);
      if (pr.phase) basis.col(1) = decays[ia].cwiseProduct(sb);
      for (std::size_t ic = 0; ic < slows.size(); ++ic) {
        if (pr.slow) basis.col(m - 1) = slows[ic];
        const Eigen::MatrixXd G = basis.transpose() * basis;
        const Eigen::VectorXd rhs = basis.transpose() * yw;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
        if (ldlt.info() != Eigen::Success) continue;
        const Eigen::VectorXd coef = ldlt.solve(rhs);
        const double chi2 = yy - coef.dot(rhs);
        if (std::isfinite(chi2) && chi2 < best.chi2) {
          best.chi2 = chi2;
          best.p.setZero();
          best.p[kC] = coef[0];
          if (pr.phase) best.p[kS] = coef[1];
          best.p[kA] = rates[ia];
          best.p[kB] = b;
          if (pr.slow) {
            best.p[kE] = coef[m - 1];
            best.p[kSlow] = slow_rates[ic];
          }
        }
      }
    }
  }
  return best;
}

void fill_result(FitResult& out, const Problem& pr, const Eigen::Matrix<double, kParams, 1>& p,
                 std::size_t points) {
  const auto idx = pr.active();
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  const double chi2 = pr.evaluate(p, &r, &J);
  const auto dof = static_cast<double>(std::max<std::ptrdiff_t>(
      1, static_cast<std::ptrdiff_t>(points) - static_cast<std::ptrdiff_t>(idx.size())));
  const Eigen::MatrixXd H = J.transpose() * J;
  const Eigen::MatrixXd cov_active =
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(H).pseudoInverse() * (chi2 / dof);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(kParams, kParams);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < idx.size(); ++j) cov(idx[i], idx[j]) = cov_active(i, j);
  }
  const auto se = [&](int k) { return std::sqrt(std::max(0.0, cov(k, k))); };

  out.amplitude = p[kC];
  out.amplitude_se = se(kC);
  out.quadrature = p[kS];
  out.quadrature_se = se(kS);
  out.decay = p[kA];
  out.decay_se = se(kA);
  out.frequency = p[kB];
  out.frequency_se = se(kB);
  if (pr.slow) {
    out.slow_amplitude = p[kE];
    out.slow_amplitude_se = se(kE);
    out.slow_decay = p[kSlow];
    out.slow_decay_se = se(kSlow);
  }
  out.envelope = std::hypot(p[kC], p[kS]);
  if (out.envelope > 0.0) {
    Eigen::Vector2d g(p[kC] / out.envelope, p[kS] / out.envelope);
    Eigen::Matrix2d c;
    c << cov(kC, kC), cov(kC, kS), cov(kS, kC), cov(kS, kS);
    out.envelope_se = std::sqrt(std::max(0.0, g.dot(c * g)));
  } else {
    out.envelope_se = se(kC);
  }
  out.covariance = cov;
  out.reduced_chi2 = chi2 / dof;
  out.weighted_rms = std::sqrt(chi2 / static_cast<double>(points));

  double rss = 0.0;
  for (Eigen::Index i = 0; i < pr.tau.size(); ++i) {
    const double d = r[i] / pr.sqrt_w[i];
    rss += d * d;
  }
  out.residual_rms = std::sqrt(rss / static_cast<double>(points));
}

}  // namespace

FitResult fit_damped_cosine(const std::vector<double>& tau, const std::vector<double>& y,
                            const std::vector<double>& se, FitModel model,
                            const FitOptions& options) {
  if (tau.size() != y.size()) throw Error(ErrorCode::invalid_parameters, "tau and y differ in length");
  FitResult out;
  out.model = model;
  out.free_phase = options.free_phase;

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    if (tau[i] <= options.max_tau && std::isfinite(y[i])) keep.push_back(i);
  }
  Problem pr;
  pr.phase = options.free_phase;
  pr.slow = model == FitModel::cosine_plus_exponential;
  const std::size_t nparams = pr.active().size();
  if (keep.size() < nparams + 2) {
    throw Error(ErrorCode::series_too_short, "too few lag points for the fit model");
  }

  bool weighted = options.weighted && se.size() == tau.size();
  double se_max = 0.0;
  if (weighted) {
    for (std::size_t i : keep) {
      if (!std::isfinite(se[i]) || se[i] < 0.0) weighted = false;
      else se_max = std::max(se_max, se[i]);
    }
    if (!(se_max > 0.0)) weighted = false;
  }
  const auto n = static_cast<Eigen::Index>(keep.size());
  pr.tau.resize(n);
  pr.y.resize(n);
  pr.sqrt_w.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t k = keep[i];
    pr.tau[i] = tau[k];
    pr.y[i] = y[k];
    pr.sqrt_w[i] = weighted ? 1.0 / std::max(se[k], 1e-6 * se_max) : 1.0;
  }
  out.weighted = weighted;
  out.points = keep.size();

  const GridBest grid = grid_search(pr, options);
  if (!std::isfinite(grid.chi2)) {
    out.status = FitStatus::diverged;
    out.message = "grid search found no solvable node";
    return out;
  }

  // Levenberg-Marquardt on the active parameters.
  const auto idx = pr.active();
  Eigen::Matrix<double, kParams, 1> p = grid.p;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  double chi2 = pr.evaluate(p, &r, &J);
  const double scale = pr.y.cwiseProduct(pr.sqrt_w).squaredNorm();
  double mu = -1.0;
  bool converged = false;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    const Eigen::VectorXd diag = H.diagonal().cwiseMax(1e-300);
    if (mu < 0.0) mu = 1e-3 * diag.maxCoeff();
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::MatrixXd A = H;
      A.diagonal() += mu * diag;
      const Eigen::VectorXd delta = A.ldlt().solve(g);
      Eigen::Matrix<double, kParams, 1> trial = p;
      for (std::size_t j = 0; j < idx.size(); ++j) trial[idx[j]] += delta[static_cast<Eigen::Index>(j)];
      Eigen::VectorXd rt;
      Eigen::MatrixXd Jt;
      const double chi2_t = pr.evaluate(trial, &rt, &Jt);
      if (std::isfinite(chi2_t) && chi2_t <= chi2) {
        const double drop = chi2 - chi2_t;
        double rel_step = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
          rel_step = std::max(rel_step, std::abs(delta[static_cast<Eigen::Index>(j)]) /
                                            std::max(std::abs(trial[idx[j]]), 1e-300));
        }
        p = trial;
        r = rt;
        J = Jt;
        chi2 = chi2_t;
        mu = std::max(mu / 3.0, 1e-20 * diag.maxCoeff());
        accepted = true;
        if (drop <= 1e-15 * chi2 + 1e-30 * scale && rel_step < 1e-10) converged = true;
        if (chi2 <= 1e-32 * scale) converged = true;
        break;
      }
      mu *= 4.0;
    }
    if (!accepted) {
      converged = true;  // no descent direction left
      break;
    }
    if (converged) break;
  }
  out.iterations = it + 1;

  if (p[kB] < 0.0) {
    p[kB] = -p[kB];
    p[kS] = -p[kS];
  }
  const bool sane = p.allFinite() && p[kA] >= 0.0 && (!pr.slow || p[kSlow] >= 0.0);
  if (!sane) {
    fill_result(out, pr, grid.p, keep.size());
    out.status = FitStatus::diverged;
    out.message = "refinement left the admissible region; best grid point reported";
    return out;
  }
  fill_result(out, pr, p, keep.size());
  out.status = FitStatus::ok;
  if (!converged) out.message = "iteration limit reached";
  if (weighted && out.weighted_rms > 5.0) {
    out.status = FitStatus::model_mismatch;
    std::ostringstream os;
    os << "residual RMS is " << out.weighted_rms << " error bars";
    out.message = os.str();
  }
  return out;
}

RatioEstimate cross_ratio(const CorrelationRecord& rec, double tau_max) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < rec.size() && rec.tau[k] <= tau_max; ++k) {
    num += rec.value.p3p2[k] * rec.value.p3p3[k];
    den += rec.value.p3p3[k] * rec.value.p3p3[k];
  }
  RatioEstimate out;
  if (!(den > 0.0)) return out;
  out.value = num / den;
  if (rec.stderr_.p3p3.size() == rec.size()) {
    double var = 0.0;
    for (std::size_t k = 0; k < rec.size() && rec.tau[k] <= tau_max; ++k) {
      const double d_cross = rec.value.p3p3[k] / den;
      const double d_auto = (rec.value.p3p2[k] - 2.0 * out.value * rec.value.p3p3[k]) / den;
      var += d_cross * d_cross * rec.stderr_.p3p2[k] * rec.stderr_.p3p2[k] +
             d_auto * d_auto * rec.stderr_.p3p3[k] * rec.stderr_.p3p3[k];
    }
    out.se = std::sqrt(var);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inversion

const char* to_string(InversionStatus status) {
  return status == InversionStatus::ok ? "ok" : "DegenerateSystem";
}

namespace {

enum Input { kAn = 0, kBn, kCn, kA3, kB3, kEnv3, kEnvC, kSlowRate, kInputs };

struct Branch {
  bool larger = true;
};

struct Solved {
  double gamma, nu, A, loss, emission, alpha, u, v, splitting;
  double theta = kNaN, rho = kNaN, r = kNaN, theta_other = kNaN;
  bool real_roots = false, other_admissible = false, admissible = false;
  bool larger = true;
};

Solved solve(const std::array<double, kInputs>& m, double x, const Branch* branch) {
  Solved s;
  s.gamma = 2.0 * m[kAn] / x;
  s.nu = std::sqrt(m[kBn] * m[kBn] + m[kAn] * m[kAn]);
  s.A = m[kCn] * x * (x - 1.0);
  s.loss = s.nu * s.nu / (s.gamma * (x - 1.0));
  s.emission = s.A * s.gamma * s.gamma / s.loss;
  s.alpha = m[kEnvC] / m[kEnv3];
  s.u = 2.0 * m[kA3] / s.gamma;
  s.v = m[kSlowRate] / s.gamma;
  s.splitting = m[kBn] - m[kB3];

  const double S = s.splitting * 8.0 * s.nu / (s.gamma * s.gamma);
  const double w = s.u - 2.0 * s.v;
  const auto r_of = [&](double th) { return s.u - x - s.v + 2.0 * th; };
  if (!(s.alpha > 1e-9)) {
    // Without alpha there is no frequency anisotropy to separate.
    s.real_roots = true;
    s.theta = 0.0;
    s.admissible = r_of(0.0) >= 0.0;
  } else {
    const double qa = 12.0 - 4.0 / (s.alpha * s.alpha);
    const double qb = 8.0 * w;
    const double qc = w * w - S - x * x;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0 && qa != 0.0) {
      s.real_roots = true;
      const double sq = std::sqrt(disc);
      const double q = -0.5 * (qb + (qb >= 0.0 ? sq : -sq));
      double r1 = q / qa, r2 = q != 0.0 ? qc / q : -qb / qa;
      if (r1 < r2) std::swap(r1, r2);
      const bool ok1 = r_of(r1) >= 0.0, ok2 = r_of(r2) >= 0.0;
      bool larger = branch ? branch->larger : (ok1 || !ok2);
      s.larger = larger;
      s.theta = larger ? r1 : r2;
      s.theta_other = larger ? r2 : r1;
      s.admissible = larger ? ok1 : ok2;
      s.other_admissible = larger ? ok2 : ok1;
    }
  }
  if (s.real_roots) {
    s.rho = s.v - s.theta;
    s.r = r_of(s.theta);
  }
  return s;
}

}  // namespace

RecoveredParams invert_parameters(const InversionInput& in) {
  for (const FitResult* f : {&in.intensity, &in.ellipticity, &in.direction, &in.cross}) {
    if (f->status == FitStatus::diverged) {
      throw Error(ErrorCode::fit_diverged, "an input fit did not converge: " + f->message);
    }
  }
  if (!(in.x > 1.0)) throw Error(ErrorCode::below_threshold, "known injection x must exceed 1");
  if (in.direction.model != FitModel::cosine_plus_exponential) {
    throw Error(ErrorCode::invalid_parameters, "direction fit needs the two-term model");
  }
  const double tu = in.time_unit;
  std::array<double, kInputs> m{}, se{};
  m[kAn] = in.intensity.decay / tu;
  se[kAn] = in.intensity.decay_se / tu;
  m[kBn] = in.intensity.frequency / tu;
  se[kBn] = in.intensity.frequency_se / tu;
  m[kCn] = in.intensity.amplitude;
  se[kCn] = in.intensity.amplitude_se;
  m[kA3] = in.ellipticity.decay / tu;
  se[kA3] = in.ellipticity.decay_se / tu;
  m[kB3] = in.ellipticity.frequency / tu;
  se[kB3] = in.ellipticity.frequency_se / tu;
  m[kEnv3] = in.ellipticity.envelope;
  se[kEnv3] = in.ellipticity.envelope_se;
  m[kEnvC] = in.cross.envelope;
  se[kEnvC] = in.cross.envelope_se;
  m[kSlowRate] = in.direction.slow_decay / tu;
  se[kSlowRate] = in.direction.slow_decay_se / tu;

  const Solved c = solve(m, in.x, nullptr);
  const Branch branch{c.larger};

  // First-order propagation with central differences, inputs independent.
  constexpr int kOut = 13;
  const auto outputs = [&](const Solved& s) {
    return std::array<double, kOut>{s.gamma, s.nu, s.A, s.alpha, s.u, s.v, s.splitting,
                                    s.loss, s.emission, s.r, s.rho, s.theta, 0.0};
  };
  const auto center = outputs(c);
  std::array<double, kOut> var{};
  for (int i = 0; i < kInputs; ++i) {
    if (!(se[i] > 0.0)) continue;
    const double h = std::max(1e-6 * std::abs(m[i]), 1e-3 * se[i]);
    auto up = m, down = m;
    up[i] += h;
    down[i] -= h;
    const auto fu = outputs(solve(up, in.x, &branch));
    const auto fd = outputs(solve(down, in.x, &branch));
    for (int k = 0; k < kOut; ++k) {
      const double d = (fu[k] - fd[k]) / (2.0 * h);
      var[k] += d * d * se[i] * se[i];
    }
  }
  const auto est = [&](int k) { return Measured{center[k], std::sqrt(var[k])}; };

  RecoveredParams out;
  out.gamma = est(0);
  out.nu = est(1);
  out.A = est(2);
  out.alpha = est(3);
  out.fast_rate = est(4);
  out.slow_rate = est(5);
  out.splitting = est(6);
  out.loss_rate = est(7);
  out.emission_rate = est(8);
  out.x = Measured{in.x, 0.0};
  out.nu_consistency = std::sqrt(m[kB3] * m[kB3] + m[kA3] * m[kA3]) / c.nu - 1.0;
  out.ellipticity_ratio = m[kEnv3] / (c.A / ((in.x - 1.0) * c.u));

  std::ostringstream note;
  const double split_se = std::sqrt(se[kBn] * se[kBn] + se[kB3] * se[kB3]);
  if (!(std::abs(c.splitting) > split_se)) {
    out.status = InversionStatus::degenerate;
    note << "frequency splitting " << c.splitting << " rad/s is below its standard error "
         << split_se << "; only rho+theta and x+r+rho-theta are determined";
  } else if (!c.real_roots) {
    out.status = InversionStatus::degenerate;
    note << "the splitting relation has no real root for theta";
  } else {
    out.r = est(9);
    out.rho = est(10);
    out.theta = est(11);
    out.theta_alternate = c.theta_other;
    out.alternate_admissible = c.other_admissible;
    if (!c.admissible) note << "no root gives r >= 0; reported root is the larger one. ";
    if (c.other_admissible) {
      note << "second admissible root theta = " << c.theta_other << " (chosen: larger root)";
    }
  }
  out.note = note.str();
  return out;
}

void write_fit_json(std::ostream& os, const FitResult& f, const std::string& channel) {
  nlohmann::ordered_json j;
  j["channel"] = channel;
  j["model"] = to_string(f.model);
  j["status"] = to_string(f.status);
  j["weighted"] = f.weighted;
  j["free_phase"] = f.free_phase;
  j["points"] = f.points;
  j["iterations"] = f.iterations;
  const auto pair = [](double v, double e) { return nlohmann::ordered_json{{"value", v}, {"se", e}}; };
  j["amplitude"] = pair(f.amplitude, f.amplitude_se);
  j["quadrature"] = pair(f.quadrature, f.quadrature_se);
  j["envelope"] = pair(f.envelope, f.envelope_se);
  j["decay_rate_scaled"] = pair(f.decay, f.decay_se);
  j["frequency_scaled"] = pair(f.frequency, f.frequency_se);
  if (f.model == FitModel::cosine_plus_exponential) {
    j["slow_amplitude"] = pair(f.slow_amplitude, f.slow_amplitude_se);
    j["slow_decay_rate_scaled"] = pair(f.slow_decay, f.slow_decay_se);
  }
  j["residual_rms"] = f.residual_rms;
  j["weighted_rms"] = f.weighted_rms;
  j["reduced_chi2"] = f.reduced_chi2;
  j["message"] = f.message;
  os << j.dump(2) << '\n';
}

void write_recovered_json(std::ostream& os, const RecoveredParams& rec) {
  nlohmann::ordered_json j;
  const auto pair = [](const Measured& m) {
    return nlohmann::ordered_json{{"value", m.value}, {"se", m.se}};
  };
  j["status"] = to_string(rec.status);
  j["gamma_per_s"] = pair(rec.gamma);
  j["nu_rad_per_s"] = pair(rec.nu);
  j["x"] = pair(rec.x);
  j["A"] = pair(rec.A);
  j["alpha"] = pair(rec.alpha);
  j["rho_plus_theta"] = pair(rec.slow_rate);
  j["x_plus_r_plus_rho_minus_theta"] = pair(rec.fast_rate);
  j["nu_n_minus_nu_P_rad_per_s"] = pair(rec.splitting);
  j["loss_rate_per_s"] = pair(rec.loss_rate);
  j["emission_rate_per_s"] = pair(rec.emission_rate);
  j["r"] = pair(rec.r);
  j["rho"] = pair(rec.rho);
  j["theta"] = pair(rec.theta);
  j["theta_alternate"] = rec.theta_alternate;
  j["alternate_admissible"] = rec.alternate_admissible;
  j["nu_consistency"] = rec.nu_consistency;
  j["ellipticity_ratio"] = rec.ellipticity_ratio;
  j["note"] = rec.note;
  os << j.dump(2) << '\n';
}

}  // namespace vcsel
