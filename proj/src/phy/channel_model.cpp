#include "nbiot/channel_model.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace nbiot {

namespace {

constexpr int half_len = 16;
constexpr int nof_taps = 2 * half_len;
constexpr int phases = 4096;
constexpr double drift_reserve = 8192;

double kernel(double u)
{
  if (std::abs(u) >= half_len) {
    return 0.0;
  }
  const double s = u == 0.0 ? 1.0 : std::sin(pi * u) / (pi * u);
  const double w = 0.42 + 0.5 * std::cos(pi * u / half_len) + 0.08 * std::cos(2 * pi * u / half_len);
  return s * w;
}

/// Kernel taps for fractional offsets q / phases; row q holds h(m - f) for m = -15..16.
const std::vector<std::array<double, nof_taps>>& kernel_table()
{
  static const auto table = [] {
    std::vector<std::array<double, nof_taps>> t(phases + 1);
    for (int q = 0; q <= phases; ++q) {
      const double f = double(q) / phases;
      for (int i = 0; i < nof_taps; ++i) {
        t[q][i] = kernel(double(i - half_len + 1) - f);
      }
    }
    return t;
  }();
  return table;
}

/// Interpolated sample at position t of a sequence given by get(k).
template <typename Get>
cf_t interpolate_at(double t, Get&& get)
{
  const auto& table = kernel_table();
  const double k0 = std::floor(t);
  const double pos = (t - k0) * phases;
  const int q = int(pos);
  const double a = pos - q;
  const auto& r0 = table[q];
  const auto& r1 = table[std::min(q + 1, phases)];
  cf_t acc{};
  const int64_t base = int64_t(k0) - half_len + 1;
  for (int i = 0; i < nof_taps; ++i) {
    acc += get(base + i) * ((1.0 - a) * r0[i] + a * r1[i]);
  }
  return acc;
}

void add_noise(std::span<cf_t> samples, double variance, std::mt19937_64& rng, std::normal_distribution<double>& g)
{
  const double s = std::sqrt(variance / 2);
  for (auto& x : samples) {
    const double re = g(rng);
    const double im = g(rng);
    x += cf_t(s * re, s * im);
  }
}

} // namespace

void channel_config::validate() const
{
  if (std::isnan(snr_db)) {
    raise(error_code::invalid_config, "snr_db is not a number");
  }
  if (!(delay_samples >= 0) || !std::isfinite(delay_samples)) {
    raise(error_code::invalid_config, "delay_samples must be finite and non-negative");
  }
  if (!(std::abs(sfo_ppm) <= 1000)) {
    raise(error_code::invalid_config, "sfo_ppm must be within +-1000");
  }
  if (!std::isfinite(cfo_hz)) {
    raise(error_code::invalid_config, "cfo_hz must be finite");
  }
  if (!(reference_power > 0)) {
    raise(error_code::invalid_config, "reference_power must be positive");
  }
}

void awgn(std::span<cf_t> samples, double snr_db, std::mt19937_64& rng)
{
  if (samples.empty()) {
    raise(error_code::empty_buffer, "cannot measure the power of an empty buffer");
  }
  double p = 0;
  for (auto x : samples) {
    p += std::norm(x);
  }
  p /= double(samples.size());
  if (p <= 0) {
    raise(error_code::empty_buffer, "buffer carries no signal power");
  }
  awgn(samples, snr_db, p, rng);
}

void awgn(std::span<cf_t> samples, double snr_db, double reference_power, std::mt19937_64& rng)
{
  if (!std::isfinite(snr_db) && snr_db > 0) {
    return;
  }
  std::normal_distribution<double> g(0.0, 1.0);
  add_noise(samples, reference_power * std::pow(10.0, -snr_db / 10.0), rng, g);
}

void apply_cfo(std::span<cf_t> samples, double cfo_hz, double start_sample)
{
  if (cfo_hz == 0) {
    return;
  }
  const double w = 2.0 * pi * cfo_hz / sample_rate_hz;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    samples[n] *= std::polar(1.0, w * (start_sample + double(n)));
  }
}

sample_buffer apply_delay(std::span<const cf_t> samples, double delay_samples)
{
  const int64_t len = int64_t(samples.size());
  auto get = [&](int64_t k) { return (k >= 0 && k < len) ? samples[std::size_t(k)] : cf_t{}; };
  sample_buffer out(samples.size());
  for (int64_t n = 0; n < len; ++n) {
    out[std::size_t(n)] = interpolate_at(double(n) - delay_samples, get);
  }
  return out;
}

channel::channel(const channel_config& cfg) : cfg_(cfg), rng_(cfg.seed)
{
  cfg_.validate();
  const bool fractional = cfg_.delay_samples != std::floor(cfg_.delay_samples);
  interpolating_ = fractional || cfg_.sfo_ppm != 0;
  if (interpolating_) {
    reserve_ = half_len + (cfg_.sfo_ppm < 0 ? drift_reserve : 0.0);
  }
}

cf_t channel::interpolate(double t) const
{
  return interpolate_at(t, [this](int64_t k) {
    if (k < history_base_ || k >= history_base_ + int64_t(history_.size())) {
      return cf_t{};
    }
    return history_[std::size_t(k - history_base_)];
  });
}

sample_buffer channel::process(std::span<const cf_t> in)
{
  history_.insert(history_.end(), in.begin(), in.end());
  n_in_ += int64_t(in.size());
  sample_buffer out(in.size());

  // A receiver clock running fast by sfo_ppm samples the input at n / (1 + sfo).
  const double ratio = 1.0 / (1.0 + cfg_.sfo_ppm * 1e-6);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double n = double(n_out_ + i);
    if (interpolating_) {
      const double t = n * ratio - cfg_.delay_samples - reserve_;
      if (std::floor(t) + half_len > double(n_in_ - 1)) {
        raise(error_code::out_of_range, "sample-rate offset drift exceeded the resampler reserve");
      }
      out[i] = interpolate(t);
    } else {
      const int64_t k = int64_t(n) - int64_t(cfg_.delay_samples);
      out[i] = (k >= history_base_) ? history_[std::size_t(k - history_base_)] : cf_t{};
    }
  }

  // Keep only what future outputs can still reach.
  const double next = double(n_out_ + in.size());
  const double t_next = interpolating_ ? next * std::min(ratio, 1.0) - cfg_.delay_samples - reserve_
                                       : next - cfg_.delay_samples;
  const int64_t keep_from = int64_t(std::floor(t_next)) - half_len - 1;
  while (history_base_ < keep_from && !history_.empty()) {
    history_.pop_front();
    ++history_base_;
  }

  apply_cfo(out, cfg_.cfo_hz, double(n_out_));
  if (std::isfinite(cfg_.snr_db)) {
    add_noise(out, cfg_.reference_power * std::pow(10.0, -cfg_.snr_db / 10.0), rng_, gauss_);
  }
  n_out_ += in.size();
  return out;
}

} // namespace nbiot
