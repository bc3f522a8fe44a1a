#pragma once

#include "nbiot/common.hpp"

#include <deque>
#include <limits>
#include <random>
#include <span>

namespace nbiot {

struct channel_config {
  /// Per-resource-element SNR; infinity disables noise.
  double snr_db = std::numeric_limits<double>::infinity();
  double cfo_hz = 0;
  double delay_samples = 0;
  /// Receiver sample-clock offset (positive: receiver samples faster); 0 keeps the resampler off.
  double sfo_ppm = 0;
  uint64_t seed = 1;
  /// Energy of one resource element. Noise variance per sample is reference_power / snr,
  /// which with the unitary OFDM modulator is the per-RE noise variance.
  double reference_power = 1.0;

  void validate() const;
};

/// Adds noise sized from the measured buffer power. Throws empty_buffer on an empty or silent buffer.
void awgn(std::span<cf_t> samples, double snr_db, std::mt19937_64& rng);
/// Adds noise of variance reference_power / snr regardless of the buffer content.
void awgn(std::span<cf_t> samples, double snr_db, double reference_power, std::mt19937_64& rng);

/// Multiplies by exp(j 2 pi cfo (start + n) / fs).
void apply_cfo(std::span<cf_t> samples, double cfo_hz, double start_sample = 0);

/// Band-limited (windowed-sinc) delay of a finite buffer; samples outside it are taken as zero.
sample_buffer apply_delay(std::span<const cf_t> samples, double delay_samples);

/// Streaming impairment chain: delay / resampling, then CFO, then AWGN.
/// Output has the same length as every input chunk.
class channel
{
public:
  explicit channel(const channel_config& cfg);

  sample_buffer process(std::span<const cf_t> in);

  /// Extra latency the interpolating path adds on top of delay_samples.
  double added_latency() const { return reserve_; }
  uint64_t samples_processed() const { return n_out_; }
  const channel_config& config() const { return cfg_; }

private:
  cf_t interpolate(double t) const;

  channel_config cfg_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  bool interpolating_ = false;
  double reserve_ = 0;
  uint64_t n_out_ = 0;
  /// Input history: history_[i] is input sample history_base_ + i.
  std::deque<cf_t> history_;
  int64_t history_base_ = 0;
  int64_t n_in_ = 0;
};

} // namespace nbiot
