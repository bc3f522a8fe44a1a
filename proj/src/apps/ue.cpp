#include "nbiot/apps/ue.hpp"

#include "nbiot/ul_channels.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace nbiot {

namespace {

constexpr std::size_t search_window = 4 * samples_per_frame;
constexpr std::size_t search_step = 2 * samples_per_frame;
constexpr int64_t frame_len = samples_per_frame;
/// Samples kept ahead of a subframe for the NPSS timing search.
constexpr int64_t lookahead = 4;
constexpr std::size_t sfo_history = 256;
constexpr std::size_t sfo_min_points = 8;

int64_t floor_div(int64_t a, int64_t b)
{
  return a / b - ((a % b != 0) && ((a < 0) != (b < 0)));
}

unsigned mod8(int64_t v)
{
  return unsigned(((v % 8) + 8) % 8);
}

} // namespace

const char* to_string(ue_state s)
{
  switch (s) {
    case ue_state::search:
      return "search";
    case ue_state::mib:
      return "mib";
    case ue_state::camped:
      return "camped";
  }
  return "?";
}

double ue_stats::npdsch_bler() const
{
  const uint64_t n = blocks_ok + blocks_failed;
  return n == 0 ? 0.0 : double(blocks_failed) / double(n);
}

double ue_stats::throughput_kbps() const
{
  return camped_subframes == 0 ? 0.0 : double(bits_ok) / double(camped_subframes);
}

std::string format_stats(const ue_stats& s)
{
  char buf[384];
  std::snprintf(buf, sizeof buf,
                "state=%s cell_id=%u hfn=%u sfn=%u subframe=%u mib_sfn=%u cfo_hz=%.1f sfo_ppm=%.2f "
                "npdsch_bler=%.3f blocks_ok=%llu blocks_failed=%llu camped_ms=%llu throughput_kbps=%.2f",
                to_string(s.state), unsigned(s.n_id_ncell), unsigned(s.time.hfn), unsigned(s.time.sfn),
                unsigned(s.time.subframe), s.mib_sfn, s.cfo_hz, s.sfo_ppm, s.npdsch_bler(),
                static_cast<unsigned long long>(s.blocks_ok), static_cast<unsigned long long>(s.blocks_failed),
                static_cast<unsigned long long>(s.camped_subframes), s.throughput_kbps());
  return buf;
}

std::map<std::string, std::string> parse_stats(const std::string& line)
{
  std::map<std::string, std::string> out;
  std::istringstream in(line);
  std::string field;
  while (in >> field) {
    const auto eq = field.find('=');
    if (eq != std::string::npos) {
      out[field.substr(0, eq)] = field.substr(eq + 1);
    }
  }
  return out;
}

ue::ue(const ue_config& cfg) : cfg_(cfg) {}

std::vector<uint8_t> ue::take_payload()
{
  return std::exchange(payload_, {});
}

void ue::derotate(std::span<cf_t> samples)
{
  const double step = -2.0 * pi * stats_.cfo_hz / sample_rate_hz;
  for (auto& s : samples) {
    s *= std::polar(1.0, phase_);
    phase_ += step;
  }
  phase_ = std::remainder(phase_, 2.0 * pi);
}

sample_buffer ue::push(std::span<const cf_t> rx)
{
  const int64_t chunk_start = received_;
  buffer_.insert(buffer_.end(), rx.begin(), rx.end());
  received_ += int64_t(rx.size());
  if (stats_.state != ue_state::search) {
    derotate(std::span(buffer_).last(rx.size()));
  }

  if (stats_.state == ue_state::search) {
    search();
  }
  if (stats_.state == ue_state::mib) {
    collect_mib();
  }
  if (stats_.state == ue_state::camped) {
    camp();
  }

  int64_t keep_from = base_;
  if (stats_.state == ue_state::camped) {
    keep_from = sf_start_ - 64;
  } else if (stats_.state == ue_state::mib) {
    keep_from = frame_origin_ + (mib_first_frame_ + int64_t(mib_grids_.size())) * frame_len - 64;
  }
  if (keep_from > base_) {
    const auto n = std::min<int64_t>(keep_from - base_, int64_t(buffer_.size()));
    buffer_.erase(buffer_.begin(), buffer_.begin() + n);
    base_ += n;
  }

  sample_buffer out(rx.size());
  for (auto it = ul_tx_.begin(); it != ul_tx_.end();) {
    const int64_t s = it->first;
    const int64_t e = s + int64_t(it->second.size());
    if (s >= received_) {
      break;
    }
    for (int64_t n = std::max(s, chunk_start); n < std::min(e, received_); ++n) {
      out[std::size_t(n - chunk_start)] = it->second[std::size_t(n - s)];
    }
    it = e <= received_ ? ul_tx_.erase(it) : std::next(it);
  }
  return out;
}

void ue::search()
{
  while (buffer_.size() >= search_window) {
    try {
      const auto r = acquire_cell(std::span(buffer_).first(search_window));
      cell_.n_id_ncell = r.n_id_ncell;
      stats_.n_id_ncell = r.n_id_ncell;
      stats_.cfo_hz = r.cfo_hz;
      phase_ = 0;
      derotate(buffer_);
      frame_origin_ = base_ + r.even_frame_start;
      origin_sfn_mod8_ = r.sfn_mod8;
      mib_first_frame_ = -floor_div(frame_origin_ - base_, frame_len);
      mib_grids_.clear();
      stats_.state = ue_state::mib;
      return;
    } catch (const error& e) {
      if (e.code() != error_code::not_found) {
        throw;
      }
    }
    buffer_.erase(buffer_.begin(), buffer_.begin() + std::ptrdiff_t(search_step));
    base_ += int64_t(search_step);
  }
  if (double(received_) >= cfg_.search_timeout_ms * samples_per_subframe) {
    raise(error_code::no_signal, "no cell found within " + std::to_string(cfg_.search_timeout_ms) + " ms");
  }
}

void ue::collect_mib()
{
  for (;;) {
    const int64_t k = mib_first_frame_ + int64_t(mib_grids_.size());
    const int64_t pos = frame_origin_ + k * frame_len;
    if (pos + int64_t(samples_per_subframe) > received_) {
      return;
    }
    mib_grids_.push_back(ofdm_demodulate(std::span(buffer_).subspan(index(pos), samples_per_subframe)));
    try {
      const auto r = npbch_decode(mib_grids_, cell_, mod8(origin_sfn_mod8_ + mib_first_frame_));
      const uint64_t first_abs = (uint64_t(r.m.hfn_lsb) * 1024 + r.m.sfn_msb * 64u + r.sfn_mod64) * subframes_per_frame;
      const uint64_t last_abs = first_abs + (mib_grids_.size() - 1) * subframes_per_frame;
      const auto last = timing_counters::from_absolute(last_abs);
      noise_ref_ = estimate_channel(mib_grids_.back(), cell_, last).noise_var;
      stats_.last_mib = r.m;
      stats_.mib_sfn = last.sfn;
      ++stats_.mib_decoded;
      tc_ = timing_counters::from_absolute(last_abs + 1);
      sf_start_ = pos + int64_t(samples_per_subframe);
      stats_.time = last;
      data_cells_ = data_positions(cell_);
      stats_.state = ue_state::camped;
      mib_grids_.clear();
      return;
    } catch (const error& e) {
      if (e.code() != error_code::crc_fail) {
        throw;
      }
    }
    if (mib_grids_.size() >= cfg_.max_mib_frames) {
      mib_grids_.clear();
      stats_.state = ue_state::search;
      const int64_t keep = std::min<int64_t>(int64_t(buffer_.size()), int64_t(search_window));
      base_ += int64_t(buffer_.size()) - keep;
      buffer_.erase(buffer_.begin(), buffer_.end() - keep);
      return;
    }
  }
}

void ue::camp()
{
  while (sf_start_ + int64_t(samples_per_subframe) + lookahead <= received_) {
    const int64_t start = sf_start_;
    process_subframe(std::span(buffer_).subspan(index(start), samples_per_subframe));
    stats_.time = tc_;
    ++stats_.camped_subframes;
    sf_start_ += int64_t(samples_per_subframe);
    tc_ = advance(tc_, 1);
  }
}

void ue::process_subframe(std::span<const cf_t> samples)
{
  if (tc_.subframe == 5) {
    track_npss();
    return;
  }
  if (reserved_subframe(tc_) && tc_.subframe != 0) {
    return;
  }
  const auto grid = ofdm_demodulate(samples);

  if (tc_.subframe == 0) {
    const auto est = estimate_channel(grid, cell_, tc_);
    noise_ref_ = 0.9 * noise_ref_ + 0.1 * est.noise_var;
    track_frequency(est);
    try {
      const resource_grid one[] = {grid};
      const auto r = npbch_decode(one, cell_, tc_.sfn % 8);
      stats_.last_mib = r.m;
      stats_.mib_sfn = r.m.sfn_msb * 64u + r.sfn_mod64;
      ++stats_.mib_decoded;
    } catch (const error& e) {
      if (e.code() != error_code::crc_fail) {
        throw;
      }
    }
    return;
  }

  if (active_) {
    const auto& want = active_->subframes[active_->rx.size()];
    if (want == tc_) {
      active_->rx.push_back(grid);
      active_->est.push_back(estimate_channel(grid, cell_, tc_));
      if (active_->rx.size() == active_->subframes.size()) {
        finish_assignment();
      }
    } else if (want.absolute() < tc_.absolute()) {
      ++stats_.blocks_failed;
      active_.reset();
    }
    return;
  }

  double p = 0;
  for (const auto& c : data_cells_) {
    p += std::norm(grid.at(c.k, c.l));
  }
  p /= double(data_cells_.size());
  if (!(p > cfg_.energy_gate * noise_ref_)) {
    return;
  }
  const auto est = estimate_channel(grid, cell_, tc_);
  const auto d = npdcch_blind_decode(grid, cfg_.rnti, est, tc_, cell_);
  if (d && std::holds_alternative<dl_grant>(*d)) {
    const auto& g = std::get<dl_grant>(*d);
    active_ = assignment{g, npdsch_subframes(tc_, g.sched_delay_sf, g.n_sf()), {}, {}};
  }
}

void ue::finish_assignment()
{
  const auto a = std::move(*active_);
  active_.reset();
  bool ok = false;
  try {
    const auto tb = npdsch_decode(a.rx, a.est, a.grant, a.subframes, cell_);
    ok = true;
    ++stats_.blocks_ok;
    stats_.bits_ok += tb.tbs_bits;
    for (std::size_t i = 0; i + 8 <= tb.bits.size(); i += 8) {
      uint8_t b = 0;
      for (std::size_t j = 0; j < 8; ++j) {
        b = uint8_t((b << 1) | (tb.bits[i + j] & 1u));
      }
      payload_.push_back(b);
    }
  } catch (const error& e) {
    if (e.code() != error_code::crc_fail) {
      throw;
    }
    ++stats_.blocks_failed;
  }
  if (a.grant.acknowledged() && cfg_.send_acks) {
    const unsigned gap = 1 + a.grant.harq_ack_delay_sf;
    queue_ack(ok, advance(tc_, gap), sf_start_ + int64_t(gap) * int64_t(samples_per_subframe));
  }
}

void ue::queue_ack(bool ack, timing_counters at, int64_t stream_pos)
{
  const npusch_allocation alloc{.format = npusch_format::f2_uci, .rnti = cfg_.rnti, .start = at};
  const uint8_t bit[] = {uint8_t(ack ? 1 : 0)};
  ul_tx_[stream_pos] = npusch_encode(bit, alloc, cell_);
  ++stats_.acks_sent;
}

void ue::track_npss()
{
  const auto pos = refine_npss_timing(buffer_, index(sf_start_));
  if (!pos) {
    return;
  }
  const double measured = double(base_) + *pos;
  const double nominal =
      npss_nominal_.empty() ? double(sf_start_) : npss_nominal_.back() + double(samples_per_frame);
  npss_nominal_.push_back(nominal);
  npss_measured_.push_back(measured);
  if (npss_nominal_.size() > sfo_history) {
    npss_nominal_.pop_front();
    npss_measured_.pop_front();
  }
  if (npss_nominal_.size() >= sfo_min_points) {
    const std::vector<double> x(npss_nominal_.begin(), npss_nominal_.end());
    const std::vector<double> y(npss_measured_.begin(), npss_measured_.end());
    stats_.sfo_ppm = estimate_sfo_ppm(x, y);
  }
  timing_error_ = 0.8 * timing_error_ + 0.2 * (measured - double(sf_start_));
  if (timing_error_ > 0.6) {
    ++sf_start_;
    timing_error_ -= 1.0;
  } else if (timing_error_ < -0.6) {
    --sf_start_;
    timing_error_ += 1.0;
  }
}

void ue::track_frequency(const channel_estimate& est)
{
  cf_t acc{};
  for (unsigned k = 0; k < resource_grid::nof_subcarriers; ++k) {
    acc += est.gain(k, 12) * std::conj(est.gain(k, 5));
  }
  if (std::abs(acc) == 0) {
    return;
  }
  const double residual = std::arg(acc) * sample_rate_hz / (2.0 * pi * samples_per_slot);
  stats_.cfo_hz += 0.1 * residual;
}

} // namespace nbiot
