#include "nbiot/apps/enb.hpp"

#include "nbiot/sync.hpp"
#include "nbiot/ul_channels.hpp"

#include <charconv>
#include <sstream>

namespace nbiot {

namespace {

constexpr unsigned tb_crc_bits = 24;
constexpr unsigned sib1_i_tbs = 12;

bool fits(const cell_config& cell, unsigned i_tbs, unsigned i_sf)
{
  return tbs_supported(i_tbs, i_sf) &&
         2 * data_re_per_subframe(cell) * nof_subframes(i_sf) >= tbs_lookup(i_tbs, i_sf) + tb_crc_bits;
}

std::optional<unsigned> parse_unsigned(const std::string& s)
{
  unsigned v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    return std::nullopt;
  }
  return v;
}

bit_vector unpack_bytes(std::span<const uint8_t> bytes)
{
  bit_vector bits;
  bits.reserve(bytes.size() * 8);
  for (uint8_t b : bytes) {
    for (int i = 7; i >= 0; --i) {
      bits.push_back(uint8_t((b >> i) & 1u));
    }
  }
  return bits;
}

transport_block sib1_block(const cell_config& cell)
{
  const unsigned tbs = tbs_lookup(sib1_i_tbs, 0);
  std::vector<uint8_t> bytes(tbs / 8);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = uint8_t((cell.n_id_ncell + 37 * i) & 0xFFu);
  }
  return {unpack_bytes(bytes), tbs};
}

} // namespace

// --- queue --------------------------------------------------------------------

byte_queue::byte_queue(std::size_t capacity) : capacity_(capacity)
{
  if (capacity == 0) {
    raise(error_code::invalid_config, "queue capacity must be positive");
  }
}

bool byte_queue::push(std::span<const uint8_t> data)
{
  std::unique_lock lock(mutex_);
  std::size_t done = 0;
  while (done < data.size()) {
    space_.wait(lock, [&] { return closed_ || bytes_.size() < capacity_; });
    if (closed_) {
      return false;
    }
    const std::size_t n = std::min(capacity_ - bytes_.size(), data.size() - done);
    bytes_.insert(bytes_.end(), data.begin() + std::ptrdiff_t(done), data.begin() + std::ptrdiff_t(done + n));
    done += n;
  }
  return !closed_;
}

std::optional<std::vector<uint8_t>> byte_queue::try_pop(std::size_t n)
{
  std::lock_guard lock(mutex_);
  if (bytes_.size() < n) {
    return std::nullopt;
  }
  std::vector<uint8_t> out(bytes_.begin(), bytes_.begin() + std::ptrdiff_t(n));
  bytes_.erase(bytes_.begin(), bytes_.begin() + std::ptrdiff_t(n));
  space_.notify_all();
  return out;
}

std::size_t byte_queue::size() const
{
  std::lock_guard lock(mutex_);
  return bytes_.size();
}

void byte_queue::close()
{
  std::lock_guard lock(mutex_);
  closed_ = true;
  space_.notify_all();
}

// --- settings -----------------------------------------------------------------

unsigned enb_settings::i_sf() const
{
  const auto s = i_sf_for_subframes(n_sf);
  if (!s) {
    raise(error_code::invalid_config, "no resource assignment spans " + std::to_string(n_sf) + " subframes");
  }
  return *s;
}

enb_settings apply_command(enb_settings s, const std::string& line, const cell_config& cell)
{
  std::istringstream in(line);
  std::string key, value, extra;
  if (!(in >> key >> value) || (in >> extra)) {
    raise(error_code::invalid_command, "expected '<key> <value>': " + line);
  }
  if (key == "tbs" || key == "nsf") {
    const auto v = parse_unsigned(value);
    if (!v) {
      raise(error_code::invalid_command, "not a number: " + value);
    }
    enb_settings next = s;
    if (key == "tbs") {
      next.i_tbs = *v;
    } else {
      next.n_sf = *v;
    }
    const auto i_sf = i_sf_for_subframes(next.n_sf);
    if (next.i_tbs > max_i_tbs || !i_sf || !fits(cell, next.i_tbs, *i_sf)) {
      raise(error_code::invalid_command, "no transport block for " + line);
    }
    return next;
  }
  if (key == "policy") {
    if (value == "static") {
      s.policy = alloc_policy::static_alloc;
    } else if (value == "greedy") {
      s.policy = alloc_policy::greedy;
    } else {
      raise(error_code::invalid_command, "unknown policy: " + value);
    }
    return s;
  }
  if (key == "mode") {
    if (value == "um") {
      s.mode = rlc_mode::um;
    } else if (value == "am") {
      s.mode = rlc_mode::am;
    } else {
      raise(error_code::invalid_command, "unknown mode: " + value);
    }
    return s;
  }
  raise(error_code::invalid_command, "unknown command: " + key);
}

void enb_config::validate() const
{
  cell.validate();
  const auto i_sf = i_sf_for_subframes(settings.n_sf);
  if (settings.i_tbs > max_i_tbs || !i_sf || !fits(cell, settings.i_tbs, *i_sf)) {
    raise(error_code::invalid_config, "unsupported transport block size index or subframe count");
  }
  if (queue_bytes < tbs_lookup(max_i_tbs, 2) / 8) {
    raise(error_code::invalid_config, "queue must hold the largest transport block");
  }
}

// --- eNB ----------------------------------------------------------------------

enb::enb(const enb_config& cfg)
    : cfg_((cfg.validate(), cfg)),
      queue_(cfg.queue_bytes),
      staged_(cfg.settings),
      active_(cfg.settings),
      sched_({.policy = cfg.settings.policy,
              .mode = cfg.settings.mode,
              .sched_delay_sf = cfg.sched_delay_sf,
              .harq_ack_delay_sf = cfg.harq_ack_delay_sf}),
      rng_(cfg.seed)
{
}

void enb::command(const std::string& line)
{
  std::lock_guard lock(settings_mutex_);
  staged_ = apply_command(staged_, line, cfg_.cell);
}

enb_settings enb::settings() const
{
  std::lock_guard lock(settings_mutex_);
  return staged_;
}

std::optional<transport_block> enb::next_block(unsigned tbs)
{
  if (auto bytes = queue_.try_pop(tbs / 8)) {
    return transport_block{unpack_bytes(*bytes), tbs};
  }
  if (!cfg_.saturate) {
    return std::nullopt;
  }
  transport_block tb{bit_vector(tbs), tbs};
  for (auto& b : tb.bits) {
    b = uint8_t(rng_() & 1u);
  }
  return tb;
}

void enb::try_schedule(uint64_t t)
{
  if (sched_.pending(t)) {
    return;
  }
  if (!retx_) {
    std::lock_guard lock(settings_mutex_);
    if (staged_.policy != active_.policy) {
      sched_.set_policy(staged_.policy);
    }
    active_ = staged_;
  }
  if (sched_.next_opportunity(t) != t) {
    return;
  }

  dl_grant g{.i_tbs = active_.i_tbs, .i_sf = active_.i_sf(), .rnti = cfg_.rnti};
  std::optional<transport_block> tb;
  rlc_mode mode = active_.mode;
  if (retx_) {
    g = retx_->second;
    tb = retx_->first;
    mode = rlc_mode::am;
    ++stats_.retransmissions;
  } else {
    tb = next_block(g.tbs());
    if (!tb) {
      return;
    }
  }

  const auto& p = mode == rlc_mode::am ? sched_.schedule_am(g, t) : sched_.schedule_um(g, t);
  const auto first = timing_counters::from_absolute(p.npdcch);
  std::vector<timing_counters> subframes;
  for (uint64_t s : p.npdsch) {
    subframes.push_back(timing_counters::from_absolute(s));
  }
  scheduled_[p.npdcch] = npdcch_encode(dci{p.grant}, first, cfg_.cell);
  auto grids = npdsch_encode(*tb, p.grant, subframes, cfg_.cell);
  for (std::size_t i = 0; i < grids.size(); ++i) {
    scheduled_[p.npdsch[i]] = std::move(grids[i]);
  }
  ++stats_.grants;
  stats_.bits_scheduled += p.grant.tbs();
  if (p.ack) {
    expected_ack_ = {*p.ack, p.id};
    retx_ = {std::move(*tb), p.grant};
  } else {
    retx_.reset();
  }
}

resource_grid enb::build(uint64_t t)
{
  const auto tc = timing_counters::from_absolute(t);
  if (tc.subframe == 0) {
    return npbch_encode(make_mib(tc, cfg_.cell), tc, cfg_.cell);
  }
  if (tc.subframe == 5) {
    return generate_npss();
  }
  if (anchor_subframe(tc)) {
    return generate_nsss(cfg_.cell, tc.sfn);
  }
  if (sib1_subframe(tc)) {
    const dl_grant g{.i_tbs = sib1_i_tbs, .i_sf = 0, .rnti = si_rnti};
    const timing_counters sf[] = {tc};
    return npdsch_encode(sib1_block(cfg_.cell), g, sf, cfg_.cell).front();
  }
  if (auto it = scheduled_.find(t); it != scheduled_.end()) {
    auto grid = std::move(it->second);
    scheduled_.erase(it);
    return grid;
  }
  return {};
}

sample_buffer enb::next_subframe()
{
  const uint64_t t = now_;
  if (expected_ack_ && expected_ack_->first < t) {
    sched_.release(expected_ack_->second);
    expected_ack_.reset();
    ++stats_.missed_acks;
  }
  try_schedule(t);
  const auto grid = build(t);
  ++now_;
  ++stats_.subframes;
  if (!grid.has_tags()) {
    return sample_buffer(samples_per_subframe);
  }
  return ofdm_modulate(grid);
}

void enb::uplink(std::span<const cf_t> samples)
{
  if (!expected_ack_ || expected_ack_->first + 1 != now_) {
    return;
  }
  const auto [ack_sf, id] = *expected_ack_;
  expected_ack_.reset();
  const npusch_allocation alloc{
      .format = npusch_format::f2_uci, .rnti = cfg_.rnti, .start = timing_counters::from_absolute(ack_sf)};
  bool acked = false;
  if (samples.size() >= samples_per_subframe) {
    try {
      acked = npusch_decode(samples.first(samples_per_subframe), alloc, cfg_.cell).at(0) == 1;
    } catch (const error& e) {
      if (e.code() != error_code::crc_fail) {
        throw;
      }
    }
  }
  if (acked) {
    sched_.acknowledge(id);
    retx_.reset();
    ++stats_.acks;
  } else {
    sched_.release(id);
    ++stats_.missed_acks;
  }
}

} // namespace nbiot
