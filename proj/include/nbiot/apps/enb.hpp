#pragma once

#include "nbiot/apps/ue.hpp"
#include "nbiot/dl_channels.hpp"
#include "nbiot/scheduler.hpp"

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>

namespace nbiot {

/// Bounded FIFO of payload bytes; push() blocks while full.
class byte_queue
{
public:
  explicit byte_queue(std::size_t capacity);

  /// False once the queue is closed; bytes not yet queued are dropped.
  bool push(std::span<const uint8_t> data);
  /// Exactly n bytes, or nothing while fewer are queued.
  std::optional<std::vector<uint8_t>> try_pop(std::size_t n);
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  void close();

private:
  mutable std::mutex mutex_;
  std::condition_variable space_;
  std::deque<uint8_t> bytes_;
  std::size_t capacity_;
  bool closed_ = false;
};

/// Downlink settings a control command may change.
struct enb_settings {
  unsigned i_tbs = max_i_tbs;
  unsigned n_sf = 3;
  alloc_policy policy = alloc_policy::static_alloc;
  rlc_mode mode = rlc_mode::um;

  unsigned i_sf() const;
  bool operator==(const enb_settings&) const = default;
};

/// Applies one control line: "tbs N", "nsf N", "policy static|greedy" or "mode um|am".
/// Throws invalid_command for anything else or for a block size the table lacks.
enb_settings apply_command(enb_settings s, const std::string& line, const cell_config& cell);

struct enb_config {
  cell_config cell;
  enb_settings settings;
  uint16_t rnti = default_ue_rnti;
  unsigned sched_delay_sf = 4;
  unsigned harq_ack_delay_sf = 12;
  /// Random payload whenever the queue cannot fill a block.
  bool saturate = false;
  uint64_t seed = 1;
  std::size_t queue_bytes = 1 << 16;

  void validate() const;
};

struct enb_stats {
  uint64_t subframes = 0;
  uint64_t grants = 0;
  uint64_t retransmissions = 0;
  uint64_t acks = 0;
  uint64_t missed_acks = 0;
  uint64_t bits_scheduled = 0;
};

/// Downlink transmitter: anchors and SIB1 every frame, one transport block per grant from the queue.
/// Subframes without a channel are silent.
class enb
{
public:
  explicit enb(const enb_config& cfg);

  byte_queue& queue() { return queue_; }
  /// Thread-safe; the change takes effect once no HARQ process is pending.
  void command(const std::string& line);
  enb_settings settings() const;

  /// Samples of the current subframe; the clock then advances by one subframe.
  sample_buffer next_subframe();
  /// Uplink samples covering the subframe last returned by next_subframe().
  void uplink(std::span<const cf_t> samples);

  /// Counters of the next subframe to transmit.
  timing_counters now() const { return timing_counters::from_absolute(now_); }
  const subframe_plan& plan() const { return sched_.plan(); }
  const enb_stats& stats() const { return stats_; }
  const enb_config& config() const { return cfg_; }

private:
  void try_schedule(uint64_t t);
  std::optional<transport_block> next_block(unsigned tbs);
  resource_grid build(uint64_t t);

  enb_config cfg_;
  byte_queue queue_;
  mutable std::mutex settings_mutex_;
  enb_settings staged_;
  enb_settings active_;
  scheduler sched_;
  std::mt19937_64 rng_;
  uint64_t now_ = 0;

  std::map<uint64_t, resource_grid> scheduled_;
  /// ACK subframe of the outstanding AM grant.
  std::optional<std::pair<uint64_t, uint32_t>> expected_ack_;
  /// Block to resend after a missed ACK.
  std::optional<std::pair<transport_block, dl_grant>> retx_;
  enb_stats stats_;
};

} // namespace nbiot
