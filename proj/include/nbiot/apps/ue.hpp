#pragma once

#include "nbiot/dl_channels.hpp"
#include "nbiot/sync.hpp"

#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>

namespace nbiot {

inline constexpr uint16_t default_ue_rnti = 0x1001;

struct ue_config {
  uint16_t rnti = default_ue_rnti;
  /// Samples without a detected cell before the search gives up.
  double search_timeout_ms = 2000;
  /// Frames of subframe-0 grids combined before giving up on the MIB.
  unsigned max_mib_frames = 64;
  /// Minimum data-cell power, in units of the noise floor, before a blind decode.
  double energy_gate = 4.0;
  bool send_acks = true;
};

enum class ue_state { search, mib, camped };
const char* to_string(ue_state s);

struct ue_stats {
  ue_state state = ue_state::search;
  uint16_t n_id_ncell = 0;
  double cfo_hz = 0;
  double sfo_ppm = 0;
  /// Counters of the last processed subframe.
  timing_counters time{};
  std::optional<mib> last_mib;
  /// Frame number carried by the most recent decoded MIB.
  unsigned mib_sfn = 0;
  uint64_t mib_decoded = 0;
  uint64_t blocks_ok = 0;
  uint64_t blocks_failed = 0;
  uint64_t bits_ok = 0;
  uint64_t acks_sent = 0;
  /// Subframes processed since the MIB was first decoded.
  uint64_t camped_subframes = 0;

  double npdsch_bler() const;
  /// CRC-passing payload bits per millisecond of camped time.
  double throughput_kbps() const;
};

/// Single-line key=value report:
/// state cell_id hfn sfn subframe mib_sfn cfo_hz sfo_ppm npdsch_bler blocks_ok blocks_failed throughput_kbps.
std::string format_stats(const ue_stats& s);
/// Splits a stats line back into its fields.
std::map<std::string, std::string> parse_stats(const std::string& line);

/// Streaming receiver: cell search, MIB acquisition, then NPDCCH monitoring and NPDSCH decoding.
class ue
{
public:
  explicit ue(const ue_config& cfg = {});

  /// Consumes received samples and returns the uplink samples for the same stretch of time.
  /// Throws no_signal when no cell is found within the search timeout.
  sample_buffer push(std::span<const cf_t> rx);

  const ue_stats& stats() const { return stats_; }
  /// Payload bytes of blocks that passed the CRC since the previous call.
  std::vector<uint8_t> take_payload();

private:
  struct assignment {
    dl_grant grant;
    std::vector<timing_counters> subframes;
    std::vector<resource_grid> rx;
    std::vector<channel_estimate> est;
  };

  void derotate(std::span<cf_t> samples);
  void search();
  void collect_mib();
  void camp();
  void process_subframe(std::span<const cf_t> sf);
  void track_npss();
  void track_frequency(const channel_estimate& est);
  void finish_assignment();
  void queue_ack(bool ack, timing_counters at, int64_t stream_pos);
  std::size_t index(int64_t stream_pos) const { return std::size_t(stream_pos - base_); }

  ue_config cfg_;
  ue_stats stats_;
  cell_config cell_;

  sample_buffer buffer_;
  /// Stream index of buffer_[0].
  int64_t base_ = 0;
  int64_t received_ = 0;
  double phase_ = 0;

  int64_t frame_origin_ = 0;
  unsigned origin_sfn_mod8_ = 0;
  std::vector<resource_grid> mib_grids_;
  int64_t mib_first_frame_ = 0;

  /// Stream index and counters of the next subframe to process.
  int64_t sf_start_ = 0;
  timing_counters tc_{};
  std::vector<re_position> data_cells_;
  double noise_ref_ = 0;
  double timing_error_ = 0;

  int64_t npss_origin_ = 0;
  std::deque<double> npss_nominal_;
  std::deque<double> npss_measured_;

  std::optional<assignment> active_;
  std::map<int64_t, sample_buffer> ul_tx_;
  std::vector<uint8_t> payload_;
};

} // namespace nbiot
