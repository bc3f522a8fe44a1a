#pragma once

#include "nbiot/apps/enb.hpp"
#include "nbiot/apps/ue.hpp"
#include "nbiot/channel_model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace nbiot {

struct loopback_config {
  enb_config enb;
  ue_config ue;
  channel_config downlink;
  channel_config uplink;
  double duration_s = 60;
  /// Sleeps so that one subframe takes one millisecond of wall time.
  bool realtime = false;
  /// Called every stats_period_ms of simulated time and once at the end.
  std::function<void(const ue_stats&)> on_stats;
  unsigned stats_period_ms = 1000;
  /// Receives every transmitted downlink subframe before the channel.
  std::function<void(std::span<const cf_t>)> on_downlink;
};

struct loopback_result {
  ue_stats ue;
  enb_stats enb;
  uint64_t subframes = 0;
  /// throughput_of() on the eNB plan over the whole run.
  double plan_throughput_kbps = 0;
};

/// Runs eNB, both channel directions and the UE in lockstep, one subframe at a time.
loopback_result run_loopback(const loopback_config& cfg);

// --- experiment matrix --------------------------------------------------------

struct experiment_config {
  std::vector<unsigned> n_sf_values{1, 2, 3};
  unsigned i_tbs_first = 1;
  unsigned i_tbs_last = max_i_tbs;
  double duration_s = 60;
  double snr_db = 20;
  double cfo_hz = 0;
  uint16_t n_id_ncell = 0;
  uint64_t seed = 1;
  /// Relative tolerance for the match column.
  double tolerance = 0.01;
};

struct experiment_row {
  unsigned n_sf = 0;
  unsigned i_tbs = 0;
  unsigned tbs = 0;
  double measured_kbps = 0;
  /// One block per frame under the static policy.
  double predicted_kbps = 0;
  double rate_model_um_kbps = 0;
  double bler = 0;
  bool match = false;
};

/// Rate of the static scheme: one block of tbs bits every 10 ms.
double static_prediction_kbps(unsigned tbs_bits);

/// One loopback per matrix cell at the configured SNR with saturated traffic.
std::vector<experiment_row> run_experiments(const experiment_config& cfg,
                                            const std::function<void(const experiment_row&)>& on_row = {});

/// Header "n_sf,i_tbs,tbs,measured_kbps,predicted_kbps,rate_model_um_kbps,bler,match".
std::string experiments_csv(const std::vector<experiment_row>& rows);

} // namespace nbiot
