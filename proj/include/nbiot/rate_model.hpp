#pragma once

#include "nbiot/common.hpp"

#include <string>
#include <vector>

namespace nbiot {

enum class rlc_mode : uint8_t { um, am };

const char* to_string(rlc_mode mode);

/// Subframe budget of one downlink transport block.
inline constexpr unsigned grant_subframes = 1;
inline constexpr unsigned grant_gap_subframes = 4;
inline constexpr unsigned ack_gap_subframes = 12;
inline constexpr unsigned ack_subframes = 1;

struct rate_query {
  unsigned tbs_bits = 0;
  unsigned n_sf = 1;
  rlc_mode mode = rlc_mode::um;
};

struct rate_result {
  double latency_ms = 0;
  double rate_kbps = 0;
};

/// Latency 1 + 4 + n_sf (UM) or 1 + 4 + n_sf + 12 + 1 (AM); rate = tbs / latency.
/// Throws out_of_range unless n_sf has a subframe index and tbs_bits appears in that column of the table.
rate_result rate(const rate_query& q);

struct curve_point {
  unsigned n_sf = 0;
  unsigned tbs_bits = 0;
  rate_result result;
};

/// One point per signalable subframe count. Each uses the table TBS in that column closest to the
/// row's nominal value (its largest entry); ties go to the smaller TBS.
std::vector<curve_point> curve(rlc_mode mode, unsigned i_tbs);

/// 680 bits every 3 ms, ignoring all control overhead.
double theoretical_peak_kbps();

/// CSV (i_tbs, n_sf, tbs, latency_ms, rate_kbps) of every curve for one mode.
std::string curves_csv(rlc_mode mode);

} // namespace nbiot
