#include "nbiot/rate_model.hpp"

#include "nbiot/coding.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

namespace nbiot {

namespace {

bool in_column(unsigned tbs, unsigned i_sf)
{
  for (unsigned i = 0; i <= max_i_tbs; ++i) {
    if (tbs_supported(i, i_sf) && tbs_lookup(i, i_sf) == tbs) {
      return true;
    }
  }
  return false;
}

unsigned row_nominal(unsigned i_tbs)
{
  unsigned best = 0;
  for (unsigned s = 0; s <= max_i_sf; ++s) {
    if (tbs_supported(i_tbs, s)) {
      best = std::max(best, tbs_lookup(i_tbs, s));
    }
  }
  return best;
}

} // namespace

const char* to_string(rlc_mode mode)
{
  return mode == rlc_mode::um ? "um" : "am";
}

rate_result rate(const rate_query& q)
{
  const auto i_sf = i_sf_for_subframes(q.n_sf);
  if (!i_sf) {
    raise(error_code::out_of_range, "no subframe index for n_sf = " + std::to_string(q.n_sf));
  }
  if (!in_column(q.tbs_bits, *i_sf)) {
    raise(error_code::out_of_range,
          "TBS " + std::to_string(q.tbs_bits) + " is not available with " + std::to_string(q.n_sf) + " subframes");
  }
  unsigned latency = grant_subframes + grant_gap_subframes + q.n_sf;
  if (q.mode == rlc_mode::am) {
    latency += ack_gap_subframes + ack_subframes;
  }
  return {double(latency), double(q.tbs_bits) / double(latency)};
}

std::vector<curve_point> curve(rlc_mode mode, unsigned i_tbs)
{
  if (i_tbs > max_i_tbs) {
    raise(error_code::out_of_range, "i_tbs outside the table");
  }
  const unsigned nominal = row_nominal(i_tbs);
  std::vector<curve_point> out;
  for (unsigned s = 0; s <= max_i_sf; ++s) {
    unsigned best = 0;
    unsigned best_dist = ~0u;
    for (unsigned i = 0; i <= max_i_tbs; ++i) {
      if (!tbs_supported(i, s)) {
        continue;
      }
      const unsigned tbs = tbs_lookup(i, s);
      const unsigned dist = unsigned(std::abs(int(tbs) - int(nominal)));
      if (dist < best_dist || (dist == best_dist && tbs < best)) {
        best = tbs;
        best_dist = dist;
      }
    }
    const unsigned n_sf = nof_subframes(s);
    out.push_back({n_sf, best, rate({best, n_sf, mode})});
  }
  return out;
}

double theoretical_peak_kbps()
{
  return double(max_tbs_bits) / 3.0;
}

std::string curves_csv(rlc_mode mode)
{
  std::string out = "i_tbs,n_sf,tbs,latency_ms,rate_kbps\n";
  char line[96];
  for (unsigned i = 0; i <= max_i_tbs; ++i) {
    for (const auto& p : curve(mode, i)) {
      std::snprintf(line, sizeof line, "%u,%u,%u,%.0f,%.2f\n", i, p.n_sf, p.tbs_bits, p.result.latency_ms,
                    p.result.rate_kbps);
      out += line;
    }
  }
  return out;
}

} // namespace nbiot
