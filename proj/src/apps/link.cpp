#include "nbiot/apps/link.hpp"

#include "nbiot/rate_model.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

namespace nbiot {

loopback_result run_loopback(const loopback_config& cfg)
{
  if (!(cfg.duration_s > 0)) {
    raise(error_code::invalid_config, "duration must be positive");
  }
  enb tx(cfg.enb);
  ue rx(cfg.ue);
  channel dl(cfg.downlink);
  channel ul(cfg.uplink);

  const auto n_subframes = uint64_t(std::llround(cfg.duration_s * 1000.0));
  const auto t0 = std::chrono::steady_clock::now();
  for (uint64_t n = 0; n < n_subframes; ++n) {
    const auto samples = tx.next_subframe();
    if (cfg.on_downlink) {
      cfg.on_downlink(samples);
    }
    const auto ul_samples = rx.push(dl.process(samples));
    tx.uplink(ul.process(ul_samples));
    if (cfg.on_stats && cfg.stats_period_ms > 0 && (n + 1) % cfg.stats_period_ms == 0) {
      cfg.on_stats(rx.stats());
    }
    if (cfg.realtime) {
      std::this_thread::sleep_until(t0 + std::chrono::milliseconds(n + 1));
    }
  }
  if (cfg.on_stats) {
    cfg.on_stats(rx.stats());
  }

  loopback_result r;
  r.ue = rx.stats();
  r.enb = tx.stats();
  r.subframes = n_subframes;
  r.plan_throughput_kbps = throughput_of(tx.plan(), double(n_subframes));
  return r;
}

double static_prediction_kbps(unsigned tbs_bits)
{
  return double(tbs_bits) / double(subframes_per_frame);
}

std::vector<experiment_row> run_experiments(const experiment_config& cfg,
                                            const std::function<void(const experiment_row&)>& on_row)
{
  std::vector<experiment_row> rows;
  for (unsigned n_sf : cfg.n_sf_values) {
    const auto i_sf = i_sf_for_subframes(n_sf);
    if (!i_sf) {
      raise(error_code::invalid_config, "no resource assignment spans " + std::to_string(n_sf) + " subframes");
    }
    for (unsigned i_tbs = cfg.i_tbs_first; i_tbs <= cfg.i_tbs_last; ++i_tbs) {
      if (!tbs_supported(i_tbs, *i_sf)) {
        continue;
      }
      loopback_config lc;
      lc.enb.cell.n_id_ncell = cfg.n_id_ncell;
      lc.enb.settings = {.i_tbs = i_tbs, .n_sf = n_sf, .policy = alloc_policy::static_alloc, .mode = rlc_mode::um};
      lc.enb.saturate = true;
      lc.enb.seed = cfg.seed + 1000 * n_sf + i_tbs;
      lc.downlink = {.snr_db = cfg.snr_db, .cfo_hz = cfg.cfo_hz, .seed = cfg.seed + 7 * (1000 * n_sf + i_tbs)};
      lc.uplink = {.snr_db = cfg.snr_db, .seed = cfg.seed + 13 * (1000 * n_sf + i_tbs)};
      lc.duration_s = cfg.duration_s;
      const auto r = run_loopback(lc);

      experiment_row row;
      row.n_sf = n_sf;
      row.i_tbs = i_tbs;
      row.tbs = tbs_lookup(i_tbs, *i_sf);
      row.measured_kbps = r.ue.throughput_kbps();
      row.predicted_kbps = static_prediction_kbps(row.tbs);
      row.rate_model_um_kbps = rate({row.tbs, n_sf, rlc_mode::um}).rate_kbps;
      row.bler = r.ue.npdsch_bler();
      row.match = std::abs(row.measured_kbps - row.predicted_kbps) <= cfg.tolerance * row.predicted_kbps;
      if (on_row) {
        on_row(row);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::string experiments_csv(const std::vector<experiment_row>& rows)
{
  std::string out = "n_sf,i_tbs,tbs,measured_kbps,predicted_kbps,rate_model_um_kbps,bler,match\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%u,%u,%u,%.3f,%.3f,%.3f,%.4f,%d\n", r.n_sf, r.i_tbs, r.tbs, r.measured_kbps,
                  r.predicted_kbps, r.rate_model_um_kbps, r.bler, r.match ? 1 : 0);
    out += buf;
  }
  return out;
}

} // namespace nbiot
