#include "cli_common.hpp"

#include "nbiot/apps/link.hpp"

#include <cstdio>
#include <fstream>

using namespace nbiot;

namespace {

void write_or_print(const std::string& path, const std::string& text)
{
  if (path.empty()) {
    std::fputs(text.c_str(), stdout);
    return;
  }
  std::ofstream out(path);
  if (!out) {
    raise(error_code::io_error, "cannot write " + path);
  }
  out << text;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"NB-IoT downlink toolkit: loopback runs, experiment matrix, rate model and subframe plans"};
  app.require_subcommand(1);

  // loopback
  auto* lb = app.add_subcommand("loopback", "In-process eNB and UE over a simulated channel");
  loopback_config lc;
  lc.downlink.snr_db = 20;
  lc.uplink.snr_db = 20;
  uint16_t lb_cell = 0;
  lb->add_option("--cell-id", lb_cell, "Physical cell identity")->check(CLI::Range(0, 503));
  lb->add_option("--snr-db", lc.downlink.snr_db, "Per-element SNR of both directions");
  lb->add_option("--cfo-hz", lc.downlink.cfo_hz, "Downlink frequency offset");
  lb->add_option("--sfo-ppm", lc.downlink.sfo_ppm, "Downlink sample-clock offset");
  lb->add_option("--policy", lc.enb.settings.policy, "Allocation policy")
      ->transform(CLI::CheckedTransformer(cli::policy_names));
  lb->add_option("--mode", lc.enb.settings.mode, "RLC mode")->transform(CLI::CheckedTransformer(cli::mode_names));
  lb->add_option("--tbs-index", lc.enb.settings.i_tbs, "Transport block size index");
  lb->add_option("--nsf", lc.enb.settings.n_sf, "Subframes per transport block");
  lb->add_option("--duration-s", lc.duration_s, "Simulated seconds")->check(CLI::PositiveNumber);
  lb->add_option("--seed", lc.downlink.seed, "Seed");
  lb->add_flag("--realtime", lc.realtime, "Pace at one subframe per millisecond");
  std::string lb_iq_out;
  lb->add_option("--iq-out", lb_iq_out, "Also record the transmitted downlink as cf32");

  // experiment
  auto* ex = app.add_subcommand("experiment", "Static-policy matrix over subframe counts and block sizes");
  experiment_config ec;
  std::string ex_csv;
  ex->add_option("--duration-s", ec.duration_s, "Simulated seconds per cell")->check(CLI::PositiveNumber);
  ex->add_option("--snr-db", ec.snr_db, "Per-element SNR");
  ex->add_option("--cfo-hz", ec.cfo_hz, "Downlink frequency offset");
  ex->add_option("--cell-id", ec.n_id_ncell, "Physical cell identity")->check(CLI::Range(0, 503));
  ex->add_option("--seed", ec.seed, "Seed");
  ex->add_option("--nsf", ec.n_sf_values, "Subframe counts to sweep");
  ex->add_option("--tbs-first", ec.i_tbs_first, "First block size index")->check(CLI::Range(0u, max_i_tbs));
  ex->add_option("--tbs-last", ec.i_tbs_last, "Last block size index")->check(CLI::Range(0u, max_i_tbs));
  ex->add_option("--csv-out", ex_csv, "CSV output path (stdout when omitted)");

  // rate
  auto* rt = app.add_subcommand("rate", "Analytical rate curves as CSV");
  rlc_mode rt_mode = rlc_mode::um;
  std::string rt_csv;
  rt->add_option("--mode", rt_mode, "RLC mode")->transform(CLI::CheckedTransformer(cli::mode_names));
  rt->add_option("--csv-out", rt_csv, "CSV output path (stdout when omitted)");

  // plan
  auto* pl = app.add_subcommand("plan", "Saturated subframe plan as CSV");
  scheduler_config sc;
  unsigned pl_tbs = max_i_tbs;
  unsigned pl_nsf = 3;
  uint64_t pl_horizon = 100;
  std::string pl_csv;
  pl->add_option("--policy", sc.policy, "Allocation policy")->transform(CLI::CheckedTransformer(cli::policy_names));
  pl->add_option("--mode", sc.mode, "RLC mode")->transform(CLI::CheckedTransformer(cli::mode_names));
  pl->add_option("--tbs-index", pl_tbs, "Transport block size index");
  pl->add_option("--nsf", pl_nsf, "Subframes per transport block");
  pl->add_option("--horizon", pl_horizon, "Subframes to plan")->check(CLI::PositiveNumber);
  pl->add_flag("--ignore-anchors", sc.ignore_anchors, "Plan without anchor subframes");
  pl->add_option("--csv-out", pl_csv, "CSV output path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::exit_ok : cli::exit_config;
  }

  try {
    if (lb->parsed()) {
      lc.enb.cell.n_id_ncell = lb_cell;
      lc.enb.saturate = true;
      lc.enb.seed = lc.downlink.seed;
      lc.uplink.snr_db = lc.downlink.snr_db;
      lc.uplink.seed = lc.downlink.seed + 1;
      lc.on_stats = [](const ue_stats& s) {
        std::printf("%s\n", format_stats(s).c_str());
        std::fflush(stdout);
      };
      std::optional<iq_file_writer> tap;
      if (!lb_iq_out.empty()) {
        tap.emplace(lb_iq_out);
        lc.on_downlink = [&](std::span<const cf_t> s) { tap->write(s); };
      }
      const auto r = run_loopback(lc);
      std::printf("plan_throughput_kbps=%.2f grants=%llu retransmissions=%llu\n", r.plan_throughput_kbps,
                  static_cast<unsigned long long>(r.enb.grants),
                  static_cast<unsigned long long>(r.enb.retransmissions));
    } else if (ex->parsed()) {
      const auto rows = run_experiments(ec, [](const experiment_row& r) {
        std::fprintf(stderr, "n_sf=%u i_tbs=%u tbs=%u measured=%.3f predicted=%.3f %s\n", r.n_sf, r.i_tbs, r.tbs,
                     r.measured_kbps, r.predicted_kbps, r.match ? "match" : "MISMATCH");
      });
      write_or_print(ex_csv, experiments_csv(rows));
    } else if (rt->parsed()) {
      write_or_print(rt_csv, curves_csv(rt_mode));
    } else if (pl->parsed()) {
      const auto i_sf = i_sf_for_subframes(pl_nsf);
      if (!i_sf) {
        raise(error_code::invalid_config, "no resource assignment spans " + std::to_string(pl_nsf) + " subframes");
      }
      const dl_grant g{.i_tbs = pl_tbs, .i_sf = *i_sf};
      g.validate();
      scheduler s(sc);
      s.run(pl_horizon, g);
      write_or_print(pl_csv, s.plan().to_csv());
      std::fprintf(stderr, "throughput_kbps=%.2f\n", throughput_of(s.plan(), double(pl_horizon)));
    }
    return cli::exit_ok;
  } catch (const error& e) {
    std::fprintf(stderr, "nbiot_tool: %s\n", e.what());
    return cli::exit_code_for(e);
  }
}
