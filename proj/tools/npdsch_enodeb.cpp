#include "cli_common.hpp"

#include "nbiot/apps/enb.hpp"
#include "nbiot/channel_model.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

using namespace nbiot;

namespace {

std::atomic<bool> stop_requested{false};

void on_signal(int)
{
  stop_requested = true;
}

void ingest_loop(tcp_listener& listener, byte_queue& queue)
{
  std::vector<uint8_t> buf(4096);
  while (!stop_requested) {
    auto client = listener.accept(200);
    if (!client) {
      continue;
    }
    while (!stop_requested) {
      if (!client->wait_readable(200)) {
        continue;
      }
      const std::size_t n = client->read_some(buf);
      if (n == 0 || !queue.push(std::span(buf).first(n))) {
        break;
      }
    }
  }
}

void control_loop(tcp_listener& listener, enb& node)
{
  while (!stop_requested) {
    auto client = listener.accept(200);
    if (!client) {
      continue;
    }
    while (!stop_requested) {
      if (!client->wait_readable(200)) {
        continue;
      }
      const auto line = client->read_line();
      if (!line) {
        break;
      }
      if (line->empty()) {
        continue;
      }
      std::string reply = "ok\n";
      try {
        node.command(*line);
      } catch (const error& e) {
        reply = std::string("error: ") + e.what() + "\n";
      }
      try {
        client->write_all(std::span(reinterpret_cast<const uint8_t*>(reply.data()), reply.size()));
      } catch (const error&) {
        break;
      }
    }
  }
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"NB-IoT eNodeB: serves TCP payload bytes on the NPDSCH and emits baseband IQ"};
  enb_config cfg;
  uint16_t cell_id = 0;
  std::string iq_out;
  uint16_t tcp_port = 0;
  uint16_t ctrl_port = 0;
  double duration_s = 10;
  double snr_db = std::numeric_limits<double>::infinity();
  double cfo_hz = 0;
  bool realtime = false;
  std::string csv_out;

  app.add_option("--cell-id", cell_id, "Physical cell identity")->check(CLI::Range(0, 503));
  app.add_option("--policy", cfg.settings.policy, "Allocation policy")
      ->transform(CLI::CheckedTransformer(cli::policy_names));
  app.add_option("--mode", cfg.settings.mode, "RLC mode")->transform(CLI::CheckedTransformer(cli::mode_names));
  app.add_option("--tbs-index", cfg.settings.i_tbs, "Transport block size index")->check(CLI::Range(0u, max_i_tbs));
  app.add_option("--nsf", cfg.settings.n_sf, "Subframes per transport block");
  app.add_option("--iq-out", iq_out, "Output IQ: cf32 file path or tcp:PORT")->required();
  app.add_option("--tcp-port", tcp_port, "Payload ingest port (0 disables)");
  app.add_option("--ctrl-port", ctrl_port, "Control command port (0 disables)");
  app.add_option("--duration-s", duration_s, "Simulated seconds to transmit (0 runs until interrupted)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--seed", cfg.seed, "Seed for payload and noise");
  app.add_option("--snr-db", snr_db, "Impair the emitted IQ with noise at this per-element SNR");
  app.add_option("--cfo-hz", cfo_hz, "Impair the emitted IQ with a frequency offset");
  app.add_flag("--saturate", cfg.saturate, "Send random payload whenever the queue is short");
  app.add_flag("--realtime", realtime, "Pace output at one subframe per millisecond");
  app.add_option("--csv-out", csv_out, "Write the subframe plan as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::exit_ok : cli::exit_config;
  }

  try {
    cfg.cell.n_id_ncell = cell_id;
    enb node(cfg);
    const auto endpoint = cli::parse_endpoint(iq_out);
    if (duration_s == 0 && !endpoint.tcp) {
      raise(error_code::invalid_config, "a file output needs a finite --duration-s");
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    std::optional<tcp_listener> ingest;
    std::optional<tcp_listener> control;
    std::vector<std::jthread> threads;
    struct stopper {
      byte_queue& queue;
      ~stopper()
      {
        stop_requested = true;
        queue.close();
      }
    } stop_on_exit{node.queue()};
    if (tcp_port) {
      ingest.emplace(tcp_port);
      threads.emplace_back(ingest_loop, std::ref(*ingest), std::ref(node.queue()));
    }
    if (ctrl_port) {
      control.emplace(ctrl_port);
      threads.emplace_back(control_loop, std::ref(*control), std::ref(node));
    }

    std::optional<iq_file_writer> file;
    std::optional<tcp_stream> stream;
    if (endpoint.tcp) {
      tcp_listener out(endpoint.port);
      std::fprintf(stderr, "waiting for an IQ client on port %u\n", unsigned(out.port()));
      while (!stop_requested && !stream) {
        stream = out.accept(200);
      }
    } else {
      file.emplace(endpoint.path);
    }

    std::optional<channel> impair;
    if (std::isfinite(snr_db) || cfo_hz != 0) {
      impair.emplace(channel_config{.snr_db = snr_db, .cfo_hz = cfo_hz, .seed = cfg.seed + 1});
    }

    const uint64_t n_subframes = duration_s > 0 ? uint64_t(std::llround(duration_s * 1000)) : UINT64_MAX;
    const auto t0 = std::chrono::steady_clock::now();
    for (uint64_t n = 0; n < n_subframes && !stop_requested && (file || stream); ++n) {
      auto samples = node.next_subframe();
      if (impair) {
        samples = impair->process(samples);
      }
      if (file) {
        file->write(samples);
      } else {
        try {
          stream->write_iq(samples);
        } catch (const error&) {
          break;
        }
      }
      if ((n + 1) % 1000 == 0) {
        const auto& s = node.stats();
        std::printf("subframes=%llu grants=%llu bits=%llu retransmissions=%llu queue_bytes=%zu\n",
                    static_cast<unsigned long long>(s.subframes), static_cast<unsigned long long>(s.grants),
                    static_cast<unsigned long long>(s.bits_scheduled),
                    static_cast<unsigned long long>(s.retransmissions), node.queue().size());
        std::fflush(stdout);
      }
      if (realtime) {
        std::this_thread::sleep_until(t0 + std::chrono::milliseconds(n + 1));
      }
    }

    if (!csv_out.empty()) {
      std::ofstream(csv_out) << node.plan().to_csv();
    }
    std::printf("throughput_kbps=%.2f\n", throughput_of(node.plan(), double(node.stats().subframes)));
    return cli::exit_ok;
  } catch (const error& e) {
    std::fprintf(stderr, "npdsch_enodeb: %s\n", e.what());
    return cli::exit_code_for(e);
  }
}
