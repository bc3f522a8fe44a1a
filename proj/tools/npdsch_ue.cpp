#include "cli_common.hpp"

#include "nbiot/apps/ue.hpp"
#include "nbiot/channel_model.hpp"

#include <cstdio>
#include <fstream>

using namespace nbiot;

int main(int argc, char** argv)
{
  CLI::App app{"NB-IoT UE: acquires the cell and decodes the NPDSCH from baseband IQ"};
  ue_config cfg;
  std::string iq_in;
  double snr_db = std::numeric_limits<double>::infinity();
  double cfo_hz = 0;
  double sfo_ppm = 0;
  uint64_t seed = 1;
  double duration_s = 0;
  std::string payload_out;
  std::string csv_out;

  app.add_option("--iq-in", iq_in, "Input IQ: cf32 file path or tcp:HOST:PORT")->required();
  app.add_option("--rnti", cfg.rnti, "C-RNTI to monitor");
  app.add_option("--snr-db", snr_db, "Add noise to the input at this per-element SNR");
  app.add_option("--cfo-hz", cfo_hz, "Add a frequency offset to the input");
  app.add_option("--sfo-ppm", sfo_ppm, "Resample the input with a sample-clock offset");
  app.add_option("--seed", seed, "Noise seed");
  app.add_option("--duration-s", duration_s, "Stop after this many seconds of input (0 reads to the end)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--search-timeout-ms", cfg.search_timeout_ms, "Give up when no cell is found within this time")
      ->check(CLI::PositiveNumber);
  app.add_option("--payload-out", payload_out, "Write decoded payload bytes to this file");
  app.add_option("--csv-out", csv_out, "Write one stats row per second as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::exit_ok : cli::exit_config;
  }

  try {
    const auto endpoint = cli::parse_endpoint(iq_in);
    std::optional<iq_file_reader> file;
    std::optional<tcp_stream> stream;
    if (endpoint.tcp) {
      stream = tcp_stream::connect(endpoint.host, endpoint.port);
    } else {
      file.emplace(endpoint.path);
    }
    std::optional<channel> impair;
    if (std::isfinite(snr_db) || cfo_hz != 0 || sfo_ppm != 0) {
      impair.emplace(channel_config{.snr_db = snr_db, .cfo_hz = cfo_hz, .sfo_ppm = sfo_ppm, .seed = seed});
    }
    std::optional<std::ofstream> payload;
    if (!payload_out.empty()) {
      payload.emplace(payload_out, std::ios::binary);
    }
    std::optional<std::ofstream> csv;
    bool csv_header = true;
    if (!csv_out.empty()) {
      csv.emplace(csv_out);
    }

    ue rx(cfg);
    const auto report = [&] {
      const std::string line = format_stats(rx.stats());
      std::printf("%s\n", line.c_str());
      std::fflush(stdout);
      if (csv) {
        const auto fields = parse_stats(line);
        std::string head, row;
        for (const auto& [k, v] : fields) {
          head += (head.empty() ? "" : ",") + k;
          row += (row.empty() ? "" : ",") + v;
        }
        if (csv_header) {
          *csv << head << '\n';
          csv_header = false;
        }
        *csv << row << '\n';
      }
    };

    const uint64_t limit = duration_s > 0 ? uint64_t(std::llround(duration_s * 1000)) : UINT64_MAX;
    uint64_t n = 0;
    for (; n < limit; ++n) {
      auto samples = file ? file->read(samples_per_subframe) : stream->read_iq(samples_per_subframe);
      if (samples.empty()) {
        break;
      }
      if (impair) {
        samples = impair->process(samples);
      }
      rx.push(samples);
      if (payload) {
        const auto bytes = rx.take_payload();
        payload->write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
      }
      if ((n + 1) % 1000 == 0) {
        report();
      }
    }
    report();
    if (rx.stats().state == ue_state::search) {
      raise(error_code::no_signal, "input ended before a cell was found");
    }
    return cli::exit_ok;
  } catch (const error& e) {
    std::fprintf(stderr, "npdsch_ue: %s\n", e.what());
    return cli::exit_code_for(e);
  }
}
