#include "nbiot/apps/enb.hpp"
#include "nbiot/apps/iq_io.hpp"
#include "nbiot/apps/link.hpp"
#include "nbiot/apps/ue.hpp"
#include "nbiot/rate_model.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <thread>

using namespace nbiot;

namespace {

std::string temp_path(const std::string& name)
{
  return (std::filesystem::temp_directory_path() / ("nbiot_test_" + name)).string();
}

double grid_energy(const resource_grid& g)
{
  double e = 0;
  for (const auto& c : g.cells()) {
    e += std::norm(c);
  }
  return e;
}

/// Energy of every subframe the eNB emits over n subframes.
std::vector<double> subframe_energies(enb& node, unsigned n)
{
  std::vector<double> out;
  for (unsigned i = 0; i < n; ++i) {
    out.push_back(grid_energy(ofdm_demodulate(node.next_subframe())));
  }
  return out;
}

bool expected_anchor(uint64_t t)
{
  const auto tc = timing_counters::from_absolute(t);
  return reserved_subframe(tc);
}

} // namespace

TEST_CASE("cf32 files round-trip at float precision")
{
  const auto path = temp_path("roundtrip.cf32");
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  sample_buffer x(5000);
  for (auto& s : x) {
    s = {g(rng), g(rng)};
  }
  write_iq_file(path, x);
  CHECK(std::filesystem::file_size(path) == x.size() * 8);
  const auto y = read_iq_file(path);
  REQUIRE(y.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(y[i] - x[i]) <= 1e-6 * (1 + std::abs(x[i])));
  }

  {
    std::FILE* f = std::fopen(path.c_str(), "ab");
    const float half = 1.0f;
    std::fwrite(&half, sizeof half, 1, f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_iq_file(path), error);
  std::filesystem::remove(path);

  try {
    read_iq_file(temp_path("missing/none.cf32"));
    FAIL("missing file accepted");
  } catch (const error& e) {
    CHECK(e.code() == error_code::io_error);
  }
}

TEST_CASE("socket transport carries IQ and command lines")
{
  tcp_listener listener(0);
  REQUIRE(listener.port() != 0);
  CHECK_FALSE(listener.accept(10).has_value());

  sample_buffer x(3000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = {double(i), -0.5 * double(i)};
  }
  std::thread client([&] {
    auto s = tcp_stream::connect("127.0.0.1", listener.port());
    const std::string cmds = "tbs 3\r\nmode am\npartial";
    s.write_all(std::span(reinterpret_cast<const uint8_t*>(cmds.data()), cmds.size()));
    s.write_iq(x);
  });
  auto server = listener.accept(2000);
  REQUIRE(server.has_value());
  CHECK(server->read_line() == std::optional<std::string>("tbs 3"));
  CHECK(server->read_line() == std::optional<std::string>("mode am"));
  client.join();

  std::string partial(7, '\0');
  std::size_t got = 0;
  while (got < partial.size()) {
    got += server->read_some(std::span(reinterpret_cast<uint8_t*>(partial.data()) + got, partial.size() - got));
  }
  CHECK(partial == "partial");
  const auto y = server->read_iq(x.size() + 10);
  REQUIRE(y.size() == x.size());
  CHECK(y.back() == x.back());

  CHECK_THROWS_AS(tcp_listener(listener.port()), error);
}

TEST_CASE("payload queue applies back-pressure")
{
  byte_queue q(100);
  const std::vector<uint8_t> chunk(80, 7);
  CHECK(q.push(chunk));
  std::atomic<bool> done{false};
  std::thread writer([&] {
    q.push(chunk);
    done = true;
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  CHECK_FALSE(done.load());
  CHECK(q.size() == 100);
  CHECK_FALSE(q.try_pop(101).has_value());
  REQUIRE(q.try_pop(85).has_value());
  writer.join();
  CHECK(done.load());
  CHECK(q.size() == 75);

  std::thread blocked([&] { CHECK_FALSE(q.push(std::vector<uint8_t>(200, 1))); });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  q.close();
  blocked.join();
}

TEST_CASE("control commands")
{
  const cell_config cell;
  enb_settings s;
  s = apply_command(s, "tbs 0", cell);
  CHECK(s.i_tbs == 0);
  s = apply_command(s, "nsf 10", cell);
  CHECK(s.n_sf == 10);
  CHECK(s.i_sf() == 7);
  s = apply_command(s, "policy greedy", cell);
  CHECK(s.policy == alloc_policy::greedy);
  s = apply_command(s, "mode am", cell);
  CHECK(s.mode == rlc_mode::am);

  for (const char* bad : {"", "tbs", "tbs x", "tbs -1", "tbs 13", "nsf 7", "nsf 3 4", "policy fair", "mode tm",
                          "rate 5"}) {
    try {
      apply_command(s, bad, cell);
      FAIL("accepted: ", bad);
    } catch (const error& e) {
      CHECK(e.code() == error_code::invalid_command);
    }
  }

  // 680 bits plus CRC exceed three subframes of coded capacity with two ports.
  const cell_config two_ports{.n_ports = 2};
  enb_settings big;
  CHECK_THROWS_AS(apply_command(big, "nsf 3", two_ports), error);
  CHECK_NOTHROW(apply_command(big, "tbs 11", two_ports));
}

TEST_CASE("idle eNB emits only anchor channels")
{
  enb node({});
  const auto e = subframe_energies(node, 80);
  for (uint64_t t = 0; t < e.size(); ++t) {
    CAPTURE(t);
    if (expected_anchor(t)) {
      CHECK(e[t] > 1.0);
    } else {
      CHECK(e[t] == 0.0);
    }
  }
  CHECK(node.stats().grants == 0);
}

TEST_CASE("a full block of queued bytes yields one NPDSCH per frame")
{
  enb node({});
  const std::vector<uint8_t> block(85, 0xA5);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(node.queue().push(block));
  }
  node.queue().push(std::vector<uint8_t>(40, 1));
  const auto e = subframe_energies(node, 80);
  for (uint64_t t = 0; t < e.size(); ++t) {
    CAPTURE(t);
    const unsigned sf = t % 10;
    const bool busy = t < 40 && (sf == 1 || sf == 6 || sf == 7 || sf == 8);
    if (expected_anchor(t) || busy) {
      CHECK(e[t] > 1.0);
    } else {
      CHECK(e[t] == 0.0);
    }
  }
  const auto& grants = node.plan().grants();
  REQUIRE(grants.size() == 4);
  for (std::size_t i = 0; i < grants.size(); ++i) {
    CHECK(grants[i].npdcch == 10 * i + 1);
    CHECK(grants[i].grant.tbs() == 680);
  }
  CHECK(node.queue().size() == 40);
}

TEST_CASE("a block size command applies to later grants")
{
  enb node({});
  node.queue().push(std::vector<uint8_t>(85, 1));
  subframe_energies(node, 3);
  node.command("tbs 0");
  CHECK(node.settings().i_tbs == 0);
  const unsigned small = tbs_lookup(0, 2) / 8;
  node.queue().push(std::vector<uint8_t>(small, 2));
  subframe_energies(node, 20);
  const auto& grants = node.plan().grants();
  REQUIRE(grants.size() == 2);
  CHECK(grants[0].grant.i_tbs == 12);
  CHECK(grants[1].grant.i_tbs == 0);
  CHECK_THROWS_AS(node.command("tbs 99"), error);
  CHECK(node.settings().i_tbs == 0);
}

TEST_CASE("UE without a signal reports NoSignal")
{
  ue rx({.search_timeout_ms = 200});
  const sample_buffer silence(samples_per_subframe);
  try {
    for (int i = 0; i < 400; ++i) {
      rx.push(silence);
    }
    FAIL("no timeout");
  } catch (const error& e) {
    CHECK(e.code() == error_code::no_signal);
  }
  CHECK(rx.stats().state == ue_state::search);
}

TEST_CASE("loopback delivers the queued payload unchanged")
{
  enb_config ec;
  ec.cell.n_id_ncell = 222;
  enb tx(ec);
  ue rx;
  channel dl({.snr_db = 20, .cfo_hz = -350, .seed = 9});
  std::mt19937_64 rng(3);
  std::vector<uint8_t> sent(85 * 30);
  for (auto& b : sent) {
    b = uint8_t(rng());
  }
  tx.queue().push(sent);

  std::vector<uint8_t> got;
  std::vector<unsigned> mib_sfns;
  for (int n = 0; n < 600; ++n) {
    rx.push(dl.process(tx.next_subframe()));
    const auto p = rx.take_payload();
    got.insert(got.end(), p.begin(), p.end());
    if (rx.stats().state == ue_state::camped && rx.stats().time.subframe == 9) {
      mib_sfns.push_back(rx.stats().mib_sfn);
    }
  }
  CHECK(rx.stats().n_id_ncell == 222);
  CHECK(std::abs(rx.stats().cfo_hz + 350) < 25);
  CHECK(got == sent);
  CHECK(rx.stats().blocks_failed == 0);
  REQUIRE(mib_sfns.size() > 20);
  for (std::size_t i = 1; i < mib_sfns.size(); ++i) {
    CHECK(mib_sfns[i] == (mib_sfns[i - 1] + 1) % 1024);
  }
}

TEST_CASE("stats line is a parseable key=value record")
{
  ue_stats s;
  s.state = ue_state::camped;
  s.n_id_ncell = 17;
  s.cfo_hz = 123.45;
  s.blocks_ok = 99;
  s.blocks_failed = 1;
  s.bits_ok = 99 * 680;
  s.camped_subframes = 1000;
  const auto f = parse_stats(format_stats(s));
  for (const char* key :
       {"state", "cell_id", "sfn", "mib_sfn", "cfo_hz", "sfo_ppm", "npdsch_bler", "throughput_kbps"}) {
    CHECK(f.count(key) == 1);
  }
  CHECK(f.at("state") == "camped");
  CHECK(f.at("cell_id") == "17");
  CHECK(f.at("npdsch_bler") == "0.010");
  CHECK(std::stod(f.at("throughput_kbps")) == doctest::Approx(67.32));
}

TEST_CASE("transmitted IQ is contiguous")
{
  const auto path = temp_path("contiguous.cf32");
  loopback_config c;
  c.enb.saturate = true;
  c.duration_s = 0.5;
  std::vector<std::size_t> sizes;
  iq_file_writer w(path);
  c.on_downlink = [&](std::span<const cf_t> s) {
    sizes.push_back(s.size());
    w.write(s);
  };
  const auto r = run_loopback(c);
  CHECK(r.subframes == 500);
  REQUIRE(sizes.size() == 500);
  for (auto s : sizes) {
    CHECK(s == samples_per_subframe);
  }
  CHECK(w.samples_written() == 500ull * samples_per_subframe);
  std::filesystem::remove(path);
}

TEST_CASE("UE throughput agrees with the eNB plan")
{
  for (auto mode : {rlc_mode::um, rlc_mode::am}) {
    const std::string name = to_string(mode);
    CAPTURE(name);
    loopback_config c;
    c.enb.saturate = true;
    c.enb.settings.mode = mode;
    c.downlink = {.snr_db = 20, .seed = 11};
    c.uplink = {.snr_db = 20, .seed = 12};
    c.duration_s = 20;
    const auto r = run_loopback(c);
    CHECK(r.ue.npdsch_bler() == 0.0);
    CHECK(std::abs(r.ue.throughput_kbps() - r.plan_throughput_kbps) <= 0.005 * r.plan_throughput_kbps);
    if (mode == rlc_mode::um) {
      CHECK(r.plan_throughput_kbps == doctest::Approx(68.0).epsilon(0.001));
    } else {
      // Only the block sent before the UE acquired the cell goes unacknowledged.
      CHECK(r.enb.missed_acks <= 1);
      CHECK(r.enb.acks + r.enb.missed_acks + 1 >= r.enb.grants);
    }
  }
}

TEST_CASE("UE tracks a sample-clock offset")
{
  loopback_config c;
  c.enb.saturate = true;
  c.downlink = {.snr_db = 20, .sfo_ppm = 15, .seed = 21};
  c.duration_s = 5;
  const auto r = run_loopback(c);
  CHECK(r.ue.npdsch_bler() == 0.0);
  CHECK(std::abs(r.ue.sfo_ppm - 15) < 1.0);
}

TEST_CASE("experiment harness rows")
{
  experiment_config c;
  c.n_sf_values = {1, 3};
  c.i_tbs_first = 10;
  c.i_tbs_last = 11;
  c.duration_s = 3;
  const auto rows = run_experiments(c);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(r.tbs == tbs_lookup(r.i_tbs, *i_sf_for_subframes(r.n_sf)));
    CHECK(r.predicted_kbps == r.tbs / 10.0);
    CHECK(r.rate_model_um_kbps == rate({r.tbs, r.n_sf, rlc_mode::um}).rate_kbps);
    CHECK(r.match);
    CHECK(r.bler == 0.0);
  }
  const auto csv = experiments_csv(rows);
  CHECK(csv.rfind("n_sf,i_tbs,tbs,measured_kbps,predicted_kbps,rate_model_um_kbps,bler,match\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  experiment_config full;
  full.duration_s = 0.05;
  CHECK(run_experiments(full).size() == 36);
}
