#include "nbiot/coding.hpp"
#include "nbiot/rate_model.hpp"
#include "nbiot/scheduler.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace nbiot;

TEST_CASE("unacknowledged budget for the largest block")
{
  const auto r = rate({680, 3, rlc_mode::um});
  CHECK(r.latency_ms == 8.0);
  CHECK(r.rate_kbps == 85.0);
}

TEST_CASE("acknowledged budget for the largest block")
{
  const auto r = rate({680, 3, rlc_mode::am});
  CHECK(r.latency_ms == 21.0);
  CHECK(std::abs(r.rate_kbps - 32.38) < 0.01);
}

TEST_CASE("smallest block over one subframe")
{
  const auto r = rate({16, 1, rlc_mode::um});
  CHECK(r.latency_ms == 6.0);
  CHECK(r.rate_kbps == doctest::Approx(16.0 / 6.0));
  CHECK(rate({16, 1, rlc_mode::am}).latency_ms == 19.0);
}

TEST_CASE("rate queries outside the table are rejected")
{
  CHECK_THROWS_AS(rate({680, 7, rlc_mode::um}), error);
  CHECK_THROWS_AS(rate({680, 0, rlc_mode::um}), error);
  CHECK_THROWS_AS(rate({680, 1, rlc_mode::um}), error);
  CHECK_THROWS_AS(rate({17, 1, rlc_mode::um}), error);
}

TEST_CASE("theoretical peak ignores control overhead")
{
  CHECK(std::abs(theoretical_peak_kbps() - 226.67) < 0.01);
  CHECK(theoretical_peak_kbps() == 680.0 / 3.0);
  CHECK(theoretical_peak_kbps() > rate({680, 3, rlc_mode::um}).rate_kbps);
}

TEST_CASE("rate times latency gives back the block size for every entry")
{
  for (unsigned i = 0; i <= max_i_tbs; ++i) {
    for (unsigned s = 0; s <= max_i_sf; ++s) {
      if (!tbs_supported(i, s)) {
        continue;
      }
      const unsigned tbs = tbs_lookup(i, s);
      const unsigned n_sf = nof_subframes(s);
      const auto um = rate({tbs, n_sf, rlc_mode::um});
      const auto am = rate({tbs, n_sf, rlc_mode::am});
      CHECK(std::abs(um.rate_kbps * um.latency_ms - tbs) <= 1e-12 * tbs);
      CHECK(std::abs(am.rate_kbps * am.latency_ms - tbs) <= 1e-12 * tbs);
      CHECK(um.rate_kbps > am.rate_kbps);
      CHECK(um.latency_ms == 5.0 + n_sf);
      CHECK(am.latency_ms == 18.0 + n_sf);
    }
  }
}

TEST_CASE("curves pick the closest block size per subframe count")
{
  const auto top = curve(rlc_mode::um, max_i_tbs);
  REQUIRE(top.size() == 8);
  bool found = false;
  for (const auto& p : top) {
    if (p.n_sf == 3) {
      CHECK(p.tbs_bits == 680);
      CHECK(p.result.rate_kbps == 85.0);
      found = true;
    }
  }
  CHECK(found);

  for (unsigned i = 0; i <= max_i_tbs; ++i) {
    const auto um = curve(rlc_mode::um, i);
    const auto am = curve(rlc_mode::am, i);
    REQUIRE(um.size() == am.size());
    for (std::size_t k = 0; k < um.size(); ++k) {
      CHECK(um[k].tbs_bits == am[k].tbs_bits);
      CHECK(am[k].result.rate_kbps < um[k].result.rate_kbps);
      // Brute-force oracle for the closest-value rule with the smaller-wins tie-break.
      unsigned nominal = 0;
      for (unsigned s = 0; s <= max_i_sf; ++s) {
        if (tbs_supported(i, s)) {
          nominal = std::max(nominal, tbs_lookup(i, s));
        }
      }
      const unsigned s = *i_sf_for_subframes(um[k].n_sf);
      for (unsigned j = 0; j <= max_i_tbs; ++j) {
        if (!tbs_supported(j, s)) {
          continue;
        }
        const int d_best = std::abs(int(um[k].tbs_bits) - int(nominal));
        const int d_other = std::abs(int(tbs_lookup(j, s)) - int(nominal));
        CHECK(d_best <= d_other);
        if (d_best == d_other) {
          CHECK(um[k].tbs_bits <= tbs_lookup(j, s));
        }
      }
    }
  }
  CHECK_THROWS_AS(curve(rlc_mode::um, max_i_tbs + 1), error);
}

TEST_CASE("fixed block size: rate falls as subframes grow")
{
  const unsigned tbs = 256;
  double prev = 1e9;
  for (unsigned n : {1u, 2u, 3u, 4u, 5u, 6u, 8u, 10u}) {
    const auto s = *i_sf_for_subframes(n);
    bool present = false;
    for (unsigned i = 0; i <= max_i_tbs; ++i) {
      present = present || (tbs_supported(i, s) && tbs_lookup(i, s) == tbs);
    }
    if (!present) {
      continue;
    }
    const double r = rate({tbs, n, rlc_mode::um}).rate_kbps;
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("curve CSV carries one line per point")
{
  const auto csv = curves_csv(rlc_mode::am);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "i_tbs,n_sf,tbs,latency_ms,rate_kbps");
  unsigned rows = 0;
  while (std::getline(in, line)) {
    ++rows;
  }
  CHECK(rows == (max_i_tbs + 1) * 8);
  CHECK(csv.find("12,3,680,21,32.38") != std::string::npos);
}

TEST_CASE("greedy schedule without anchors converges to the analytical rate")
{
  for (unsigned i_sf : {0u, 1u, 2u, 4u, 7u}) {
    for (unsigned i_tbs : {0u, 5u}) {
      if (!tbs_supported(i_tbs, i_sf)) {
        continue;
      }
      for (auto mode : {rlc_mode::um, rlc_mode::am}) {
        scheduler s({.policy = alloc_policy::greedy, .mode = mode, .ignore_anchors = true});
        const dl_grant g{.i_tbs = i_tbs, .i_sf = i_sf};
        s.run(100'000, g);
        const double measured = throughput_of(s.plan(), 100'000);
        const double model = rate({g.tbs(), g.n_sf(), mode}).rate_kbps;
        CHECK(std::abs(measured - model) <= 0.005 * model);
      }
    }
  }
}
