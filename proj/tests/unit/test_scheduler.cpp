#include "nbiot/scheduler.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace nbiot;

namespace {

const dl_grant max_grant{.i_tbs = 12, .i_sf = 2};

uint64_t span(const planned_grant& g)
{
  return g.end() - g.npdcch + 1;
}

} // namespace

TEST_CASE("anchor reservation marks the periodic subframes")
{
  subframe_plan p(0, false);
  p.reserve_anchor(0);
  p.reserve_anchor(1);
  CHECK(p.get(0).dl == dl_assignment::npbch);
  CHECK(p.get(5).dl == dl_assignment::npss);
  CHECK(p.get(9).dl == dl_assignment::nsss);
  CHECK(p.get(4).dl == dl_assignment::sib);
  CHECK(p.get(10).dl == dl_assignment::npbch);
  CHECK(p.get(15).dl == dl_assignment::npss);
  CHECK(p.get(19).dl == dl_assignment::idle);
  CHECK(p.get(14).dl == dl_assignment::idle);
  for (unsigned sf : {1u, 2u, 3u, 6u, 7u, 8u}) {
    CHECK(p.get(sf).dl == dl_assignment::idle);
  }
  const auto before = p.to_csv();
  p.reserve_anchor(0);
  CHECK(p.to_csv() == before);
  CHECK(p.frame_reserved(1));
  CHECK_FALSE(p.frame_reserved(2));
}

TEST_CASE("reserving an anchor under a placed grant is refused")
{
  subframe_plan p(0, false);
  p.at(25) = {dl_assignment::npdsch, 3};
  CHECK_THROWS_AS(p.reserve_anchor(2), error);
}

TEST_CASE("unacknowledged grant spans eight subframes")
{
  scheduler s({.policy = alloc_policy::greedy});
  const auto& g = s.schedule_um(max_grant, 0);
  CHECK(g.npdcch == 1);
  CHECK(g.npdsch == std::vector<uint64_t>{6, 7, 8});
  CHECK(span(g) == 8);
  CHECK(s.plan().get(2).dl == dl_assignment::gap);
  CHECK(s.plan().get(4).dl == dl_assignment::sib);
}

TEST_CASE("static policy repeats every frame")
{
  scheduler s({.policy = alloc_policy::static_alloc});
  s.run(200, max_grant);
  const auto& grants = s.plan().grants();
  REQUIRE(grants.size() == 20);
  for (std::size_t i = 0; i < grants.size(); ++i) {
    CHECK(grants[i].npdcch == 10 * i + 1);
    CHECK(grants[i].npdsch == std::vector<uint64_t>{10 * i + 6, 10 * i + 7, 10 * i + 8});
  }
}

TEST_CASE("a second grant while the first is in flight is refused")
{
  scheduler s({.policy = alloc_policy::greedy});
  const auto& g = s.schedule_um(max_grant, 0);
  const uint64_t last = g.npdsch.back();
  CHECK(s.pending(last) == 0u);
  try {
    s.schedule_um(max_grant, last);
    FAIL("overlapping HARQ processes accepted");
  } catch (const error& e) {
    CHECK(e.code() == error_code::no_capacity);
  }
  CHECK_FALSE(s.pending(last + 1).has_value());
  CHECK(s.schedule_um(max_grant, last + 1).npdcch > last);
}

TEST_CASE("acknowledged spans include the ACK gap")
{
  scheduler s3({.policy = alloc_policy::greedy, .ignore_anchors = true});
  const auto& a = s3.schedule_am(max_grant, 0);
  CHECK(span(a) == 21);
  CHECK(*a.ack == a.npdsch.back() + 13);
  CHECK(s3.plan().get(*a.ack).ul == ul_assignment::npusch_ack);

  scheduler s1({.policy = alloc_policy::greedy, .ignore_anchors = true});
  CHECK(span(s1.schedule_am(dl_grant{.i_tbs = 12, .i_sf = 0}, 0)) == 19);
}

TEST_CASE("a lost ACK keeps the HARQ process pending")
{
  scheduler s({.policy = alloc_policy::greedy, .mode = rlc_mode::am});
  const auto id = s.schedule(max_grant, 0).id;
  CHECK(s.pending(1000) == id);
  CHECK_THROWS_AS(s.schedule(max_grant, 1000), error);
  s.acknowledge(id);
  CHECK_FALSE(s.pending(1000).has_value());
  CHECK_NOTHROW(s.schedule(max_grant, 1000));

  scheduler lossy({.policy = alloc_policy::greedy, .mode = rlc_mode::am});
  lossy.run(1000, max_grant, true);
  CHECK(lossy.plan().grants().size() == 1);
}

TEST_CASE("throughput of the reference plans")
{
  scheduler st({.policy = alloc_policy::static_alloc});
  st.run(10'000, max_grant);
  CHECK(throughput_of(st.plan(), 10'000) == 68.0);

  scheduler hypo({.policy = alloc_policy::greedy, .ignore_anchors = true});
  hypo.run(10'000, max_grant);
  CHECK(throughput_of(hypo.plan(), 10'000) == 85.0);

  scheduler greedy({.policy = alloc_policy::greedy});
  greedy.run(10'000, max_grant);
  const double g = throughput_of(greedy.plan(), 10'000);
  CHECK(g <= 85.0);
  CHECK(g >= 68.0);

  CHECK(throughput_of(subframe_plan{}, 10'000) == 0.0);
}

TEST_CASE("plan CSV export")
{
  scheduler s({.mode = rlc_mode::am});
  s.run(40, max_grant);
  std::istringstream in(s.plan().to_csv());
  std::string line;
  std::getline(in, line);
  CHECK(line == "hfn,sfn,subframe,assignment,grant_id,ul_assignment");
  std::getline(in, line);
  CHECK(line == "0,0,0,npbch,,none");
  std::getline(in, line);
  CHECK(line == "0,0,1,npdcch,0,none");
  CHECK(s.plan().to_csv().find("npusch_ack") != std::string::npos);
}

TEST_CASE("randomized scheduling never disturbs anchors or overlaps HARQ processes")
{
  std::mt19937_64 rng(2024);
  for (unsigned seq = 0; seq < 10'000; ++seq) {
    scheduler_config cfg;
    cfg.policy = (rng() & 1) ? alloc_policy::greedy : alloc_policy::static_alloc;
    cfg.mode = (rng() & 1) ? rlc_mode::am : rlc_mode::um;
    cfg.sched_delay_sf = 4 + unsigned(rng() % 8);
    cfg.harq_ack_delay_sf = 12 + unsigned(rng() % 8);
    const uint64_t start = rng() % 5000;
    scheduler s(cfg, start);

    uint64_t now = start;
    unsigned refused = 0;
    for (unsigned step = 0; step < 6; ++step) {
      dl_grant g;
      do {
        g.i_tbs = unsigned(rng() % (max_i_tbs + 1));
        g.i_sf = unsigned(rng() % (max_i_sf + 1));
      } while (!tbs_supported(g.i_tbs, g.i_sf));
      now += rng() % 30;
      const bool busy = s.pending(now).has_value();
      try {
        const auto& p = s.schedule(g, now);
        REQUIRE_FALSE(busy);
        if (p.ack && (rng() % 8) != 0) {
          s.acknowledge(p.id);
        }
      } catch (const error& e) {
        REQUIRE(busy);
        REQUIRE(e.code() == error_code::no_capacity);
        ++refused;
      }
    }

    const auto& plan = s.plan();
    for (uint64_t t = start; t < start + plan.size(); ++t) {
      const auto tc = timing_counters::from_absolute(t);
      const auto e = plan.get(t);
      if (tc.subframe == 0 || tc.subframe == 5 || (tc.subframe == 9 && tc.sfn % 2 == 0)) {
        REQUIRE(is_anchor(e.dl));
        REQUIRE(e.grant_id == -1);
      }
    }
    const auto& grants = plan.grants();
    for (std::size_t i = 0; i < grants.size(); ++i) {
      for (uint64_t t : grants[i].npdsch) {
        REQUIRE(plan.get(t).dl == dl_assignment::npdsch);
        REQUIRE(plan.get(t).grant_id == int64_t(i));
      }
      REQUIRE(plan.get(grants[i].npdcch).grant_id == int64_t(i));
      REQUIRE(grants[i].npdsch.front() >= grants[i].npdcch + cfg.sched_delay_sf + 1);
      if (i > 0) {
        REQUIRE(grants[i].npdcch > grants[i - 1].end());
      }
    }
  }
}
