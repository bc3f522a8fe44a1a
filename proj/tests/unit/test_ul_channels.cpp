#include "nbiot/ul_channels.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace nbiot;

namespace {

/// Independent single-bin DFT of one 3.75 kHz symbol.
cf_t tone_bin(std::span<const cf_t> x, double offset)
{
  cf_t acc{};
  for (std::size_t n = 0; n < x.size(); ++n) {
    acc += x[n] * std::exp(cf_t(0, -2 * pi * offset * double(n) / double(x.size())));
  }
  return acc;
}

sample_buffer delayed(std::span<const cf_t> x, std::size_t d, std::size_t total)
{
  sample_buffer out(total);
  for (std::size_t n = d; n < total && n - d < x.size(); ++n) {
    out[n] = x[n - d];
  }
  return out;
}

void scale(sample_buffer& x, cf_t g)
{
  for (auto& v : x) {
    v *= g;
  }
}

} // namespace

TEST_CASE("NPRACH preamble lengths follow the symbol-group duration")
{
  nprach_config cfg;
  CHECK(nprach_generate(cfg).size() == std::size_t(5.6e-3 * sample_rate_hz));
  cfg.format = nprach_format::f1_1ms6;
  CHECK(nprach_generate(cfg).size() == std::size_t(4 * 1.6e-3 * sample_rate_hz));
  cfg.n_rep = 8;
  CHECK(nprach_generate(cfg).size() == std::size_t(32 * 1.6e-3 * sample_rate_hz));
  CHECK_THROWS_AS(nprach_generate(nprach_config{.n_rep = 3}), error);
  CHECK_THROWS_AS(nprach_generate(nprach_config{.n_rep = 256}), error);
  CHECK_THROWS_AS(nprach_generate(nprach_config{.n_init = 48}), error);
}

TEST_CASE("each symbol group is a CP plus five identical single-tone symbols")
{
  nprach_config cfg;
  cfg.n_init = 29;
  cfg.n_rep = 2;
  const auto x = nprach_generate(cfg);
  const auto tones = nprach_hopping(cfg);
  const std::size_t len = 128 + 5 * 512;
  for (std::size_t g = 0; g < tones.size(); ++g) {
    const cf_t* grp = x.data() + g * len;
    for (unsigned s = 1; s < 5; ++s) {
      for (unsigned n = 0; n < 512; n += 7) {
        CHECK(std::abs(grp[128 + s * 512 + n] - grp[128 + n]) < 1e-9);
      }
    }
    for (unsigned n = 0; n < 128; ++n) {
      CHECK(std::abs(grp[n] - grp[512 + n]) < 1e-9);
    }
    const std::span<const cf_t> sym(grp + 128, 512);
    const double offset = double(tones[g]) - 24.0;
    const double on = std::abs(tone_bin(sym, offset));
    const double off = std::abs(tone_bin(sym, offset + 1));
    CHECK(on > 1e6 * off);
  }
  CHECK(nprach_generate(cfg) == x);
}

TEST_CASE("NPRACH hopping is a bijection that stays inside the region")
{
  for (unsigned region : {12u, 24u, 48u}) {
    for (uint16_t id : {0, 1, 77, 503}) {
      std::set<std::vector<unsigned>> seen;
      for (unsigned init = 0; init < region; ++init) {
        nprach_config cfg;
        cfg.n_subcarriers = region;
        cfg.n_init = init;
        cfg.n_rep = 4;
        cfg.n_id_ncell = id;
        const auto t = nprach_hopping(cfg);
        REQUIRE(t.size() == 16);
        const unsigned lo = 12 * (init / 12);
        for (unsigned tone : t) {
          CHECK(tone >= lo);
          CHECK(tone < lo + 12);
        }
        CHECK(t[0] == init);
        for (unsigned p = 0; p < 4; ++p) {
          const auto* q = t.data() + 4 * p;
          CHECK(std::abs(int(q[1]) - int(q[0])) == 1);
          CHECK(std::abs(int(q[2]) - int(q[1])) == 6);
          CHECK(std::abs(int(q[3]) - int(q[2])) == 1);
        }
        seen.insert({t.begin(), t.begin() + 4});
      }
      CHECK(seen.size() == region);
    }
  }
}

TEST_CASE("NPRACH detection recovers the initializer and the arrival delay")
{
  nprach_config cfg;
  cfg.n_init = 17;
  const auto x = nprach_generate(cfg);
  const auto rx = delayed(x, 50, x.size());
  const auto d = nprach_detect(rx, cfg);
  REQUIRE(d.has_value());
  CHECK(d->n_init == 17);
  CHECK(std::abs(int(d->timing_advance_samples) - 50) <= 2);

  for (auto fmt : {nprach_format::f0_1ms4, nprach_format::f1_1ms6}) {
    std::mt19937_64 rng(11);
    for (unsigned trial = 0; trial < 10; ++trial) {
      nprach_config c;
      c.format = fmt;
      c.n_id_ncell = uint16_t(rng() % 504);
      c.n_init = unsigned(rng() % 48);
      c.n_rep = 2;
      const unsigned delay = unsigned(rng() % (nprach_cp_len(fmt) + 1));
      auto y = delayed(nprach_generate(c), delay, c.nof_samples());
      scale(y, std::polar(0.5, double(rng() % 628) / 100));
      const auto det = nprach_detect(y, c);
      REQUIRE(det.has_value());
      CHECK(det->n_init == c.n_init);
      CHECK(std::abs(int(det->timing_advance_samples) - int(delay)) <= 2);
    }
  }
}

TEST_CASE("NPRACH detection at 0 dB with eight repetitions")
{
  std::mt19937_64 rng(12);
  nprach_config cfg;
  cfg.n_rep = 8;
  cfg.n_id_ncell = 42;
  unsigned ok = 0;
  for (unsigned trial = 0; trial < 100; ++trial) {
    cfg.n_init = unsigned(rng() % 48);
    const unsigned delay = unsigned(rng() % 100);
    auto y = delayed(nprach_generate(cfg), delay, cfg.nof_samples());
    test::add_noise(rng, y, 1.0);
    const auto d = nprach_detect(y, cfg);
    if (d && d->n_init == cfg.n_init && std::abs(int(d->timing_advance_samples) - int(delay)) <= 2) {
      ++ok;
    }
  }
  CHECK(ok >= 95);
}

TEST_CASE("NPRACH detection rejects noise")
{
  std::mt19937_64 rng(13);
  for (unsigned n_rep : {1u, 8u}) {
    nprach_config cfg;
    cfg.n_rep = n_rep;
    for (unsigned trial = 0; trial < 20; ++trial) {
      sample_buffer y(cfg.nof_samples());
      test::add_noise(rng, y, 1.0);
      CHECK_FALSE(nprach_detect(y, cfg).has_value());
    }
  }
  nprach_config cfg;
  CHECK_FALSE(nprach_detect(sample_buffer(cfg.nof_samples()), cfg).has_value());
  CHECK_THROWS_AS(nprach_detect(sample_buffer(100), cfg), error);
}

TEST_CASE("BPSK rotation gives quarter-turn steps")
{
  for (int a : {1, -1}) {
    for (int b : {1, -1}) {
      for (uint64_t first : {0ULL, 1ULL, 2ULL, 3ULL, 1001ULL}) {
        const std::vector<cf_t> in{cf_t(a, 0), cf_t(b, 0)};
        const auto out = apply_ul_phase_rotation(in, ul_modulation::bpsk, first);
        const cf_t ratio = out[1] / out[0];
        CHECK((ratio == cf_t(0, 1) || ratio == cf_t(0, -1)));
      }
    }
  }
  const std::vector<cf_t> one{cf_t(-1, 0)};
  CHECK(apply_ul_phase_rotation(one, ul_modulation::bpsk)[0] == cf_t(-1, 0));
}

TEST_CASE("QPSK rotation never steps through the origin")
{
  const auto points = qpsk_map(bit_vector{0, 0, 0, 1, 1, 0, 1, 1});
  for (uint64_t first = 0; first < 8; ++first) {
    for (auto p : points) {
      for (auto q : points) {
        const std::vector<cf_t> in{p, q};
        const auto out = apply_ul_phase_rotation(in, ul_modulation::qpsk, first);
        const double step = std::arg(out[1] / out[0]);
        CHECK(std::abs(std::abs(step) - pi) > 0.1);
      }
    }
  }
}

TEST_CASE("rotated constellations keep a constant envelope and de-rotate exactly")
{
  std::mt19937_64 rng(14);
  const auto q = qpsk_map(test::random_bits(rng, 20'000));
  const auto rq = apply_ul_phase_rotation(q, ul_modulation::qpsk);
  for (auto v : rq) {
    CHECK(std::abs(v) == 1.0);
  }
  const auto back = remove_ul_phase_rotation(rq, ul_modulation::qpsk);
  double worst = 0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    worst = std::max(worst, std::abs(std::arg(back[k] / q[k])));
  }
  CHECK(worst < 1e-9);

  std::vector<cf_t> b(10'000);
  for (auto& v : b) {
    v = (rng() & 1) ? cf_t(1, 0) : cf_t(-1, 0);
  }
  const auto rb = apply_ul_phase_rotation(b, ul_modulation::bpsk, 5);
  for (std::size_t k = 0; k < b.size(); ++k) {
    CHECK(std::abs(rb[k]) == 1.0);
  }
  CHECK(remove_ul_phase_rotation(rb, ul_modulation::bpsk, 5) == b);
}

TEST_CASE("NPUSCH format 2 carries the ACK bit")
{
  cell_config cell{.n_id_ncell = 33};
  npusch_allocation a{.format = npusch_format::f2_uci, .first_subcarrier = 6, .n_tones = 6, .rnti = 0x3001};
  a.start = {0, 12, 7};
  CHECK(a.n_slots() == 2);
  for (uint8_t ack : {uint8_t(0), uint8_t(1)}) {
    const auto x = npusch_encode(bit_vector{ack}, a, cell);
    CHECK(x.size() == samples_per_subframe);
    CHECK(npusch_decode(x, a, cell) == bit_vector{ack});
  }
  std::mt19937_64 rng(15);
  unsigned ok = 0;
  for (unsigned trial = 0; trial < 100; ++trial) {
    const uint8_t ack = uint8_t(rng() & 1);
    auto x = npusch_encode(bit_vector{ack}, a, cell);
    scale(x, std::polar(1.0, double(trial)));
    test::add_noise(rng, x, 1.0);
    try {
      ok += npusch_decode(x, a, cell) == bit_vector{ack};
    } catch (const error&) {
    }
  }
  CHECK(ok >= 95);

  unsigned dtx = 0;
  for (unsigned trial = 0; trial < 50; ++trial) {
    sample_buffer y(samples_per_subframe);
    test::add_noise(rng, y, 1.0);
    try {
      npusch_decode(y, a, cell);
    } catch (const error& e) {
      dtx += e.code() == error_code::crc_fail;
    }
  }
  CHECK(dtx >= 48);
  CHECK_THROWS_AS(npusch_encode(bit_vector{1, 0}, a, cell), error);
}

TEST_CASE("NPUSCH format 1 round-trips every supported payload size")
{
  std::mt19937_64 rng(16);
  cell_config cell{.n_id_ncell = 211};
  for (unsigned i_tbs = 0; i_tbs <= max_i_tbs; ++i_tbs) {
    for (unsigned i_sf = 0; i_sf <= max_i_sf; ++i_sf) {
      if (!tbs_supported(i_tbs, i_sf)) {
        continue;
      }
      npusch_allocation a{.i_tbs = i_tbs, .i_sf = i_sf, .rnti = uint16_t(rng())};
      a.start = timing_counters::from_absolute(rng() % 100000);
      CHECK(npusch_capacity_bits(a) == 288 * nof_subframes(i_sf));
      const auto payload = test::random_bits(rng, a.tbs());
      const auto x = npusch_encode(payload, a, cell);
      CHECK(x.size() == std::size_t(nof_subframes(i_sf)) * samples_per_subframe);
      CHECK(npusch_decode(x, a, cell) == payload);
    }
  }
}

TEST_CASE("narrow NPUSCH allocations stretch in time and stay in their tones")
{
  std::mt19937_64 rng(17);
  cell_config cell{.n_id_ncell = 5};
  for (unsigned tones : {3u, 6u}) {
    for (unsigned first = 0; first + tones <= 12; first += tones) {
      npusch_allocation a{.first_subcarrier = first, .n_tones = tones, .i_tbs = 3, .i_sf = 1, .rnti = 77};
      CHECK(a.n_slots() == 2 * 2 * (12 / tones));
      const auto payload = test::random_bits(rng, a.tbs());
      const auto x = npusch_encode(payload, a, cell);
      REQUIRE(x.size() == std::size_t(a.n_slots()) * samples_per_slot);
      CHECK(npusch_decode(x, a, cell) == payload);
      const auto g = ofdm_demodulate(std::span(x).first(samples_per_subframe));
      for (unsigned k = 0; k < 12; ++k) {
        const bool inside = k >= first && k < first + tones;
        CHECK((std::abs(g.at(k, 0)) > 1e-9) == inside);
      }
    }
  }
  CHECK_THROWS_AS(npusch_encode(bit_vector(56), npusch_allocation{.first_subcarrier = 2, .n_tones = 3}, cell), error);
  CHECK_THROWS_AS(npusch_encode(bit_vector(56), npusch_allocation{.n_tones = 4}, cell), error);
}

TEST_CASE("NPUSCH rejects a payload that does not match the allocation")
{
  cell_config cell;
  npusch_allocation a{.i_tbs = 2, .i_sf = 0};
  try {
    npusch_encode(bit_vector(40), a, cell);
    FAIL("size mismatch accepted");
  } catch (const error& e) {
    CHECK(e.code() == error_code::size_mismatch);
  }
}

TEST_CASE("NPUSCH at 20 dB decodes 1000 blocks without error")
{
  std::mt19937_64 rng(18);
  cell_config cell{.n_id_ncell = 99};
  npusch_allocation a{.i_tbs = 12, .i_sf = 2, .rnti = 0x4321};
  const double var = std::pow(10.0, -20.0 / 10);
  unsigned errors = 0;
  for (unsigned trial = 0; trial < 1000; ++trial) {
    a.start = timing_counters::from_absolute(trial * 7);
    const auto payload = test::random_bits(rng, a.tbs());
    auto x = npusch_encode(payload, a, cell);
    scale(x, std::polar(1.0, double(trial) * 0.37));
    test::add_noise(rng, x, var);
    try {
      errors += npusch_decode(x, a, cell) != payload;
    } catch (const error&) {
      ++errors;
    }
  }
  CHECK(errors == 0);
}

TEST_CASE("NPUSCH noise fails the CRC")
{
  std::mt19937_64 rng(19);
  npusch_allocation a{.i_tbs = 5, .i_sf = 1};
  sample_buffer y(std::size_t(a.n_slots()) * samples_per_slot);
  test::add_noise(rng, y, 1.0);
  try {
    npusch_decode(y, a, cell_config{});
    FAIL("noise decoded");
  } catch (const error& e) {
    CHECK(e.code() == error_code::crc_fail);
  }
}

TEST_CASE("random access completes in four ordered steps")
{
  ra_config cfg;
  cfg.cell.n_id_ncell = 123;
  cfg.ues = {ra_ue{.n_init = 17, .identity = 0xABCDE12345, .delay_samples = 50}};
  const auto out = random_access_exchange(cfg);
  CHECK(out.success);
  REQUIRE(out.steps.size() == 4);
  CHECK(out.steps[0].name == "preamble");
  CHECK(out.steps[1].name == "rar");
  CHECK(out.steps[2].name == "msg3");
  CHECK(out.steps[3].name == "contention_resolution");
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(out.steps[i].ok);
    if (i > 0) {
      CHECK(out.steps[i].subframe > out.steps[i - 1].subframe);
    }
  }
  CHECK(out.detected_n_init == 17u);
  CHECK(out.resolved_identity == 0xABCDE12345u);
  CHECK(out.ue_won == std::vector<bool>{true});
}

TEST_CASE("random access times out without a preamble")
{
  ra_config cfg;
  cfg.suppress_nprach = true;
  try {
    random_access_exchange(cfg);
    FAIL("exchange completed without a preamble");
  } catch (const error& e) {
    CHECK(e.code() == error_code::timeout);
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("colliding preambles are resolved in favour of one UE")
{
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    ra_config cfg;
    cfg.seed = seed;
    cfg.cell.n_id_ncell = 7;
    cfg.ues = {ra_ue{.n_init = 9, .identity = 0x1111111111, .power_db = 0},
               ra_ue{.n_init = 9, .identity = 0x2222222222, .power_db = -10}};
    const auto out = random_access_exchange(cfg);
    CHECK(out.success);
    CHECK(std::count(out.ue_won.begin(), out.ue_won.end(), true) == 1);
    CHECK(out.ue_won[0]);
  }
}
