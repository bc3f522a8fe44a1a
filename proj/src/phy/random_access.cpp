#include "nbiot/channel_model.hpp"
#include "nbiot/dl_channels.hpp"
#include "nbiot/ul_channels.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nbiot {

namespace {

// RAR and contention resolution use the single-subframe entry of TBS 56, Msg3 that of TBS 88.
constexpr unsigned rar_i_tbs = 4;
constexpr unsigned msg3_i_tbs = 6;
constexpr unsigned msg3_sched_delay = 8;
constexpr unsigned response_gap_sf = 3;
constexpr unsigned identity_bits = 40;

struct rar_message {
  unsigned n_init = 0;
  ul_grant grant;
  uint16_t temp_rnti = 0;
  unsigned timing_advance = 0;
};

bit_vector pack_rar(const rar_message& r)
{
  bit_vector b;
  append_bits(b, r.n_init, 6);
  append_bits(b, r.grant.i_tbs, 4);
  append_bits(b, r.grant.i_sf, 3);
  append_bits(b, r.grant.n_tones == 12 ? 0 : r.grant.n_tones == 6 ? 1 : 2, 2);
  append_bits(b, r.grant.first_subcarrier, 4);
  append_bits(b, r.grant.sched_delay_sf, 6);
  append_bits(b, r.temp_rnti, 16);
  append_bits(b, std::min(r.timing_advance, 2047u), 11);
  b.resize(rar_tbs, 0);
  return b;
}

rar_message unpack_rar(std::span<const uint8_t> b)
{
  static constexpr unsigned tones[] = {12, 6, 3, 12};
  std::size_t pos = 0;
  rar_message r;
  r.n_init = unsigned(read_bits(b, pos, 6));
  r.grant.i_tbs = unsigned(read_bits(b, pos, 4));
  r.grant.i_sf = unsigned(read_bits(b, pos, 3));
  r.grant.n_tones = tones[read_bits(b, pos, 2)];
  r.grant.first_subcarrier = unsigned(read_bits(b, pos, 4));
  r.grant.sched_delay_sf = unsigned(read_bits(b, pos, 6));
  r.temp_rnti = uint16_t(read_bits(b, pos, 16));
  r.grant.rnti = r.temp_rnti;
  r.timing_advance = unsigned(read_bits(b, pos, 11));
  return r;
}

uint64_t next_free_dl(uint64_t abs_sf)
{
  while (reserved_subframe(timing_counters::from_absolute(abs_sf))) {
    ++abs_sf;
  }
  return abs_sf;
}

/// Downlink subframes as one UE receives them: modulation, path gain, noise, demodulation.
struct dl_reception {
  std::vector<resource_grid> grids;
  std::vector<channel_estimate> est;
};

dl_reception receive_dl(std::span<const resource_grid> tx,
                        std::span<const timing_counters> when,
                        const cell_config& cell,
                        double snr_db,
                        cf_t gain,
                        std::mt19937_64& rng)
{
  dl_reception out;
  for (std::size_t i = 0; i < tx.size(); ++i) {
    auto s = ofdm_modulate(tx[i]);
    for (auto& x : s) {
      x *= gain;
    }
    awgn(s, snr_db, 1.0, rng);
    out.grids.push_back(ofdm_demodulate(s));
    out.est.push_back(estimate_channel(out.grids.back(), cell, when[i]));
  }
  return out;
}

/// NPDCCH plus NPDSCH carrying payload to rnti; returns the assignment subframes.
struct dl_message {
  timing_counters pdcch;
  dl_grant grant;
  std::vector<timing_counters> pdsch;
  resource_grid pdcch_grid;
  std::vector<resource_grid> pdsch_grids;
};

dl_message build_dl(uint64_t earliest, uint16_t rnti, const bit_vector& payload, const cell_config& cell)
{
  dl_message m;
  m.pdcch = timing_counters::from_absolute(next_free_dl(earliest));
  m.grant = dl_grant{rar_i_tbs, 0, 4, 0, rnti};
  m.pdsch = npdsch_subframes(m.pdcch, m.grant.sched_delay_sf, m.grant.n_sf());
  m.pdcch_grid = npdcch_encode(m.grant, m.pdcch, cell);
  m.pdsch_grids = npdsch_encode(transport_block{payload, unsigned(payload.size())}, m.grant, m.pdsch, cell);
  return m;
}

/// UE side of a downlink message: blind decode, then the assignment it points to.
std::optional<bit_vector> receive_message(const dl_message& m,
                                          uint16_t rnti,
                                          const cell_config& cell,
                                          double snr_db,
                                          cf_t gain,
                                          std::mt19937_64& rng)
{
  const auto ctrl = receive_dl(std::span(&m.pdcch_grid, 1), std::span(&m.pdcch, 1), cell, snr_db, gain, rng);
  const auto d = npdcch_blind_decode(ctrl.grids[0], rnti, ctrl.est[0], m.pdcch, cell);
  if (!d || !std::holds_alternative<dl_grant>(*d)) {
    return std::nullopt;
  }
  const auto& g = std::get<dl_grant>(*d);
  const auto sfs = npdsch_subframes(m.pdcch, g.sched_delay_sf, g.n_sf());
  const auto data = receive_dl(m.pdsch_grids, sfs, cell, snr_db, gain, rng);
  try {
    return npdsch_decode(data.grids, data.est, g, sfs, cell).bits;
  } catch (const error& e) {
    if (e.code() != error_code::crc_fail) {
      throw;
    }
    return std::nullopt;
  }
}

} // namespace

ra_outcome random_access_exchange(const ra_config& cfg)
{
  cfg.cell.validate();
  nprach_config prach = cfg.prach;
  prach.format = cfg.cell.prach_format;
  prach.n_id_ncell = cfg.cell.n_id_ncell;
  prach.n_init = 0;
  prach.validate();

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> phase(0.0, 2 * pi);
  std::vector<cf_t> gains;
  for (const auto& ue : cfg.ues) {
    gains.push_back(std::polar(std::pow(10.0, ue.power_db / 20), phase(rng)));
  }

  ra_outcome out;
  out.ue_won.assign(cfg.ues.size(), false);
  const uint64_t t0 = cfg.start.absolute();

  // Step 1: preamble.
  sample_buffer rx(prach.nof_samples());
  if (!cfg.suppress_nprach) {
    for (std::size_t u = 0; u < cfg.ues.size(); ++u) {
      nprach_config p = prach;
      p.n_init = cfg.ues[u].n_init;
      const auto wave = nprach_generate(p);
      for (std::size_t n = cfg.ues[u].delay_samples; n < rx.size(); ++n) {
        rx[n] += gains[u] * wave[n - cfg.ues[u].delay_samples];
      }
    }
  }
  awgn(rx, cfg.snr_db, 1.0, rng);
  const auto det = nprach_detect(rx, prach);
  out.steps.push_back({"preamble", t0, det.has_value()});
  if (!det) {
    raise(error_code::timeout, "random access step 1: no preamble detected");
  }
  out.detected_n_init = det->n_init;

  // Step 2: random access response.
  const uint64_t preamble_sf = (prach.nof_samples() + samples_per_subframe - 1) / samples_per_subframe;
  const uint16_t ra_rnti = uint16_t(1 + (t0 / 10) % 256);
  std::uniform_int_distribution<unsigned> pick_rnti(0x0100, 0xFFF0);
  rar_message rar;
  rar.n_init = det->n_init;
  rar.grant = ul_grant{msg3_i_tbs, 0, msg3_sched_delay, 12, 0, 0};
  rar.temp_rnti = uint16_t(pick_rnti(rng));
  rar.timing_advance = det->timing_advance_samples;
  out.temp_rnti = rar.temp_rnti;
  const auto rar_msg = build_dl(t0 + preamble_sf + response_gap_sf, ra_rnti, pack_rar(rar), cfg.cell);

  std::vector<std::optional<rar_message>> accepted(cfg.ues.size());
  bool any_rar = false;
  for (std::size_t u = 0; u < cfg.ues.size(); ++u) {
    if (cfg.suppress_nprach) {
      continue;
    }
    const auto bits = receive_message(rar_msg, ra_rnti, cfg.cell, cfg.snr_db, gains[u], rng);
    if (bits) {
      const auto r = unpack_rar(*bits);
      if (r.n_init == cfg.ues[u].n_init) {
        accepted[u] = r;
        any_rar = true;
      }
    }
  }
  out.steps.push_back({"rar", rar_msg.pdcch.absolute(), any_rar});
  if (!any_rar) {
    raise(error_code::timeout, "random access step 2: no UE received a matching RAR");
  }

  // Step 3: Msg3 on the granted uplink resources; colliding UEs superimpose.
  npusch_allocation alloc;
  alloc.format = npusch_format::f1_data;
  alloc.n_tones = rar.grant.n_tones;
  alloc.first_subcarrier = rar.grant.first_subcarrier;
  alloc.i_tbs = rar.grant.i_tbs;
  alloc.i_sf = rar.grant.i_sf;
  alloc.rnti = rar.temp_rnti;
  const uint64_t msg3_start = rar_msg.pdsch.back().absolute() + 1 + rar.grant.sched_delay_sf;
  alloc.start = timing_counters::from_absolute(msg3_start);

  sample_buffer ul(std::size_t(alloc.n_slots()) * samples_per_slot);
  for (std::size_t u = 0; u < cfg.ues.size(); ++u) {
    if (!accepted[u]) {
      continue;
    }
    bit_vector payload;
    append_bits(payload, cfg.ues[u].identity, identity_bits);
    payload.resize(msg3_tbs, 0);
    const auto wave = npusch_encode(payload, alloc, cfg.cell);
    for (std::size_t n = 0; n < ul.size(); ++n) {
      ul[n] += gains[u] * wave[n];
    }
  }
  awgn(ul, cfg.snr_db, 1.0, rng);
  std::optional<uint64_t> identity;
  try {
    const auto bits = npusch_decode(ul, alloc, cfg.cell);
    std::size_t pos = 0;
    identity = read_bits(bits, pos, identity_bits);
  } catch (const error& e) {
    if (e.code() != error_code::crc_fail) {
      throw;
    }
  }
  out.steps.push_back({"msg3", msg3_start, identity.has_value()});
  if (!identity) {
    raise(error_code::timeout, "random access step 3: Msg3 not received");
  }

  // Step 4: contention resolution echoes the identity the eNB decoded.
  bit_vector cr;
  append_bits(cr, *identity, identity_bits);
  cr.resize(contention_resolution_tbs, 0);
  const uint64_t msg3_end = msg3_start + alloc.n_subframes();
  const auto cr_msg = build_dl(msg3_end + response_gap_sf, rar.temp_rnti, cr, cfg.cell);
  bool any_cr = false;
  for (std::size_t u = 0; u < cfg.ues.size(); ++u) {
    if (!accepted[u]) {
      continue;
    }
    const auto bits = receive_message(cr_msg, rar.temp_rnti, cfg.cell, cfg.snr_db, gains[u], rng);
    if (bits) {
      any_cr = true;
      std::size_t pos = 0;
      out.ue_won[u] = read_bits(*bits, pos, identity_bits) == cfg.ues[u].identity;
    }
  }
  out.steps.push_back({"contention_resolution", cr_msg.pdcch.absolute(), any_cr});
  if (!any_cr) {
    raise(error_code::timeout, "random access step 4: contention resolution not received");
  }
  out.resolved_identity = identity;
  out.success = std::find(out.ue_won.begin(), out.ue_won.end(), true) != out.ue_won.end();
  return out;
}

} // namespace nbiot
