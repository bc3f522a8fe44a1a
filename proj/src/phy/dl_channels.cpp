#include "nbiot/dl_channels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nbiot {

namespace {

constexpr double noise_floor = 1e-9;

std::vector<cf_t> encode_codeword(std::span<const uint8_t> payload,
                                  crc_width width,
                                  uint16_t mask,
                                  std::size_t e_bits,
                                  uint32_t seed)
{
  auto with_crc = crc_attach(payload, width);
  crc_mask(with_crc, mask);
  const auto coded = tbcc_encode(with_crc);
  const auto matched = conv_rate_match(coded, e_bits);
  return qpsk_map(scramble(matched, seed));
}

/// Inverse of encode_codeword; empty when the masked CRC does not check.
std::optional<bit_vector>
decode_codeword(std::span<const double> llrs, unsigned payload_len, crc_width width, uint16_t mask, uint32_t seed)
{
  const unsigned k = payload_len + unsigned(width);
  const auto descrambled = scramble_llrs(llrs, seed);
  const auto soft = conv_rate_recover(descrambled, 3 * std::size_t(k));
  auto bits = tbcc_decode(soft, k);
  crc_mask(bits, mask);
  if (!crc_check(bits, width)) {
    return std::nullopt;
  }
  bits.resize(payload_len);
  return bits;
}

resource_grid map_data(const resource_grid& base,
                       const std::vector<re_position>& cells,
                       std::span<const cf_t> symbols,
                       re_tag tag)
{
  resource_grid g = base;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    g.put(cells[i].k, cells[i].l, symbols[i], tag);
  }
  return g;
}

uint16_t port_mask(const cell_config& cfg)
{
  return cfg.n_ports == 2 ? 0xFFFF : 0x0000;
}

std::size_t npbch_block_bits(const cell_config& cfg)
{
  return 2 * std::size_t(data_re_per_subframe(cfg));
}

double pooled_noise(std::span<const channel_estimate> est)
{
  double acc = 0;
  for (const auto& e : est) {
    acc += e.noise_var;
  }
  return std::max(acc / double(std::max<std::size_t>(est.size(), 1)), noise_floor);
}

unsigned tones_code(unsigned n_tones)
{
  switch (n_tones) {
    case 12:
      return 0;
    case 6:
      return 1;
    case 3:
      return 2;
    default:
      raise(error_code::invalid_config, "n_tones must be 3, 6 or 12");
  }
}

} // namespace

std::vector<re_position> data_positions(const cell_config& cfg)
{
  std::array<bool, resource_grid::nof_re> pilot{};
  for (unsigned p = 0; p < cfg.n_ports; ++p) {
    for (auto pos : nrs_positions(cfg, p)) {
      pilot[pos.l * resource_grid::nof_subcarriers + pos.k] = true;
    }
  }
  std::vector<re_position> out;
  for (unsigned l = first_data_symbol; l < resource_grid::nof_symbols; ++l) {
    for (unsigned k = 0; k < resource_grid::nof_subcarriers; ++k) {
      if (!pilot[l * resource_grid::nof_subcarriers + k]) {
        out.push_back({k, l});
      }
    }
  }
  return out;
}

unsigned data_re_per_subframe(const cell_config& cfg)
{
  return (resource_grid::nof_symbols - first_data_symbol) * resource_grid::nof_subcarriers - 8u * cfg.n_ports;
}

bool anchor_subframe(timing_counters t)
{
  return t.subframe == 0 || t.subframe == 5 || (t.subframe == 9 && t.sfn % 2 == 0);
}

bool sib1_subframe(timing_counters t)
{
  return t.subframe == 4 && t.sfn % 2 == 0;
}

llr_vector demap_cells(const resource_grid& rx,
                       const channel_estimate& est,
                       std::span<const re_position> cells,
                       double noise_var)
{
  std::vector<cf_t> y(cells.size());
  std::vector<double> var(cells.size());
  const double nv = std::max(noise_var, noise_floor);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const cf_t h = est.gain(cells[i].k, cells[i].l);
    const double g2 = std::max(std::norm(h), 1e-24);
    y[i] = rx.at(cells[i].k, cells[i].l) / h;
    var[i] = nv / g2;
  }
  return qpsk_demap(y, var);
}

// --- NPBCH ------------------------------------------------------------------

bit_vector pack_mib(const mib& m)
{
  bit_vector bits;
  bits.reserve(mib_payload_bits);
  append_bits(bits, m.sfn_msb & 0xFu, 4);
  append_bits(bits, m.hfn_lsb & 0x3u, 2);
  append_bits(bits, m.sib1_sched & 0xFu, 4);
  append_bits(bits, uint8_t(m.op_mode) & 0x3u, 2);
  append_bits(bits, m.spare & 0x3FFFFFu, 22);
  return bits;
}

mib unpack_mib(std::span<const uint8_t> bits)
{
  if (bits.size() != mib_payload_bits) {
    raise(error_code::wrong_length, "MIB payload is 34 bits");
  }
  std::size_t pos = 0;
  mib m;
  m.sfn_msb = uint8_t(read_bits(bits, pos, 4));
  m.hfn_lsb = uint8_t(read_bits(bits, pos, 2));
  m.sib1_sched = uint8_t(read_bits(bits, pos, 4));
  m.op_mode = operation_mode(read_bits(bits, pos, 2));
  m.spare = uint32_t(read_bits(bits, pos, 22));
  return m;
}

mib make_mib(timing_counters t, const cell_config& cfg, uint8_t sib1_sched)
{
  mib m;
  m.sfn_msb = uint8_t(t.sfn >> 6);
  m.hfn_lsb = uint8_t(t.hfn & 3u);
  m.sib1_sched = uint8_t(sib1_sched & 0xFu);
  m.op_mode = cfg.op_mode;
  return m;
}

resource_grid npbch_encode(const mib& m, timing_counters t, const cell_config& cfg)
{
  cfg.validate();
  if (t.subframe != 0) {
    raise(error_code::wrong_subframe, "NPBCH is sent in subframe 0");
  }
  const std::size_t block = npbch_block_bits(cfg);
  const auto symbols =
      encode_codeword(pack_mib(m), crc_width::crc16, port_mask(cfg), npbch_nof_blocks * block, cfg.n_id_ncell);
  const unsigned b = (t.sfn % npbch_period_frames) / 8;
  const std::size_t n_sym = block / 2;
  return map_data(map_nrs({}, cfg, t), data_positions(cfg), std::span(symbols).subspan(b * n_sym, n_sym),
                  re_tag::npbch);
}

npbch_result npbch_decode(std::span<const resource_grid> grids, const cell_config& cfg, unsigned first_sfn_mod8)
{
  cfg.validate();
  if (grids.empty()) {
    raise(error_code::empty_buffer, "no NPBCH grids to decode");
  }
  const auto cells = data_positions(cfg);
  const std::size_t block = npbch_block_bits(cfg);
  const std::size_t e_bits = npbch_nof_blocks * block;

  std::vector<channel_estimate> est;
  est.reserve(grids.size());
  for (const auto& g : grids) {
    est.push_back(estimate_channel(g, cfg, {0, 0, 0}));
  }
  const double nv = pooled_noise(est);
  std::vector<llr_vector> llrs;
  llrs.reserve(grids.size());
  for (std::size_t i = 0; i < grids.size(); ++i) {
    llrs.push_back(demap_cells(grids[i], est[i], cells, nv));
  }

  for (unsigned p = 0; p < npbch_nof_blocks; ++p) {
    const unsigned o = 8 * p + first_sfn_mod8 % 8;
    const std::size_t n_periods = (o + grids.size() + npbch_period_frames - 1) / npbch_period_frames;
    std::vector<llr_vector> soft(n_periods, llr_vector(e_bits, 0.0));
    std::vector<unsigned> used(n_periods, 0);
    for (std::size_t i = 0; i < grids.size(); ++i) {
      const std::size_t frame = o + i;
      const std::size_t period = frame / npbch_period_frames;
      const std::size_t b = (frame % npbch_period_frames) / 8;
      for (std::size_t j = 0; j < block; ++j) {
        soft[period][b * block + j] += llrs[i][j];
      }
      ++used[period];
    }
    std::vector<std::size_t> order(n_periods);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return used[a] > used[b]; });
    for (std::size_t period : order) {
      auto bits =
          decode_codeword(soft[period], mib_payload_bits, crc_width::crc16, port_mask(cfg), cfg.n_id_ncell);
      if (!bits) {
        continue;
      }
      npbch_result r;
      r.m = unpack_mib(*bits);
      // Report the MIB of the period holding the first grid.
      for (std::size_t k = 0; k < period; ++k) {
        if (r.m.sfn_msb == 0) {
          r.m.hfn_lsb = uint8_t((r.m.hfn_lsb + 3) % 4);
        }
        r.m.sfn_msb = uint8_t((r.m.sfn_msb + 15) % 16);
      }
      r.sfn_mod64 = o;
      r.grids_combined = used[period];
      return r;
    }
  }
  raise(error_code::crc_fail, "no NPBCH phase passed the CRC");
}

// --- DCI / NPDCCH -------------------------------------------------------------

void dl_grant::validate() const
{
  if (!tbs_supported(i_tbs, i_sf)) {
    raise(error_code::invalid_config, "unsupported (i_tbs, i_sf)");
  }
  if (sched_delay_sf < 4 || sched_delay_sf > 63) {
    raise(error_code::invalid_config, "scheduling delay must be in [4, 63]");
  }
  if (harq_ack_delay_sf != 0 && (harq_ack_delay_sf < 12 || harq_ack_delay_sf > 63)) {
    raise(error_code::invalid_config, "HARQ-ACK delay must be 0 or in [12, 63]");
  }
}

void ul_grant::validate() const
{
  if (!tbs_supported(i_tbs, i_sf)) {
    raise(error_code::invalid_config, "unsupported (i_tbs, i_sf)");
  }
  if (sched_delay_sf > 63) {
    raise(error_code::invalid_config, "scheduling delay must be below 64");
  }
  tones_code(n_tones);
  if (first_subcarrier % n_tones != 0 || first_subcarrier + n_tones > 12) {
    raise(error_code::invalid_config, "tone allocation must be aligned and inside the carrier");
  }
}

bit_vector pack_dci(const dci& d)
{
  bit_vector bits;
  bits.reserve(dci_payload_bits);
  if (const auto* dl = std::get_if<dl_grant>(&d)) {
    dl->validate();
    append_bits(bits, 1, 1);
    append_bits(bits, dl->i_tbs, 4);
    append_bits(bits, dl->i_sf, 3);
    append_bits(bits, dl->sched_delay_sf, 6);
    append_bits(bits, dl->harq_ack_delay_sf, 6);
  } else {
    const auto& ul = std::get<ul_grant>(d);
    ul.validate();
    append_bits(bits, 0, 1);
    append_bits(bits, ul.i_tbs, 4);
    append_bits(bits, ul.i_sf, 3);
    append_bits(bits, ul.sched_delay_sf, 6);
    append_bits(bits, tones_code(ul.n_tones), 2);
    append_bits(bits, ul.first_subcarrier, 4);
  }
  bits.resize(dci_payload_bits, 0);
  return bits;
}

dci unpack_dci(std::span<const uint8_t> bits, uint16_t rnti)
{
  if (bits.size() != dci_payload_bits) {
    raise(error_code::wrong_length, "DCI payload is 23 bits");
  }
  std::size_t pos = 0;
  if (read_bits(bits, pos, 1) == 1) {
    dl_grant g;
    g.i_tbs = unsigned(read_bits(bits, pos, 4));
    g.i_sf = unsigned(read_bits(bits, pos, 3));
    g.sched_delay_sf = unsigned(read_bits(bits, pos, 6));
    g.harq_ack_delay_sf = unsigned(read_bits(bits, pos, 6));
    g.rnti = rnti;
    g.validate();
    return g;
  }
  ul_grant g;
  g.i_tbs = unsigned(read_bits(bits, pos, 4));
  g.i_sf = unsigned(read_bits(bits, pos, 3));
  g.sched_delay_sf = unsigned(read_bits(bits, pos, 6));
  static constexpr unsigned tones[4] = {12, 6, 3, 0};
  g.n_tones = tones[read_bits(bits, pos, 2)];
  g.first_subcarrier = unsigned(read_bits(bits, pos, 4));
  g.rnti = rnti;
  g.validate();
  return g;
}

namespace {

uint16_t dci_rnti(const dci& d)
{
  return std::visit([](const auto& g) { return g.rnti; }, d);
}

uint32_t npdcch_seed(timing_counters t, const cell_config& cfg)
{
  return (uint32_t(t.subframe) << 9) + cfg.n_id_ncell;
}

} // namespace

resource_grid npdcch_encode(const dci& d, timing_counters t, const cell_config& cfg)
{
  cfg.validate();
  if (anchor_subframe(t)) {
    raise(error_code::collision, "NPDCCH cannot use an anchor subframe");
  }
  const auto symbols = encode_codeword(pack_dci(d), crc_width::crc24, dci_rnti(d), 2 * data_re_per_subframe(cfg),
                                       npdcch_seed(t, cfg));
  return map_data(map_nrs({}, cfg, t), data_positions(cfg), symbols, re_tag::npdcch);
}

std::optional<dci> npdcch_blind_decode(const resource_grid& rx,
                                       uint16_t rnti,
                                       const channel_estimate& est,
                                       timing_counters t,
                                       const cell_config& cfg)
{
  const auto cells = data_positions(cfg);
  const auto llrs = demap_cells(rx, est, cells, est.noise_var);
  const auto bits = decode_codeword(llrs, dci_payload_bits, crc_width::crc24, rnti, npdcch_seed(t, cfg));
  if (!bits) {
    return std::nullopt;
  }
  try {
    return unpack_dci(*bits, rnti);
  } catch (const error&) {
    return std::nullopt;
  }
}

// --- NPDSCH -------------------------------------------------------------------

std::vector<timing_counters> npdsch_subframes(timing_counters npdcch, unsigned sched_delay_sf, unsigned n_sf)
{
  std::vector<timing_counters> out;
  out.reserve(n_sf);
  timing_counters t = advance(npdcch, sched_delay_sf + 1);
  while (out.size() < n_sf) {
    if (!reserved_subframe(t)) {
      out.push_back(t);
    }
    t = advance(t, 1);
  }
  return out;
}

uint32_t npdsch_scrambling_seed(uint16_t rnti, timing_counters first, uint16_t n_id_ncell)
{
  return (uint32_t(rnti) << 14) + (uint32_t(first.sfn % 2) << 13) + (uint32_t(first.subframe) << 9) + n_id_ncell;
}

std::vector<resource_grid> npdsch_encode(const transport_block& tb,
                                         const dl_grant& grant,
                                         std::span<const timing_counters> subframes,
                                         const cell_config& cfg)
{
  cfg.validate();
  grant.validate();
  if (tb.tbs_bits != grant.tbs() || tb.bits.size() != tb.tbs_bits) {
    raise(error_code::tbs_mismatch, "transport block does not match the granted TBS");
  }
  if (subframes.size() != grant.n_sf()) {
    raise(error_code::size_mismatch, "one timing entry per NPDSCH subframe expected");
  }
  for (auto t : subframes) {
    if (anchor_subframe(t)) {
      raise(error_code::collision, "NPDSCH cannot use an anchor subframe");
    }
  }
  const unsigned re = data_re_per_subframe(cfg);
  if (2 * std::size_t(re) * subframes.size() < std::size_t(tb.tbs_bits) + 24) {
    raise(error_code::no_capacity, "coded bits cannot carry the transport block and its CRC");
  }
  const auto symbols = encode_codeword(tb.bits, crc_width::crc24, 0, 2 * std::size_t(re) * subframes.size(),
                                       npdsch_scrambling_seed(grant.rnti, subframes[0], cfg.n_id_ncell));
  const auto cells = data_positions(cfg);
  std::vector<resource_grid> out;
  out.reserve(subframes.size());
  for (std::size_t i = 0; i < subframes.size(); ++i) {
    out.push_back(map_data(map_nrs({}, cfg, subframes[i]), cells, std::span(symbols).subspan(i * re, re),
                           re_tag::npdsch));
  }
  return out;
}

transport_block npdsch_decode(std::span<const resource_grid> rx,
                              std::span<const channel_estimate> est,
                              const dl_grant& grant,
                              std::span<const timing_counters> subframes,
                              const cell_config& cfg)
{
  grant.validate();
  if (rx.size() != grant.n_sf() || est.size() != rx.size() || subframes.size() != rx.size()) {
    raise(error_code::size_mismatch, "one grid, estimate and timing entry per NPDSCH subframe expected");
  }
  const auto cells = data_positions(cfg);
  const double nv = pooled_noise(est);
  llr_vector llrs;
  llrs.reserve(2 * cells.size() * rx.size());
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const auto part = demap_cells(rx[i], est[i], cells, nv);
    llrs.insert(llrs.end(), part.begin(), part.end());
  }
  const unsigned tbs = grant.tbs();
  auto bits = decode_codeword(llrs, tbs, crc_width::crc24, 0,
                              npdsch_scrambling_seed(grant.rnti, subframes[0], cfg.n_id_ncell));
  if (!bits) {
    raise(error_code::crc_fail, "NPDSCH CRC check failed");
  }
  return {std::move(*bits), tbs};
}

} // namespace nbiot
