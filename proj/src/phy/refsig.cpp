#include "nbiot/refsig.hpp"
#include "nbiot/coding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace nbiot {

namespace {

bool is_sync_subframe(timing_counters t)
{
  return t.subframe == 5 || (t.subframe == 9 && t.sfn % 2 == 0);
}

} // namespace

std::vector<re_position> nrs_positions(const cell_config& cfg, unsigned port)
{
  const unsigned v_shift = cfg.n_id_ncell % 6;
  std::vector<re_position> out;
  out.reserve(8);
  for (unsigned slot = 0; slot < 2; ++slot) {
    for (unsigned sym = 5; sym <= 6; ++sym) {
      const bool first = sym == 5;
      const unsigned v = (port == 0) == first ? 0 : 3;
      for (unsigned m = 0; m < 2; ++m) {
        out.push_back({6 * m + (v + v_shift) % 6, slot * 7 + sym});
      }
    }
  }
  return out;
}

cf_t nrs_value(const cell_config& cfg, unsigned subframe, re_position pos)
{
  const unsigned ns = 2 * subframe + pos.l / 7;
  const unsigned l = pos.l % 7;
  const uint32_t n_id = cfg.n_id_ncell;
  const uint32_t c_init = (1u << 10) * (7 * (ns + 1) + l + 1) * (2 * n_id + 1) + 2 * n_id + 1;
  // Two pilots per symbol, taken at m' = m + 109 of the full-bandwidth sequence.
  const unsigned m = pos.k / 6;
  const unsigned mp = m + 109;
  const uint64_t key = (uint64_t(c_init) << 1) | m;
  thread_local std::unordered_map<uint64_t, cf_t> cache;
  if (auto it = cache.find(key); it != cache.end()) {
    return it->second;
  }
  const auto c = gold_sequence(c_init, 2 * mp + 2);
  const double a = 1.0 / std::sqrt(2.0);
  const cf_t value{a * (1.0 - 2.0 * c[2 * mp]), a * (1.0 - 2.0 * c[2 * mp + 1])};
  cache.emplace(key, value);
  return value;
}

resource_grid map_nrs(resource_grid grid, const cell_config& cfg, timing_counters t)
{
  cfg.validate();
  if (is_sync_subframe(t)) {
    raise(error_code::collision, "NRS cannot share a subframe with NPSS/NSSS");
  }
  for (unsigned port = 0; port < cfg.n_ports; ++port) {
    for (auto pos : nrs_positions(cfg, port)) {
      grid.put(pos.k, pos.l, nrs_value(cfg, t.subframe, pos), re_tag::nrs);
    }
  }
  return grid;
}

channel_estimate estimate_channel(const resource_grid& grid, const cell_config& cfg, timing_counters t)
{
  if (grid.has_tags() && grid.count(re_tag::nrs) == 0) {
    raise(error_code::no_pilots, "grid carries no NRS");
  }
  const auto positions = nrs_positions(cfg, 0);
  bool any_energy = false;
  for (auto pos : positions) {
    any_energy = any_energy || grid.at(pos.k, pos.l) != cf_t{};
  }
  if (!any_energy) {
    raise(error_code::no_pilots, "all pilot cells are empty");
  }

  channel_estimate est;
  double residual = 0;
  for (unsigned slot = 0; slot < 2; ++slot) {
    // Least-squares line h(k) = a + b (k - mean_k) through the slot's four pilots.
    std::array<double, 4> ks{};
    std::array<cf_t, 4> hs{};
    unsigned n = 0;
    for (auto pos : positions) {
      if (pos.l / 7 != slot) {
        continue;
      }
      ks[n] = pos.k;
      hs[n] = grid.at(pos.k, pos.l) / nrs_value(cfg, t.subframe, pos);
      ++n;
    }
    double mean_k = 0;
    cf_t mean_h{};
    for (unsigned i = 0; i < 4; ++i) {
      mean_k += ks[i] / 4;
      mean_h += hs[i] / 4.0;
    }
    double sxx = 0;
    cf_t sxy{};
    for (unsigned i = 0; i < 4; ++i) {
      sxx += (ks[i] - mean_k) * (ks[i] - mean_k);
      sxy += (ks[i] - mean_k) * (hs[i] - mean_h);
    }
    const cf_t slope = sxy / sxx;
    for (unsigned i = 0; i < 4; ++i) {
      residual += std::norm(hs[i] - (mean_h + slope * (ks[i] - mean_k)));
    }
    for (unsigned l = 7 * slot; l < 7 * slot + 7; ++l) {
      for (unsigned k = 0; k < resource_grid::nof_subcarriers; ++k) {
        est.gains[l * resource_grid::nof_subcarriers + k] = mean_h + slope * (double(k) - mean_k);
      }
    }
  }
  // Four pilots minus two fitted parameters per slot.
  est.noise_var = residual / 4.0;
  double power = 0;
  for (auto g : est.gains) {
    power += std::norm(g);
  }
  power /= double(est.gains.size());
  est.snr_db = 10.0 * std::log10(power / std::max(est.noise_var, 1e-30));
  return est;
}

resource_grid equalize(const resource_grid& grid, const channel_estimate& est)
{
  resource_grid out;
  for (unsigned l = 0; l < resource_grid::nof_symbols; ++l) {
    for (unsigned k = 0; k < resource_grid::nof_subcarriers; ++k) {
      const cf_t h = est.gain(k, l);
      if (std::abs(h) < 1e-12) {
        raise(error_code::singular_gain, "channel gain below 1e-12");
      }
      out.set(k, l, grid.at(k, l) / h);
    }
  }
  return out;
}

unsigned ul_slot::dmrs_count() const
{
  return unsigned(std::count(dmrs.begin(), dmrs.end(), true));
}

std::vector<unsigned> dmrs_symbols(npusch_format format)
{
  if (format == npusch_format::f1_data) {
    return {3};
  }
  return {2, 3, 4};
}

cf_t dmrs_value(uint16_t n_id_ncell, unsigned slot_index, unsigned symbol, unsigned m)
{
  const uint32_t c_init = (uint32_t(n_id_ncell) << 9) | ((slot_index % 20) << 3) | (symbol & 7u);
  const auto c = gold_sequence(c_init, 2 * m + 2);
  const double a = 1.0 / std::sqrt(2.0);
  return {a * (1.0 - 2.0 * c[2 * m]), a * (1.0 - 2.0 * c[2 * m + 1])};
}

ul_slot map_dmrs(ul_slot slot,
                 npusch_format format,
                 std::span<const unsigned> subcarriers,
                 uint16_t n_id_ncell,
                 unsigned slot_index)
{
  if (subcarriers.empty()) {
    raise(error_code::size_mismatch, "DMRS needs a non-empty allocation");
  }
  for (unsigned l : dmrs_symbols(format)) {
    for (unsigned m = 0; m < subcarriers.size(); ++m) {
      const unsigned k = subcarriers[m];
      if (k >= 12) {
        raise(error_code::out_of_range, "subcarrier index outside 0..11");
      }
      slot.cells[l * 12 + k] = dmrs_value(n_id_ncell, slot_index, l, m);
      slot.dmrs[l * 12 + k] = true;
    }
  }
  return slot;
}

} // namespace nbiot
