#pragma once

#include "nbiot/grid.hpp"

#include <array>
#include <span>
#include <vector>

namespace nbiot {

struct re_position {
  unsigned k;
  unsigned l;
  bool operator==(const re_position&) const = default;
};

/// Per-cell channel gains of one subframe with the pilot-residual noise estimate.
struct channel_estimate {
  std::array<cf_t, resource_grid::nof_re> gains{};
  double noise_var = 0;
  double snr_db = 0;

  cf_t gain(unsigned k, unsigned l) const { return gains[l * resource_grid::nof_subcarriers + k]; }
};

/// NRS resource elements of one antenna port (0 or 1): 8 cells on symbols 5, 6, 12, 13.
std::vector<re_position> nrs_positions(const cell_config& cfg, unsigned port);

/// Pilot value at an NRS position; depends on cell identity, slot number and symbol.
cf_t nrs_value(const cell_config& cfg, unsigned subframe, re_position pos);

/// Adds NRS pilots for every configured port. Refuses NPSS / NSSS subframes and occupied cells.
resource_grid map_nrs(resource_grid grid, const cell_config& cfg, timing_counters t);

/// Least-squares pilot estimates, a linear fit across frequency per slot, held over the slot's symbols.
channel_estimate estimate_channel(const resource_grid& grid, const cell_config& cfg, timing_counters t);

/// Zero-forcing: per-cell division by the estimated gain.
resource_grid equalize(const resource_grid& grid, const channel_estimate& est);

/// Noise variance of an equalized cell.
inline double equalized_noise_var(const channel_estimate& est, unsigned k, unsigned l)
{
  return est.noise_var / std::norm(est.gain(k, l));
}

// --- uplink DMRS ------------------------------------------------------------

enum class npusch_format : uint8_t { f1_data = 1, f2_uci = 2 };

inline constexpr unsigned ul_symbols_per_slot = 7;

/// One SC-FDMA slot: 12 subcarriers x 7 symbols, with a DMRS occupancy mask.
struct ul_slot {
  std::array<cf_t, 12 * ul_symbols_per_slot> cells{};
  std::array<bool, 12 * ul_symbols_per_slot> dmrs{};

  cf_t at(unsigned k, unsigned l) const { return cells[l * 12 + k]; }
  bool is_dmrs(unsigned k, unsigned l) const { return dmrs[l * 12 + k]; }
  unsigned dmrs_count() const;
};

/// Symbols of a slot that carry DMRS: {3} for format 1, {2, 3, 4} for format 2.
std::vector<unsigned> dmrs_symbols(npusch_format format);

/// Unit-modulus DMRS value for subcarrier index m of the allocation.
cf_t dmrs_value(uint16_t n_id_ncell, unsigned slot_index, unsigned symbol, unsigned m);

/// Places DMRS on every allocated subcarrier of the format's DMRS symbols.
/// An empty allocation is a caller error and raises size_mismatch.
ul_slot map_dmrs(ul_slot slot,
                 npusch_format format,
                 std::span<const unsigned> subcarriers,
                 uint16_t n_id_ncell = 0,
                 unsigned slot_index = 0);

} // namespace nbiot
