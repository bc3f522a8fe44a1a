#pragma once

#include "nbiot/common.hpp"

#include <array>
#include <span>

namespace nbiot {

enum class operation_mode : uint8_t { standalone = 0, inband = 1, guardband = 2 };
enum class nprach_format : uint8_t { f0_1ms4 = 0, f1_1ms6 = 1 };

const char* to_string(operation_mode mode);

struct cell_config {
  uint16_t n_id_ncell = 0;
  operation_mode op_mode = operation_mode::standalone;
  uint8_t n_ports = 1;
  nprach_format prach_format = nprach_format::f0_1ms4;

  /// Throws invalid_config when the identity or port count is out of range.
  void validate() const;
};

/// Hyperframe / system frame / subframe counters.
struct timing_counters {
  uint16_t hfn = 0;
  uint16_t sfn = 0;
  uint8_t subframe = 0;

  static constexpr uint64_t subframes_per_hfn = 1024ULL * 10;
  static constexpr uint64_t subframes_per_cycle = 1024ULL * subframes_per_hfn;

  /// Subframe count since (hfn 0, sfn 0, subframe 0), modulo the full hyperframe cycle.
  uint64_t absolute() const { return (uint64_t(hfn) * 1024 + sfn) * 10 + subframe; }
  static timing_counters from_absolute(uint64_t abs_sf);

  bool operator==(const timing_counters&) const = default;
};

timing_counters advance(timing_counters t, uint64_t n_subframes);

enum class re_tag : uint8_t { empty = 0, npss, nsss, nrs, npbch, npdcch, npdsch };

/// One subframe of the 12 x 14 time-frequency grid. Writes through put() are
/// tagged and refuse to overwrite an occupied cell.
class resource_grid
{
public:
  static constexpr unsigned nof_subcarriers = 12;
  static constexpr unsigned nof_symbols = 14;
  static constexpr unsigned nof_re = nof_subcarriers * nof_symbols;

  cf_t at(unsigned k, unsigned l) const { return cells_[index(k, l)]; }
  re_tag tag(unsigned k, unsigned l) const { return tags_[index(k, l)]; }

  /// Tagged write; throws collision if the cell already carries a channel.
  void put(unsigned k, unsigned l, cf_t value, re_tag tag);
  /// Untagged write, used for received grids.
  void set(unsigned k, unsigned l, cf_t value) { cells_[index(k, l)] = value; }

  unsigned count(re_tag tag) const;
  bool has_tags() const;

  /// Merges all tagged cells of other into this grid; throws collision on overlap.
  void overlay(const resource_grid& other);

  std::span<const cf_t, nof_re> cells() const { return cells_; }

private:
  static unsigned index(unsigned k, unsigned l) { return l * nof_subcarriers + k; }

  std::array<cf_t, nof_re> cells_{};
  std::array<re_tag, nof_re> tags_{};
};

/// Cyclic prefix length of symbol l (0..13) at 1.92 Msps, normal CP.
constexpr unsigned cp_length(unsigned l)
{
  return (l % 7 == 0) ? 10 : 9;
}

/// Sample offset of the start (including CP) of symbol l within a subframe.
constexpr unsigned symbol_start(unsigned l)
{
  unsigned slot = l / 7;
  unsigned in_slot = l % 7;
  unsigned offset = slot * samples_per_slot;
  if (in_slot > 0) {
    offset += 10 + fft_size + (in_slot - 1) * (9 + fft_size);
  }
  return offset;
}

/// Transform bin carrying subcarrier k; the 12 subcarriers sit symmetrically around DC.
constexpr unsigned subcarrier_bin(unsigned k)
{
  return (k + fft_size - 6) % fft_size;
}

sample_buffer ofdm_modulate(const resource_grid& grid);

/// Inverse of ofdm_modulate. Throws wrong_length unless exactly one subframe is given.
resource_grid ofdm_demodulate(std::span<const cf_t> samples);

} // namespace nbiot
