#pragma once

#include "nbiot/coding.hpp"
#include "nbiot/grid.hpp"
#include "nbiot/refsig.hpp"

#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace nbiot {

/// First OFDM symbol available to NPBCH / NPDCCH / NPDSCH; symbols 0..2 stay empty.
inline constexpr unsigned first_data_symbol = 3;

/// Data cells of a downlink subframe in mapping order (frequency first), NRS of all ports excluded.
std::vector<re_position> data_positions(const cell_config& cfg);
/// 124 cells with one port, 116 with two.
unsigned data_re_per_subframe(const cell_config& cfg);

/// Subframes permanently used by NPBCH (0), NPSS (5) and NSSS (9 of even frames).
bool anchor_subframe(timing_counters t);
/// SIB1-NB occupies subframe 4 of even frames.
bool sib1_subframe(timing_counters t);
inline bool reserved_subframe(timing_counters t)
{
  return anchor_subframe(t) || sib1_subframe(t);
}

// --- NPBCH ------------------------------------------------------------------

struct mib {
  uint8_t sfn_msb = 0;    // 4 bits
  uint8_t hfn_lsb = 0;    // 2 bits
  uint8_t sib1_sched = 0; // 4 bits
  operation_mode op_mode = operation_mode::standalone;
  uint32_t spare = 0;     // 22 bits

  bool operator==(const mib&) const = default;
};

inline constexpr unsigned mib_payload_bits = 34;
inline constexpr unsigned npbch_nof_blocks = 8;
inline constexpr unsigned npbch_period_frames = 64;

bit_vector pack_mib(const mib& m);
/// Throws wrong_length unless exactly 34 bits are given.
mib unpack_mib(std::span<const uint8_t> bits);
/// MIB describing the frame at t.
mib make_mib(timing_counters t, const cell_config& cfg, uint8_t sib1_sched = 0);

/// Subframe-0 grid: block (sfn mod 64) / 8 of the coded MIB, plus NRS.
resource_grid npbch_encode(const mib& m, timing_counters t, const cell_config& cfg);

struct npbch_result {
  mib m;
  /// sfn mod 64 of the first grid handed to the decoder.
  unsigned sfn_mod64 = 0;
  unsigned grids_combined = 0;
};

/// Soft-combines consecutive subframe-0 grids (one per frame) and decodes the MIB.
/// first_sfn_mod8 is the frame parity known from the NSSS; the 8 block phases are tried.
/// Throws crc_fail when no phase passes the CRC.
npbch_result npbch_decode(std::span<const resource_grid> grids, const cell_config& cfg, unsigned first_sfn_mod8 = 0);

// --- DCI / NPDCCH -------------------------------------------------------------

/// Downlink assignment (format N1).
struct dl_grant {
  unsigned i_tbs = 0;
  unsigned i_sf = 0;
  unsigned sched_delay_sf = 4;
  /// 0 in unacknowledged mode; otherwise the gap before the NPUSCH ACK (>= 12).
  unsigned harq_ack_delay_sf = 0;
  uint16_t rnti = 0;

  unsigned tbs() const { return tbs_lookup(i_tbs, i_sf); }
  unsigned n_sf() const { return nof_subframes(i_sf); }
  bool acknowledged() const { return harq_ack_delay_sf > 0; }
  /// Throws invalid_config for delays or indices the DCI cannot carry.
  void validate() const;
  bool operator==(const dl_grant&) const = default;
};

/// Uplink grant (format N0).
struct ul_grant {
  unsigned i_tbs = 0;
  unsigned i_sf = 0;
  unsigned sched_delay_sf = 8;
  unsigned n_tones = 12;
  unsigned first_subcarrier = 0;
  uint16_t rnti = 0;

  unsigned tbs() const { return tbs_lookup(i_tbs, i_sf); }
  unsigned n_sf() const { return nof_subframes(i_sf); }
  void validate() const;
  bool operator==(const ul_grant&) const = default;
};

using dci = std::variant<dl_grant, ul_grant>;

inline constexpr unsigned dci_payload_bits = 23;
inline constexpr uint16_t si_rnti = 0xFFFF;

bit_vector pack_dci(const dci& d);
dci unpack_dci(std::span<const uint8_t> bits, uint16_t rnti);

/// Full-subframe NPDCCH carrying one DCI; CRC masked with the grant's RNTI.
resource_grid npdcch_encode(const dci& d, timing_counters t, const cell_config& cfg);

/// Decodes the single candidate; empty unless the RNTI-masked CRC passes.
std::optional<dci> npdcch_blind_decode(const resource_grid& rx,
                                       uint16_t rnti,
                                       const channel_estimate& est,
                                       timing_counters t,
                                       const cell_config& cfg);

// --- NPDSCH -------------------------------------------------------------------

/// Subframes of a downlink assignment: the first starts sched_delay_sf + 1 after the
/// NPDCCH subframe; reserved subframes are skipped.
std::vector<timing_counters> npdsch_subframes(timing_counters npdcch, unsigned sched_delay_sf, unsigned n_sf);

/// One grid per subframe. Throws tbs_mismatch, size_mismatch (subframe count),
/// collision (NPBCH / NPSS / NSSS subframe) or no_capacity (coded bits fewer than TBS + CRC,
/// which happens for the largest entries with two ports).
std::vector<resource_grid> npdsch_encode(const transport_block& tb,
                                         const dl_grant& grant,
                                         std::span<const timing_counters> subframes,
                                         const cell_config& cfg);

/// Throws crc_fail when the block does not check.
transport_block npdsch_decode(std::span<const resource_grid> rx,
                              std::span<const channel_estimate> est,
                              const dl_grant& grant,
                              std::span<const timing_counters> subframes,
                              const cell_config& cfg);

uint32_t npdsch_scrambling_seed(uint16_t rnti, timing_counters first, uint16_t n_id_ncell);

/// Soft bits of the listed cells after per-cell zero-forcing.
llr_vector demap_cells(const resource_grid& rx,
                       const channel_estimate& est,
                       std::span<const re_position> cells,
                       double noise_var);

} // namespace nbiot
