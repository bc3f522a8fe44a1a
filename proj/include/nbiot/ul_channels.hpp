#pragma once

#include "nbiot/coding.hpp"
#include "nbiot/grid.hpp"
#include "nbiot/refsig.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nbiot {

// --- NPRACH -------------------------------------------------------------------

/// 3.75 kHz preamble numerology at 1.92 Msps.
inline constexpr unsigned nprach_symbol_len = 512;
inline constexpr unsigned nprach_symbols_per_group = 5;
inline constexpr unsigned nprach_groups_per_preamble = 4;
inline constexpr double nprach_tone_spacing_hz = 3750.0;
/// Preamble tones in the 180 kHz carrier.
inline constexpr unsigned nprach_carrier_tones = 48;

constexpr unsigned nprach_cp_len(nprach_format f)
{
  return f == nprach_format::f0_1ms4 ? 128 : 512;
}

constexpr unsigned nprach_group_len(nprach_format f)
{
  return nprach_cp_len(f) + nprach_symbols_per_group * nprach_symbol_len;
}

struct nprach_config {
  nprach_format format = nprach_format::f0_1ms4;
  unsigned n_rep = 1;
  /// Initializer in [0, n_subcarriers); selects the 12-tone block and the first tone within it.
  unsigned n_init = 0;
  unsigned base_subcarrier = 0;
  /// Tones of the NPRACH region (12, 24, 36 or 48).
  unsigned n_subcarriers = 48;
  /// Cell identity seeding the inter-preamble hopping sequence.
  uint16_t n_id_ncell = 0;

  void validate() const;
  std::size_t nof_samples() const;
};

/// Absolute tone (0..47) of every symbol group, n_rep * 4 entries.
std::vector<unsigned> nprach_hopping(const nprach_config& cfg);

/// Baseband preamble. Per-sample power equals one 15 kHz resource element of unit energy.
sample_buffer nprach_generate(const nprach_config& cfg);

struct nprach_detection {
  unsigned n_init = 0;
  unsigned timing_advance_samples = 0;
  /// Detection statistic divided by the threshold; above 1 means detected.
  double metric = 0;
};

/// Searches every initializer and every delay up to the CP. cfg.n_init is ignored.
/// samples start at the nominal preamble start and cover cfg.nof_samples().
std::optional<nprach_detection> nprach_detect(std::span<const cf_t> samples, const nprach_config& cfg);

// --- phase rotation -------------------------------------------------------------

enum class ul_modulation : uint8_t { bpsk, qpsk };

/// Multiplies symbol k by exp(j rho (first_index + k)), rho = pi/2 (BPSK) or pi/4 (QPSK).
std::vector<cf_t> apply_ul_phase_rotation(std::span<const cf_t> symbols, ul_modulation mod, uint64_t first_index = 0);
std::vector<cf_t> remove_ul_phase_rotation(std::span<const cf_t> symbols, ul_modulation mod, uint64_t first_index = 0);

// --- NPUSCH -------------------------------------------------------------------

struct npusch_allocation {
  npusch_format format = npusch_format::f1_data;
  unsigned first_subcarrier = 0;
  unsigned n_tones = 12;
  /// Format 1 only: transport block size indices.
  unsigned i_tbs = 0;
  unsigned i_sf = 0;
  uint16_t rnti = 0;
  /// First subframe of the transmission (scrambling and DMRS slot numbering).
  timing_counters start{};

  void validate() const;
  /// Format 1: 2 slots per subframe-equivalent, stretched by 12 / n_tones. Format 2: 2 slots.
  unsigned n_slots() const;
  unsigned n_subframes() const { return n_slots() / 2; }
  /// Format 1 payload size.
  unsigned tbs() const { return tbs_lookup(i_tbs, i_sf); }
  std::vector<unsigned> subcarriers() const;
};

/// Coded bits a format-1 allocation carries (288 per subframe at 12 tones).
unsigned npusch_capacity_bits(const npusch_allocation& alloc);

/// Format 1: payload of tbs() bits. Format 2: exactly one ACK bit. Throws size_mismatch otherwise.
sample_buffer npusch_encode(std::span<const uint8_t> payload, const npusch_allocation& alloc, const cell_config& cfg);

/// Throws crc_fail on a failed CRC (format 1) or a missing ACK transmission (format 2).
bit_vector npusch_decode(std::span<const cf_t> samples, const npusch_allocation& alloc, const cell_config& cfg);

// --- random access --------------------------------------------------------------

inline constexpr unsigned rar_tbs = 56;
inline constexpr unsigned msg3_tbs = 88;
inline constexpr unsigned contention_resolution_tbs = 56;

struct ra_ue {
  unsigned n_init = 0;
  /// 40-bit UE identity carried in Msg3.
  uint64_t identity = 0;
  /// Transmit gain relative to the reference level, dB.
  double power_db = 0;
  unsigned delay_samples = 0;
};

struct ra_config {
  cell_config cell{};
  nprach_config prach{};
  std::vector<ra_ue> ues{ra_ue{}};
  double snr_db = 20;
  uint64_t seed = 1;
  /// Fault injection: the UEs stay silent on NPRACH.
  bool suppress_nprach = false;
  timing_counters start{0, 0, 1};
};

struct ra_step {
  std::string name;
  uint64_t subframe = 0;
  bool ok = false;
};

struct ra_outcome {
  bool success = false;
  std::vector<ra_step> steps;
  std::optional<unsigned> detected_n_init;
  uint16_t temp_rnti = 0;
  /// Identity echoed in contention resolution.
  std::optional<uint64_t> resolved_identity;
  /// Per UE: whether contention resolution addressed it.
  std::vector<bool> ue_won;
};

/// Preamble, RAR, Msg3 and contention resolution over simulated sample-level links.
/// Throws timeout naming the first unanswered step.
ra_outcome random_access_exchange(const ra_config& cfg);

} // namespace nbiot
