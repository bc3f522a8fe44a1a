#pragma once

#include "nbiot/common.hpp"

#include <optional>
#include <span>

namespace nbiot {

/// Payload bits with their declared transport block size.
struct transport_block {
  bit_vector bits;
  unsigned tbs_bits = 0;
};

// --- pseudo-random sequence -------------------------------------------------

/// Length-31 Gold sequence c(n) with the usual 1600-sample warm-up.
bit_vector gold_sequence(uint32_t c_init, std::size_t length);

// --- CRC --------------------------------------------------------------------

enum class crc_width : unsigned { crc16 = 16, crc24 = 24 };

/// Remainder of bits over the CRC-24A / CRC-16 generator, MSB first.
uint32_t crc_remainder(std::span<const uint8_t> bits, crc_width width);
bit_vector crc_attach(std::span<const uint8_t> bits, crc_width width);
bool crc_check(std::span<const uint8_t> bits_with_crc, crc_width width);

/// XORs mask into the last 16 bits of the CRC field (RNTI or port-count masking).
void crc_mask(std::span<uint8_t> bits_with_crc, uint16_t mask);

// --- tail-biting convolutional code ----------------------------------------

inline constexpr unsigned tbcc_constraint_length = 7;
inline constexpr unsigned tbcc_nof_states = 64;

/// Rate-1/3 TBCC (133, 171, 165 octal). Output is interleaved per input bit:
/// d0[0] d1[0] d2[0] d0[1] ... Throws too_short for fewer than 7 input bits.
bit_vector tbcc_encode(std::span<const uint8_t> bits);

/// Encoder state (last six input bits) the tail-biting encoder starts and ends in.
unsigned tbcc_initial_state(std::span<const uint8_t> bits);

struct tbcc_decode_result {
  bit_vector bits;
  unsigned start_state = 0;
  unsigned end_state = 0;
};

/// Wrap-around soft Viterbi decoder. LLR convention: positive means bit 0.
tbcc_decode_result tbcc_decode_detailed(std::span<const double> llrs, unsigned out_len);
bit_vector tbcc_decode(std::span<const double> llrs, unsigned out_len);

// --- rate matching ----------------------------------------------------------

/// Circular-buffer repetition/puncturing of an already ordered buffer.
bit_vector rate_match(std::span<const uint8_t> bits, std::size_t target_len);
/// Sums the LLRs of repeated positions; punctured positions stay at zero.
llr_vector rate_recover(std::span<const double> llrs, std::size_t source_len);

/// Convolutional-code rate matching: per-stream sub-block interleaving,
/// stream concatenation, then the circular buffer above.
bit_vector conv_rate_match(std::span<const uint8_t> coded, std::size_t target_len);
llr_vector conv_rate_recover(std::span<const double> llrs, std::size_t coded_len);

// --- scrambling -------------------------------------------------------------

bit_vector scramble(std::span<const uint8_t> bits, uint32_t seed);
/// LLR counterpart of scramble(): flips signs where the sequence is 1.
llr_vector scramble_llrs(std::span<const double> llrs, uint32_t seed);

// --- modulation -------------------------------------------------------------

/// Gray-mapped unit-energy QPSK: bit pair (b0, b1) -> ((1-2 b0) + j (1-2 b1)) / sqrt(2).
std::vector<cf_t> qpsk_map(std::span<const uint8_t> bits);
/// Exact AWGN LLRs for complex noise variance noise_var.
llr_vector qpsk_demap(std::span<const cf_t> symbols, double noise_var);
/// Same with a per-symbol noise variance (e.g. after zero-forcing).
llr_vector qpsk_demap(std::span<const cf_t> symbols, std::span<const double> noise_vars);

inline bit_vector hard_decision(std::span<const double> llrs)
{
  bit_vector out(llrs.size());
  for (std::size_t i = 0; i < llrs.size(); ++i) {
    out[i] = llrs[i] < 0 ? 1 : 0;
  }
  return out;
}

// --- transport block sizes --------------------------------------------------

inline constexpr unsigned max_i_tbs = 12;
inline constexpr unsigned max_i_sf = 7;
inline constexpr unsigned min_tbs_bits = 16;
inline constexpr unsigned max_tbs_bits = 680;

/// Number of subframes signalled by i_sf (0..7 -> 1,2,3,4,5,6,8,10).
unsigned nof_subframes(unsigned i_sf);
/// Inverse of nof_subframes(); empty for subframe counts with no index.
std::optional<unsigned> i_sf_for_subframes(unsigned n_sf);

/// True when (i_tbs, i_sf) is a supported entry (TBS <= 680).
bool tbs_supported(unsigned i_tbs, unsigned i_sf);
/// Throws out_of_range for indices outside the table or unsupported entries.
unsigned tbs_lookup(unsigned i_tbs, unsigned i_sf);

// --- bit helpers ------------------------------------------------------------

void append_bits(bit_vector& out, uint64_t value, unsigned width);
uint64_t read_bits(std::span<const uint8_t> bits, std::size_t& pos, unsigned width);
bit_vector bytes_to_bits(std::span<const uint8_t> bytes);
std::vector<uint8_t> bits_to_bytes(std::span<const uint8_t> bits);

} // namespace nbiot
