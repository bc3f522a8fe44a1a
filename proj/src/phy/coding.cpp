#include "nbiot/coding.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace nbiot {

// ---------------------------------------------------------------------------
// Gold sequence
// ---------------------------------------------------------------------------

bit_vector gold_sequence(uint32_t c_init, std::size_t length)
{
  constexpr unsigned nc = 1600;
  uint32_t x1 = 1;
  uint32_t x2 = c_init & 0x7fffffffu;
  auto step = [&]() {
    uint32_t f1 = ((x1 >> 3) ^ x1) & 1u;
    uint32_t f2 = ((x2 >> 3) ^ (x2 >> 2) ^ (x2 >> 1) ^ x2) & 1u;
    x1 = (x1 >> 1) | (f1 << 30);
    x2 = (x2 >> 1) | (f2 << 30);
  };
  for (unsigned n = 0; n < nc; ++n) {
    step();
  }
  bit_vector c(length);
  for (std::size_t n = 0; n < length; ++n) {
    c[n] = uint8_t((x1 ^ x2) & 1u);
    step();
  }
  return c;
}

// ---------------------------------------------------------------------------
// CRC
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t crc24a_poly = 0x864CFB;
constexpr uint32_t crc16_poly = 0x1021;

} // namespace

uint32_t crc_remainder(std::span<const uint8_t> bits, crc_width width)
{
  const unsigned w = unsigned(width);
  const uint32_t poly = width == crc_width::crc24 ? crc24a_poly : crc16_poly;
  const uint32_t top = 1u << (w - 1);
  const uint32_t mask = (w == 32) ? 0xffffffffu : ((1u << w) - 1);
  uint32_t reg = 0;
  for (uint8_t b : bits) {
    bool feedback = ((reg & top) != 0) != (b != 0);
    reg = (reg << 1) & mask;
    if (feedback) {
      reg ^= poly;
    }
  }
  return reg;
}

bit_vector crc_attach(std::span<const uint8_t> bits, crc_width width)
{
  bit_vector out(bits.begin(), bits.end());
  append_bits(out, crc_remainder(bits, width), unsigned(width));
  return out;
}

bool crc_check(std::span<const uint8_t> bits_with_crc, crc_width width)
{
  const unsigned w = unsigned(width);
  if (bits_with_crc.size() < w) {
    return false;
  }
  auto payload = bits_with_crc.first(bits_with_crc.size() - w);
  std::size_t pos = payload.size();
  uint32_t received = uint32_t(read_bits(bits_with_crc, pos, w));
  return crc_remainder(payload, width) == received;
}

void crc_mask(std::span<uint8_t> bits_with_crc, uint16_t mask)
{
  const std::size_t n = bits_with_crc.size();
  for (unsigned i = 0; i < 16 && i < n; ++i) {
    bits_with_crc[n - 16 + i] ^= uint8_t((mask >> (15 - i)) & 1u);
  }
}

// ---------------------------------------------------------------------------
// Tail-biting convolutional code
// ---------------------------------------------------------------------------

namespace {

// Generator taps; bit 6 multiplies the current input, bit 0 the oldest.
constexpr std::array<unsigned, 3> tbcc_generators = {0133, 0171, 0165};

constexpr unsigned parity(unsigned v)
{
  v ^= v >> 4;
  v ^= v >> 2;
  v ^= v >> 1;
  return v & 1u;
}

// Output triple (bit i = generator i) for a 7-bit register window.
constexpr std::array<uint8_t, 128> make_output_table()
{
  std::array<uint8_t, 128> t{};
  for (unsigned w = 0; w < 128; ++w) {
    unsigned o = 0;
    for (unsigned g = 0; g < 3; ++g) {
      o |= parity(w & tbcc_generators[g]) << g;
    }
    t[w] = uint8_t(o);
  }
  return t;
}

constexpr auto tbcc_outputs = make_output_table();

} // namespace

unsigned tbcc_initial_state(std::span<const uint8_t> bits)
{
  const std::size_t k = bits.size();
  unsigned state = 0;
  // State bit 5 holds the most recent input, bit 0 the oldest.
  for (unsigned i = 0; i < 6; ++i) {
    state |= unsigned(bits[k - 1 - i] & 1u) << (5 - i);
  }
  return state;
}

bit_vector tbcc_encode(std::span<const uint8_t> bits)
{
  if (bits.size() < tbcc_constraint_length) {
    raise(error_code::too_short, "TBCC input needs at least 7 bits");
  }
  bit_vector out(3 * bits.size());
  unsigned state = tbcc_initial_state(bits);
  for (std::size_t k = 0; k < bits.size(); ++k) {
    const unsigned window = (unsigned(bits[k] & 1u) << 6) | state;
    const unsigned o = tbcc_outputs[window];
    out[3 * k + 0] = uint8_t(o & 1u);
    out[3 * k + 1] = uint8_t((o >> 1) & 1u);
    out[3 * k + 2] = uint8_t((o >> 2) & 1u);
    state = window >> 1;
  }
  return out;
}

tbcc_decode_result tbcc_decode_detailed(std::span<const double> llrs, unsigned out_len)
{
  if (llrs.size() != 3 * std::size_t(out_len)) {
    raise(error_code::wrong_length, "TBCC decoder expects 3 x out_len LLRs");
  }
  if (out_len < tbcc_constraint_length) {
    raise(error_code::too_short, "TBCC block needs at least 7 bits");
  }

  constexpr unsigned ns = tbcc_nof_states;
  std::array<double, ns> metric{};
  std::array<double, ns> next{};
  std::vector<uint64_t> decisions(out_len);

  auto run_pass = [&](bool record) {
    for (unsigned k = 0; k < out_len; ++k) {
      // Correlation metric for each of the 8 possible output triples.
      std::array<double, 8> branch{};
      const double l0 = llrs[3 * k];
      const double l1 = llrs[3 * k + 1];
      const double l2 = llrs[3 * k + 2];
      for (unsigned o = 0; o < 8; ++o) {
        branch[o] = ((o & 1u) ? -l0 : l0) + ((o & 2u) ? -l1 : l1) + ((o & 4u) ? -l2 : l2);
      }
      uint64_t dec = 0;
      for (unsigned n = 0; n < ns; ++n) {
        // Predecessors of n differ only in the oldest register bit.
        const unsigned input = n >> 5;
        const unsigned p0 = (n & 31u) << 1;
        const unsigned p1 = p0 | 1u;
        const double m0 = metric[p0] + branch[tbcc_outputs[(input << 6) | p0]];
        const double m1 = metric[p1] + branch[tbcc_outputs[(input << 6) | p1]];
        if (m1 > m0) {
          next[n] = m1;
          dec |= uint64_t(1) << n;
        } else {
          next[n] = m0;
        }
      }
      const double norm = *std::max_element(next.begin(), next.end());
      for (unsigned n = 0; n < ns; ++n) {
        metric[n] = next[n] - norm;
      }
      if (record) {
        decisions[k] = dec;
      }
    }
  };

  // Two circular passes: the first only primes the state metrics.
  run_pass(false);
  run_pass(true);

  auto traceback = [&](unsigned end_state, bit_vector& bits) {
    unsigned state = end_state;
    for (unsigned k = out_len; k-- > 0;) {
      bits[k] = uint8_t(state >> 5);
      const unsigned chosen = unsigned((decisions[k] >> state) & 1u);
      state = ((state & 31u) << 1) | chosen;
    }
    return state;
  };

  std::array<unsigned, ns> order{};
  for (unsigned i = 0; i < ns; ++i) {
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(), [&](unsigned a, unsigned b) { return metric[a] > metric[b]; });

  tbcc_decode_result best;
  best.bits.resize(out_len);
  best.end_state = order[0];
  best.start_state = traceback(order[0], best.bits);
  if (best.start_state == best.end_state) {
    return best;
  }
  // Prefer the best surviving path that is itself tail-biting.
  bit_vector candidate(out_len);
  for (unsigned i = 1; i < ns; ++i) {
    const unsigned start = traceback(order[i], candidate);
    if (start == order[i]) {
      best.bits = candidate;
      best.start_state = start;
      best.end_state = order[i];
      return best;
    }
  }
  return best;
}

bit_vector tbcc_decode(std::span<const double> llrs, unsigned out_len)
{
  return tbcc_decode_detailed(llrs, out_len).bits;
}

// ---------------------------------------------------------------------------
// Rate matching
// ---------------------------------------------------------------------------

bit_vector rate_match(std::span<const uint8_t> bits, std::size_t target_len)
{
  if (bits.empty() || target_len == 0) {
    raise(error_code::out_of_range, "rate matching needs non-empty input and target");
  }
  bit_vector out(target_len);
  for (std::size_t i = 0; i < target_len; ++i) {
    out[i] = bits[i % bits.size()];
  }
  return out;
}

llr_vector rate_recover(std::span<const double> llrs, std::size_t source_len)
{
  if (source_len == 0) {
    raise(error_code::out_of_range, "rate recovery needs a non-empty source");
  }
  llr_vector out(source_len, 0.0);
  for (std::size_t i = 0; i < llrs.size(); ++i) {
    out[i % source_len] += llrs[i];
  }
  return out;
}

namespace {

constexpr std::array<unsigned, 32> subblock_permutation = {1,  17, 9,  25, 5,  21, 13, 29, 3,  19, 11,
                                                            27, 7,  23, 15, 31, 0,  16, 8,  24, 4,  20,
                                                            12, 28, 2,  18, 10, 26, 6,  22, 14, 30};

// Read order of a 32-column sub-block interleaver over d entries; dummy cells are skipped.
std::vector<std::size_t> subblock_order(std::size_t d)
{
  const std::size_t rows = (d + 31) / 32;
  const std::size_t dummies = rows * 32 - d;
  std::vector<std::size_t> order;
  order.reserve(d);
  for (unsigned col : subblock_permutation) {
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t pos = r * 32 + col;
      if (pos >= dummies) {
        order.push_back(pos - dummies);
      }
    }
  }
  return order;
}

} // namespace

bit_vector conv_rate_match(std::span<const uint8_t> coded, std::size_t target_len)
{
  if (coded.size() % 3 != 0 || coded.empty()) {
    raise(error_code::wrong_length, "convolutional buffer must hold three equal streams");
  }
  const std::size_t d = coded.size() / 3;
  const auto order = subblock_order(d);
  bit_vector buffer;
  buffer.reserve(coded.size());
  for (unsigned stream = 0; stream < 3; ++stream) {
    for (std::size_t idx : order) {
      buffer.push_back(coded[3 * idx + stream]);
    }
  }
  return rate_match(buffer, target_len);
}

llr_vector conv_rate_recover(std::span<const double> llrs, std::size_t coded_len)
{
  if (coded_len % 3 != 0 || coded_len == 0) {
    raise(error_code::wrong_length, "convolutional buffer must hold three equal streams");
  }
  const std::size_t d = coded_len / 3;
  const auto order = subblock_order(d);
  const llr_vector buffer = rate_recover(llrs, coded_len);
  llr_vector out(coded_len);
  std::size_t pos = 0;
  for (unsigned stream = 0; stream < 3; ++stream) {
    for (std::size_t idx : order) {
      out[3 * idx + stream] = buffer[pos++];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scrambling
// ---------------------------------------------------------------------------

bit_vector scramble(std::span<const uint8_t> bits, uint32_t seed)
{
  const bit_vector c = gold_sequence(seed, bits.size());
  bit_vector out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    out[i] = uint8_t((bits[i] ^ c[i]) & 1u);
  }
  return out;
}

llr_vector scramble_llrs(std::span<const double> llrs, uint32_t seed)
{
  const bit_vector c = gold_sequence(seed, llrs.size());
  llr_vector out(llrs.size());
  for (std::size_t i = 0; i < llrs.size(); ++i) {
    out[i] = c[i] ? -llrs[i] : llrs[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// QPSK
// ---------------------------------------------------------------------------

std::vector<cf_t> qpsk_map(std::span<const uint8_t> bits)
{
  if (bits.size() % 2 != 0) {
    raise(error_code::odd_length, "QPSK mapping needs an even number of bits");
  }
  const double a = std::sqrt(2.0) / 2;
  std::vector<cf_t> out(bits.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = cf_t(bits[2 * i] ? -a : a, bits[2 * i + 1] ? -a : a);
  }
  return out;
}

llr_vector qpsk_demap(std::span<const cf_t> symbols, double noise_var)
{
  llr_vector out(2 * symbols.size());
  const double scale = 2.0 * std::sqrt(2.0) / noise_var;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    out[2 * i] = scale * symbols[i].real();
    out[2 * i + 1] = scale * symbols[i].imag();
  }
  return out;
}

llr_vector qpsk_demap(std::span<const cf_t> symbols, std::span<const double> noise_vars)
{
  if (noise_vars.size() != symbols.size()) {
    raise(error_code::wrong_length, "one noise variance per symbol expected");
  }
  llr_vector out(2 * symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const double scale = 2.0 * std::sqrt(2.0) / noise_vars[i];
    out[2 * i] = scale * symbols[i].real();
    out[2 * i + 1] = scale * symbols[i].imag();
  }
  return out;
}

// ---------------------------------------------------------------------------
// TBS table
// ---------------------------------------------------------------------------

namespace {

// Release-13 NPDSCH TBS; zero marks entries above the 680-bit Cat-NB1 limit.
constexpr unsigned tbs_table[max_i_tbs + 1][max_i_sf + 1] = {
    {16, 32, 56, 88, 120, 152, 208, 256},
    {24, 56, 88, 144, 176, 208, 256, 344},
    {32, 72, 144, 176, 208, 256, 328, 424},
    {40, 104, 176, 208, 256, 328, 440, 568},
    {56, 120, 208, 256, 328, 408, 552, 680},
    {72, 144, 224, 328, 424, 504, 680, 0},
    {88, 176, 256, 392, 504, 600, 0, 0},
    {104, 224, 328, 472, 584, 680, 0, 0},
    {120, 256, 392, 536, 680, 0, 0, 0},
    {136, 296, 456, 616, 0, 0, 0, 0},
    {144, 328, 504, 680, 0, 0, 0, 0},
    {176, 376, 584, 0, 0, 0, 0, 0},
    {208, 440, 680, 0, 0, 0, 0, 0},
};

constexpr std::array<unsigned, 8> subframes_by_isf = {1, 2, 3, 4, 5, 6, 8, 10};

} // namespace

unsigned nof_subframes(unsigned i_sf)
{
  if (i_sf > max_i_sf) {
    raise(error_code::out_of_range, "i_sf " + std::to_string(i_sf) + " outside 0..7");
  }
  return subframes_by_isf[i_sf];
}

std::optional<unsigned> i_sf_for_subframes(unsigned n_sf)
{
  for (unsigned i = 0; i < subframes_by_isf.size(); ++i) {
    if (subframes_by_isf[i] == n_sf) {
      return i;
    }
  }
  return std::nullopt;
}

bool tbs_supported(unsigned i_tbs, unsigned i_sf)
{
  return i_tbs <= max_i_tbs && i_sf <= max_i_sf && tbs_table[i_tbs][i_sf] != 0;
}

unsigned tbs_lookup(unsigned i_tbs, unsigned i_sf)
{
  if (!tbs_supported(i_tbs, i_sf)) {
    raise(error_code::out_of_range,
          "no TBS for i_tbs=" + std::to_string(i_tbs) + ", i_sf=" + std::to_string(i_sf));
  }
  return tbs_table[i_tbs][i_sf];
}

// ---------------------------------------------------------------------------
// Bit helpers
// ---------------------------------------------------------------------------

void append_bits(bit_vector& out, uint64_t value, unsigned width)
{
  for (unsigned i = width; i-- > 0;) {
    out.push_back(uint8_t((value >> i) & 1u));
  }
}

uint64_t read_bits(std::span<const uint8_t> bits, std::size_t& pos, unsigned width)
{
  if (pos + width > bits.size()) {
    raise(error_code::wrong_length, "bit field exceeds buffer");
  }
  uint64_t v = 0;
  for (unsigned i = 0; i < width; ++i) {
    v = (v << 1) | (bits[pos++] & 1u);
  }
  return v;
}

bit_vector bytes_to_bits(std::span<const uint8_t> bytes)
{
  bit_vector out;
  out.reserve(bytes.size() * 8);
  for (uint8_t b : bytes) {
    append_bits(out, b, 8);
  }
  return out;
}

std::vector<uint8_t> bits_to_bytes(std::span<const uint8_t> bits)
{
  std::vector<uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    out[i / 8] |= uint8_t((bits[i] & 1u) << (7 - i % 8));
  }
  return out;
}

} // namespace nbiot
