#include "nbiot/ul_channels.hpp"

#include "dft.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace nbiot {

namespace {

constexpr double nprach_threshold = 20.0;
constexpr double dtx_t_threshold = 4.0;
constexpr double noise_floor = 1e-9;

unsigned tone_offset(unsigned tone)
{
  return (tone + nprach_symbol_len - nprach_carrier_tones / 2) % nprach_symbol_len;
}

/// Inter-preamble hop f(t) for t = 0 .. n - 1.
std::vector<unsigned> hop_offsets(uint16_t n_id, unsigned n)
{
  const auto c = gold_sequence(n_id, 10 * std::size_t(n) + 10);
  std::vector<unsigned> f(n);
  unsigned prev = 0;
  for (unsigned t = 0; t < n; ++t) {
    unsigned acc = 0;
    for (unsigned n_i = 10 * t + 1; n_i <= 10 * t + 9; ++n_i) {
      acc += unsigned(c[n_i]) << (n_i - (10 * t + 1));
    }
    prev = (prev + acc % 11 + 1) % 12;
    f[t] = prev;
  }
  return f;
}

/// Rotation by idx * pi/4: quarter turns swap components, the odd eighth divides by sqrt(2),
/// so constellation points land on the unit circle without rounding.
cf_t rotate_eighths(cf_t x, unsigned idx)
{
  for (unsigned q = 0; q < idx / 2; ++q) {
    x = cf_t(-x.imag(), x.real());
  }
  if (idx % 2 == 1) {
    const double r = std::sqrt(2.0);
    x = cf_t((x.real() - x.imag()) / r, (x.real() + x.imag()) / r);
  }
  return x;
}

std::vector<cf_t> rotate(std::span<const cf_t> symbols, ul_modulation mod, uint64_t first, bool inverse)
{
  const unsigned step = mod == ul_modulation::bpsk ? 2 : 1;
  std::vector<cf_t> out(symbols.size());
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    unsigned idx = unsigned(((first + k) * step) % 8);
    if (inverse) {
      idx = (8 - idx) % 8;
    }
    out[k] = rotate_eighths(symbols[k], idx);
  }
  return out;
}

uint32_t npusch_seed(uint16_t rnti, timing_counters t, uint16_t n_id)
{
  return (uint32_t(rnti) << 14) + (uint32_t(t.sfn % 2) << 13) + (uint32_t(t.subframe) << 9) + n_id;
}

unsigned data_symbols_per_slot(npusch_format f)
{
  return ul_symbols_per_slot - unsigned(dmrs_symbols(f).size());
}

bool is_dmrs_symbol(npusch_format f, unsigned l)
{
  const auto d = dmrs_symbols(f);
  return std::find(d.begin(), d.end(), l) != d.end();
}

/// Coded symbols of the whole allocation, before rotation and precoding.
std::vector<cf_t> npusch_symbols(std::span<const uint8_t> payload, const npusch_allocation& a, const cell_config& cfg)
{
  const uint32_t seed = npusch_seed(a.rnti, a.start, cfg.n_id_ncell);
  if (a.format == npusch_format::f1_data) {
    auto with_crc = crc_attach(payload, crc_width::crc24);
    const auto coded = tbcc_encode(with_crc);
    const auto matched = conv_rate_match(coded, npusch_capacity_bits(a));
    return qpsk_map(scramble(matched, seed));
  }
  const std::size_t n = std::size_t(data_symbols_per_slot(a.format)) * a.n_tones * a.n_slots();
  const auto bits = scramble(bit_vector(n, payload[0]), seed);
  std::vector<cf_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = bits[i] ? cf_t(-1, 0) : cf_t(1, 0);
  }
  return out;
}

/// Received slot cells, indexed [l * 12 + k].
using slot_cells = std::array<cf_t, 12 * ul_symbols_per_slot>;

std::vector<slot_cells> demodulate_slots(std::span<const cf_t> samples, unsigned n_slots)
{
  std::vector<slot_cells> out(n_slots);
  for (unsigned s = 0; s < n_slots; s += 2) {
    const auto grid = ofdm_demodulate(samples.subspan(std::size_t(s / 2) * samples_per_subframe, samples_per_subframe));
    for (unsigned half = 0; half < 2 && s + half < n_slots; ++half) {
      for (unsigned l = 0; l < ul_symbols_per_slot; ++l) {
        for (unsigned k = 0; k < 12; ++k) {
          out[s + half][l * 12 + k] = grid.at(k, half * ul_symbols_per_slot + l);
        }
      }
    }
  }
  return out;
}

} // namespace

// --- NPRACH -------------------------------------------------------------------

void nprach_config::validate() const
{
  if (n_rep == 0 || n_rep > 128 || (n_rep & (n_rep - 1)) != 0) {
    raise(error_code::invalid_config, "n_rep must be a power of two in 1..128");
  }
  if (n_subcarriers == 0 || n_subcarriers % 12 != 0 || base_subcarrier % 12 != 0 ||
      base_subcarrier + n_subcarriers > nprach_carrier_tones) {
    raise(error_code::invalid_config, "NPRACH region must be whole 12-tone blocks inside the carrier");
  }
  if (n_init >= n_subcarriers) {
    raise(error_code::invalid_config, "n_init outside the NPRACH region");
  }
  if (n_id_ncell > 503) {
    raise(error_code::invalid_config, "cell identity out of range");
  }
}

std::size_t nprach_config::nof_samples() const
{
  return std::size_t(n_rep) * nprach_groups_per_preamble * nprach_group_len(format);
}

std::vector<unsigned> nprach_hopping(const nprach_config& cfg)
{
  cfg.validate();
  const unsigned n_groups = cfg.n_rep * nprach_groups_per_preamble;
  const unsigned start = cfg.base_subcarrier + 12 * (cfg.n_init / 12);
  const unsigned first = cfg.n_init % 12;
  const auto f = hop_offsets(cfg.n_id_ncell, cfg.n_rep);
  std::vector<unsigned> out(n_groups);
  unsigned cur = first;
  for (unsigned i = 0; i < n_groups; ++i) {
    if (i > 0) {
      switch (i % 4) {
        case 0:
          cur = (first + f[i / 4 - 1]) % 12;
          break;
        case 2:
          cur = cur < 6 ? cur + 6 : cur - 6;
          break;
        default:
          cur = cur % 2 == 0 ? cur + 1 : cur - 1;
          break;
      }
    }
    out[i] = start + cur;
  }
  return out;
}

sample_buffer nprach_generate(const nprach_config& cfg)
{
  const auto tones = nprach_hopping(cfg);
  const unsigned len = nprach_group_len(cfg.format);
  const double amp = 1.0 / std::sqrt(double(fft_size));
  sample_buffer out(cfg.nof_samples());
  for (std::size_t g = 0; g < tones.size(); ++g) {
    const double w = 2 * pi * (double(tones[g]) - nprach_carrier_tones / 2.0) / nprach_symbol_len;
    cf_t* dst = out.data() + g * len;
    for (unsigned n = 0; n < len; ++n) {
      dst[n] = std::polar(amp, w * double(n));
    }
  }
  return out;
}

std::optional<nprach_detection> nprach_detect(std::span<const cf_t> samples, const nprach_config& cfg)
{
  cfg.validate();
  if (samples.size() < cfg.nof_samples()) {
    raise(error_code::too_short, "buffer shorter than the NPRACH preamble");
  }
  const unsigned len = nprach_group_len(cfg.format);
  const unsigned cp = nprach_cp_len(cfg.format);
  const unsigned n_groups = cfg.n_rep * nprach_groups_per_preamble;

  // Per group: the five symbol windows summed, then one transform (linearity).
  std::vector<std::vector<cf_t>> bins(n_groups);
  std::vector<cf_t> acc(nprach_symbol_len), spec(nprach_symbol_len);
  double noise = 0;
  for (unsigned g = 0; g < n_groups; ++g) {
    std::fill(acc.begin(), acc.end(), cf_t{});
    for (unsigned s = 0; s < nprach_symbols_per_group; ++s) {
      const cf_t* src = samples.data() + std::size_t(g) * len + cp + s * nprach_symbol_len;
      for (unsigned n = 0; n < nprach_symbol_len; ++n) {
        acc[n] += src[n];
      }
    }
    detail::dft(acc, spec);
    bins[g].resize(cfg.n_subcarriers);
    for (unsigned i = 0; i < cfg.n_subcarriers; ++i) {
      bins[g][i] = spec[tone_offset(cfg.base_subcarrier + i)];
      noise += std::norm(bins[g][i]);
    }
  }
  noise /= double(n_groups) * cfg.n_subcarriers;
  if (noise <= 0) {
    return std::nullopt;
  }

  std::array<cf_t, nprach_symbol_len> twiddle;
  for (unsigned i = 0; i < nprach_symbol_len; ++i) {
    twiddle[i] = std::polar(1.0, 2 * pi * double(i) / nprach_symbol_len);
  }

  nprach_detection best;
  double best_stat = 0;
  std::vector<cf_t> v(n_groups);
  std::vector<unsigned> m(n_groups);
  nprach_config hyp = cfg;
  for (unsigned init = 0; init < cfg.n_subcarriers; ++init) {
    hyp.n_init = init;
    const auto tones = nprach_hopping(hyp);
    for (unsigned g = 0; g < n_groups; ++g) {
      m[g] = tone_offset(tones[g]);
      // Remove the CP phase of the transmitted tone.
      v[g] = bins[g][tones[g] - cfg.base_subcarrier] * std::conj(twiddle[(m[g] * cp) % nprach_symbol_len]);
    }
    for (unsigned d = 0; d <= cp; ++d) {
      cf_t s{};
      for (unsigned g = 0; g < n_groups; ++g) {
        s += v[g] * twiddle[(m[g] * d) % nprach_symbol_len];
      }
      const double stat = std::norm(s) / (double(n_groups) * noise);
      if (stat > best_stat) {
        best_stat = stat;
        best = {init, d, stat / nprach_threshold};
      }
    }
  }
  if (best.metric <= 1.0) {
    return std::nullopt;
  }
  return best;
}

// --- phase rotation -------------------------------------------------------------

std::vector<cf_t> apply_ul_phase_rotation(std::span<const cf_t> symbols, ul_modulation mod, uint64_t first_index)
{
  return rotate(symbols, mod, first_index, false);
}

std::vector<cf_t> remove_ul_phase_rotation(std::span<const cf_t> symbols, ul_modulation mod, uint64_t first_index)
{
  return rotate(symbols, mod, first_index, true);
}

// --- NPUSCH -------------------------------------------------------------------

void npusch_allocation::validate() const
{
  if (n_tones != 3 && n_tones != 6 && n_tones != 12) {
    raise(error_code::invalid_config, "multi-tone NPUSCH uses 3, 6 or 12 subcarriers");
  }
  if (first_subcarrier % n_tones != 0 || first_subcarrier + n_tones > 12) {
    raise(error_code::invalid_config, "subcarrier allocation must be aligned inside 0..11");
  }
  if (format == npusch_format::f1_data && !tbs_supported(i_tbs, i_sf)) {
    raise(error_code::out_of_range, "unsupported transport block size entry");
  }
}

unsigned npusch_allocation::n_slots() const
{
  if (format == npusch_format::f2_uci) {
    return 2;
  }
  return 2 * nof_subframes(i_sf) * (12 / n_tones);
}

std::vector<unsigned> npusch_allocation::subcarriers() const
{
  std::vector<unsigned> out(n_tones);
  std::iota(out.begin(), out.end(), first_subcarrier);
  return out;
}

unsigned npusch_capacity_bits(const npusch_allocation& alloc)
{
  return 2 * data_symbols_per_slot(alloc.format) * alloc.n_tones * alloc.n_slots();
}

sample_buffer npusch_encode(std::span<const uint8_t> payload, const npusch_allocation& alloc, const cell_config& cfg)
{
  alloc.validate();
  const std::size_t expected = alloc.format == npusch_format::f1_data ? alloc.tbs() : 1;
  if (payload.size() != expected) {
    raise(error_code::size_mismatch,
          "NPUSCH payload has " + std::to_string(payload.size()) + " bits, allocation carries " +
              std::to_string(expected));
  }
  const auto mod = alloc.format == npusch_format::f1_data ? ul_modulation::qpsk : ul_modulation::bpsk;
  const auto symbols = apply_ul_phase_rotation(npusch_symbols(payload, alloc, cfg), mod);
  const auto sc = alloc.subcarriers();
  const unsigned n_slots = alloc.n_slots();
  const uint64_t slot0 = 2 * alloc.start.absolute();

  sample_buffer out;
  out.reserve(std::size_t(n_slots) * samples_per_slot);
  std::vector<cf_t> freq(alloc.n_tones);
  std::size_t next = 0;
  resource_grid grid;
  for (unsigned s = 0; s < n_slots; ++s) {
    const auto dmrs = map_dmrs(ul_slot{}, alloc.format, sc, cfg.n_id_ncell, unsigned((slot0 + s) % 20));
    const unsigned base_l = (s % 2) * ul_symbols_per_slot;
    for (unsigned l = 0; l < ul_symbols_per_slot; ++l) {
      if (is_dmrs_symbol(alloc.format, l)) {
        for (unsigned k : sc) {
          grid.set(k, base_l + l, dmrs.at(k, l));
        }
        continue;
      }
      detail::dft(std::span(symbols).subspan(next, alloc.n_tones), freq);
      next += alloc.n_tones;
      for (unsigned m = 0; m < alloc.n_tones; ++m) {
        grid.set(sc[m], base_l + l, freq[m]);
      }
    }
    if (s % 2 == 1) {
      const auto sf = ofdm_modulate(grid);
      out.insert(out.end(), sf.begin(), sf.end());
      grid = resource_grid{};
    }
  }
  return out;
}

bit_vector npusch_decode(std::span<const cf_t> samples, const npusch_allocation& alloc, const cell_config& cfg)
{
  alloc.validate();
  const unsigned n_slots = alloc.n_slots();
  if (samples.size() < std::size_t(n_slots) * samples_per_slot) {
    raise(error_code::too_short, "buffer shorter than the NPUSCH allocation");
  }
  const auto sc = alloc.subcarriers();
  const unsigned nt = alloc.n_tones;
  const uint64_t slot0 = 2 * alloc.start.absolute();
  const auto slots = demodulate_slots(samples, n_slots);
  const auto pilot_syms = dmrs_symbols(alloc.format);

  // Per slot: least-squares line across the allocation through all DMRS observations.
  std::vector<std::vector<cf_t>> h(n_slots, std::vector<cf_t>(nt));
  double resid = 0;
  std::size_t dof = 0;
  for (unsigned s = 0; s < n_slots; ++s) {
    const auto ref = map_dmrs(ul_slot{}, alloc.format, sc, cfg.n_id_ncell, unsigned((slot0 + s) % 20));
    std::vector<double> x;
    std::vector<cf_t> y;
    for (unsigned l : pilot_syms) {
      for (unsigned m = 0; m < nt; ++m) {
        x.push_back(double(m));
        y.push_back(slots[s][l * 12 + sc[m]] / ref.at(sc[m], l));
      }
    }
    const double n = double(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const cf_t my = std::accumulate(y.begin(), y.end(), cf_t{}) / n;
    double sxx = 0;
    cf_t sxy{};
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxy += (x[i] - mx) * (y[i] - my);
    }
    const cf_t slope = sxx > 0 ? sxy / sxx : cf_t{};
    for (unsigned m = 0; m < nt; ++m) {
      h[s][m] = my + slope * (double(m) - mx);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      resid += std::norm(y[i] - (my + slope * (x[i] - mx)));
    }
    dof += x.size() - 2;
  }
  const double nv = std::max(dof > 0 ? resid / double(dof) : noise_floor, noise_floor);

  // Zero-forcing, de-precoding, then per-symbol noise after the transform.
  std::vector<cf_t> z;
  std::vector<double> var;
  std::vector<cf_t> eq(nt), time(nt);
  for (unsigned s = 0; s < n_slots; ++s) {
    double v = 0;
    for (unsigned m = 0; m < nt; ++m) {
      v += nv / std::max(std::norm(h[s][m]), 1e-24);
    }
    v /= nt;
    for (unsigned l = 0; l < ul_symbols_per_slot; ++l) {
      if (is_dmrs_symbol(alloc.format, l)) {
        continue;
      }
      for (unsigned m = 0; m < nt; ++m) {
        const cf_t g = h[s][m];
        eq[m] = std::abs(g) > 1e-12 ? slots[s][l * 12 + sc[m]] / g : cf_t{};
      }
      detail::idft(eq, time);
      z.insert(z.end(), time.begin(), time.end());
      var.insert(var.end(), nt, v);
    }
  }
  const uint32_t seed = npusch_seed(alloc.rnti, alloc.start, cfg.n_id_ncell);

  if (alloc.format == npusch_format::f2_uci) {
    const auto r = remove_ul_phase_rotation(z, ul_modulation::bpsk);
    const auto c = gold_sequence(seed, r.size());
    std::vector<double> u(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      u[i] = c[i] ? -r[i].real() : r[i].real();
    }
    const double n = double(u.size());
    const double mean = std::accumulate(u.begin(), u.end(), 0.0) / n;
    double ss = 0;
    for (double x : u) {
      ss += (x - mean) * (x - mean);
    }
    const double t = std::abs(mean) / std::sqrt(std::max(ss / (n - 1), 1e-30) / n);
    if (!(t > dtx_t_threshold)) {
      raise(error_code::crc_fail, "no ACK transmission detected on NPUSCH format 2");
    }
    return bit_vector{uint8_t(mean < 0 ? 1 : 0)};
  }

  const auto r = remove_ul_phase_rotation(z, ul_modulation::qpsk);
  const auto llrs = qpsk_demap(r, var);
  const unsigned k = alloc.tbs() + 24;
  const auto descrambled = scramble_llrs(llrs, seed);
  const auto soft = conv_rate_recover(descrambled, 3 * std::size_t(k));
  auto bits = tbcc_decode(soft, k);
  if (!crc_check(bits, crc_width::crc24)) {
    raise(error_code::crc_fail, "NPUSCH transport block failed the CRC");
  }
  bits.resize(alloc.tbs());
  return bits;
}

} // namespace nbiot
