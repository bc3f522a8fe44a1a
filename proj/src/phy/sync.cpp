#include "nbiot/sync.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>

namespace nbiot {

namespace {

constexpr unsigned npss_root = 5;
constexpr unsigned npss_first_symbol = 3;
constexpr unsigned npss_nof_symbols = 11;
/// Correlation window: the 128-sample body plus the 9 CP samples every symbol shares.
constexpr unsigned seg_len = fft_size + 9;

constexpr unsigned seg_offset(unsigned l)
{
  return symbol_start(l) + cp_length(l) - 9;
}

struct npss_reference {
  std::array<cf_t, seg_len> base{};
  double energy = 0;
};

const npss_reference& npss_ref()
{
  static const npss_reference ref = [] {
    npss_reference r;
    const auto wave = ofdm_modulate(generate_npss());
    const unsigned o = seg_offset(npss_first_symbol);
    const double sign = npss_cover_code[0];
    for (unsigned n = 0; n < seg_len; ++n) {
      r.base[n] = wave[o + n] * sign;
      r.energy += std::norm(r.base[n]);
    }
    return r;
  }();
  return ref;
}

/// Per-symbol correlations of one NPSS candidate, cover code removed and optionally derotated.
struct npss_symbols {
  std::array<cf_t, npss_nof_symbols> c{};
  std::array<double, npss_nof_symbols> e{};
};

npss_symbols correlate_at(std::span<const cf_t> x, std::size_t p, double cfo_hz)
{
  const auto& ref = npss_ref();
  npss_symbols out;
  const double w = -2.0 * pi * cfo_hz / sample_rate_hz;
  for (unsigned i = 0; i < npss_nof_symbols; ++i) {
    const std::size_t start = p + seg_offset(npss_first_symbol + i);
    cf_t acc{};
    double e = 0;
    for (unsigned n = 0; n < seg_len; ++n) {
      const cf_t r = x[start + n] * std::polar(1.0, w * double(start + n));
      acc += r * std::conj(ref.base[n]);
      e += std::norm(r);
    }
    out.c[i] = acc * double(npss_cover_code[i]);
    out.e[i] = e;
  }
  return out;
}

double coherent_metric(const npss_symbols& s)
{
  cf_t sum{};
  double den = 0;
  for (unsigned i = 0; i < npss_nof_symbols; ++i) {
    sum += s.c[i];
    den += std::sqrt(s.e[i]);
  }
  den *= std::sqrt(npss_ref().energy);
  return den > 0 ? std::abs(sum) / den : 0.0;
}

double mean_symbol_spacing()
{
  return double(seg_offset(13) - seg_offset(3)) / double(npss_nof_symbols - 1);
}

/// Residual frequency from the phase between the coherent sums of the two halves of the NPSS.
double half_split_cfo(const npss_symbols& s)
{
  cf_t a{}, b{};
  double ta = 0, tb = 0;
  constexpr unsigned split = 5;
  for (unsigned i = 0; i < npss_nof_symbols; ++i) {
    const double t = seg_offset(npss_first_symbol + i);
    if (i < split) {
      a += s.c[i];
      ta += t / split;
    } else {
      b += s.c[i];
      tb += t / (npss_nof_symbols - split);
    }
  }
  return std::arg(std::conj(a) * b) * sample_rate_hz / (2.0 * pi * (tb - ta));
}

const std::vector<std::array<cf_t, 132>>& nsss_table()
{
  static const std::vector<std::array<cf_t, 132>> table = [] {
    std::vector<std::array<cf_t, 132>> t(504 * 4);
    for (uint16_t id = 0; id < 504; ++id) {
      for (unsigned f = 0; f < 4; ++f) {
        const auto seq = nsss_sequence(id, 2 * f);
        std::copy(seq.begin(), seq.end(), t[id * 4 + f].begin());
      }
    }
    return t;
  }();
  return table;
}

} // namespace

resource_grid generate_npss()
{
  resource_grid g;
  for (unsigned i = 0; i < npss_nof_symbols; ++i) {
    for (unsigned n = 0; n < 11; ++n) {
      const double phase = -pi * npss_root * n * (n + 1) / 11.0;
      g.put(n, npss_first_symbol + i, double(npss_cover_code[i]) * std::polar(1.0, phase), re_tag::npss);
    }
  }
  return g;
}

npss_detection detect_npss(std::span<const cf_t> samples, double threshold)
{
  if (samples.size() < 2 * samples_per_frame) {
    raise(error_code::too_short, "NPSS search needs at least 20 ms of samples");
  }
  const auto& ref = npss_ref();
  const std::size_t n_corr = samples.size() - seg_len + 1;

  std::vector<cf_t> corr(n_corr);
  std::vector<double> energy(n_corr);
  double run = 0;
  for (unsigned n = 0; n < seg_len; ++n) {
    run += std::norm(samples[n]);
  }
  for (std::size_t t = 0; t < n_corr; ++t) {
    cf_t acc{};
    for (unsigned n = 0; n < seg_len; ++n) {
      acc += samples[t + n] * std::conj(ref.base[n]);
    }
    corr[t] = acc;
    energy[t] = std::max(run, 0.0);
    if (t + seg_len < samples.size()) {
      run += std::norm(samples[t + seg_len]) - std::norm(samples[t]);
    }
  }

  // Differential metric over adjacent symbols: insensitive to frequency offset.
  const std::size_t n_pos = samples.size() - samples_per_subframe + 1;
  double best = -1;
  std::size_t best_p = 0;
  cf_t best_z{};
  for (std::size_t p = 0; p < n_pos; ++p) {
    cf_t z{};
    cf_t prev = corr[p + seg_offset(npss_first_symbol)];
    double e_max = energy[p + seg_offset(npss_first_symbol)];
    for (unsigned i = 1; i < npss_nof_symbols; ++i) {
      const std::size_t t = p + seg_offset(npss_first_symbol + i);
      const cf_t cur = corr[t] * double(npss_cover_code[i] * npss_cover_code[i - 1]);
      z += std::conj(prev) * cur;
      prev = corr[t];
      e_max = std::max(e_max, energy[t]);
    }
    // Normalizing by the strongest window keeps partial overlaps with silence low.
    const double den = ref.energy * e_max * double(npss_nof_symbols - 1);
    const double m = den > 0 ? std::abs(z) / den : 0.0;
    if (m > best) {
      best = m;
      best_p = p;
      best_z = z;
    }
  }
  if (best < threshold) {
    raise(error_code::not_found, "no NPSS above threshold");
  }

  const double coarse = std::arg(best_z) * sample_rate_hz / (2.0 * pi * mean_symbol_spacing());

  // Coherent refinement of timing around the differential peak, then the fine frequency estimate.
  std::size_t p_hat = best_p;
  double best_coh = -1;
  const std::size_t lo = best_p >= 3 ? best_p - 3 : 0;
  const std::size_t hi = std::min(best_p + 3, n_pos - 1);
  npss_symbols best_syms;
  for (std::size_t p = lo; p <= hi; ++p) {
    auto s = correlate_at(samples, p, coarse);
    const double m = coherent_metric(s);
    if (m > best_coh) {
      best_coh = m;
      p_hat = p;
      best_syms = s;
    }
  }
  npss_detection out;
  out.offset = p_hat;
  out.cfo_hz = coarse + half_split_cfo(best_syms);
  out.peak_metric = std::clamp(best, 0.0, 1.0);
  return out;
}

std::optional<double> refine_npss_timing(std::span<const cf_t> samples, std::size_t approx, unsigned search)
{
  const std::size_t need = samples_per_subframe;
  if (samples.size() < need + 2) {
    return std::nullopt;
  }
  const std::size_t last = samples.size() - need;
  const std::size_t lo = approx >= search ? approx - search : 0;
  const std::size_t hi = std::min<std::size_t>(approx + search, last);
  if (lo > hi) {
    return std::nullopt;
  }
  std::vector<double> m(hi - lo + 1);
  for (std::size_t p = lo; p <= hi; ++p) {
    auto s = correlate_at(samples, p, 0.0);
    cf_t z{};
    for (unsigned i = 1; i < npss_nof_symbols; ++i) {
      z += std::conj(s.c[i - 1]) * s.c[i];
    }
    m[p - lo] = std::abs(z);
  }
  const std::size_t k = std::size_t(std::max_element(m.begin(), m.end()) - m.begin());
  double frac = 0;
  if (k > 0 && k + 1 < m.size()) {
    const double a = m[k - 1], b = m[k], c = m[k + 1];
    const double d = a - 2 * b + c;
    if (d < 0) {
      frac = 0.5 * (a - c) / d;
    }
  }
  return double(lo + k) + frac;
}

std::vector<cf_t> nsss_sequence(uint16_t n_id_ncell, unsigned sfn)
{
  if (n_id_ncell > 503) {
    raise(error_code::out_of_range, "n_id_ncell must be in [0, 503]");
  }
  static constexpr unsigned hadamard_rows[4] = {0, 31, 63, 127};
  const unsigned u = n_id_ncell % 126 + 3;
  const unsigned q = n_id_ncell / 126;
  const double theta = 33.0 / 132.0 * double((sfn / 2) % 4);
  std::vector<cf_t> d(132);
  for (unsigned n = 0; n < 132; ++n) {
    const unsigned np = n % 131;
    const double b = (std::popcount(hadamard_rows[q] & (n % 128)) % 2) ? -1.0 : 1.0;
    const double zc = -pi * double(u) * np * (np + 1) / 131.0;
    d[n] = b * std::polar(1.0, zc - 2.0 * pi * theta * n);
  }
  return d;
}

resource_grid generate_nsss(const cell_config& cfg, unsigned sfn)
{
  cfg.validate();
  if (sfn % 2 != 0) {
    raise(error_code::odd_frame, "NSSS is only sent in even frames");
  }
  const auto d = nsss_sequence(cfg.n_id_ncell, sfn);
  resource_grid g;
  for (unsigned n = 0; n < 132; ++n) {
    g.put(n % 12, 3 + n / 12, d[n], re_tag::nsss);
  }
  return g;
}

nsss_detection detect_nsss(std::span<const cf_t> samples, std::size_t npss_offset, double cfo_hz, double threshold)
{
  const auto& table = nsss_table();
  const int64_t first = int64_t(npss_offset) + 4 * int64_t(samples_per_subframe);
  int64_t q0 = first % int64_t(samples_per_frame);

  nsss_detection best;
  double best_m = -1;
  bool any = false;
  sample_buffer seg(samples_per_subframe);
  for (int64_t q = q0; q + int64_t(samples_per_subframe) <= int64_t(samples.size()); q += samples_per_frame) {
    any = true;
    std::copy_n(samples.begin() + q, samples_per_subframe, seg.begin());
    rotate_frequency(seg, cfo_hz, double(q));
    const auto grid = ofdm_demodulate(seg);
    std::array<cf_t, 132> r;
    double e = 0;
    for (unsigned n = 0; n < 132; ++n) {
      r[n] = grid.at(n % 12, 3 + n / 12);
      e += std::norm(r[n]);
    }
    if (e <= 0) {
      continue;
    }
    const double norm = std::sqrt(e * 132.0);
    for (std::size_t h = 0; h < table.size(); ++h) {
      const auto& d = table[h];
      cf_t acc{};
      for (unsigned n = 0; n < 132; ++n) {
        acc += r[n] * std::conj(d[n]);
      }
      const double m = std::abs(acc) / norm;
      if (m > best_m) {
        best_m = m;
        best.n_id_ncell = uint16_t(h / 4);
        best.sfn_mod8 = unsigned(2 * (h % 4));
        best.even_frame_start = q - 9 * int64_t(samples_per_subframe);
      }
    }
  }
  if (!any) {
    raise(error_code::too_short, "no complete subframe-9 candidate in the buffer");
  }
  if (best_m < threshold) {
    raise(error_code::not_found, "no NSSS above threshold");
  }
  best.peak_metric = std::min(best_m, 1.0);
  return best;
}

sync_result acquire_cell(std::span<const cf_t> samples)
{
  const auto pss = detect_npss(samples);
  const auto sss = detect_nsss(samples, pss.offset, pss.cfo_hz);
  sync_result out;
  out.frame_offset = pss.offset;
  out.cfo_hz = pss.cfo_hz;
  out.peak_metric = pss.peak_metric;
  out.n_id_ncell = sss.n_id_ncell;
  out.even_frame_start = sss.even_frame_start;
  out.sfn_mod8 = sss.sfn_mod8;
  return out;
}

double estimate_sfo_ppm(std::span<const double> nominal_positions, std::span<const double> measured_positions)
{
  if (nominal_positions.size() != measured_positions.size()) {
    raise(error_code::size_mismatch, "position lists differ in length");
  }
  const std::size_t n = nominal_positions.size();
  if (n < 2) {
    raise(error_code::too_short, "SFO fit needs at least two positions");
  }
  const double mx = std::accumulate(nominal_positions.begin(), nominal_positions.end(), 0.0) / double(n);
  const double my = std::accumulate(measured_positions.begin(), measured_positions.end(), 0.0) / double(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (nominal_positions[i] - mx) * (nominal_positions[i] - mx);
    sxy += (nominal_positions[i] - mx) * (measured_positions[i] - my);
  }
  if (sxx <= 0) {
    raise(error_code::size_mismatch, "nominal positions must not all coincide");
  }
  return (sxy / sxx - 1.0) * 1e6;
}

void rotate_frequency(std::span<cf_t> samples, double cfo_hz, double start_sample)
{
  const double w = -2.0 * pi * cfo_hz / sample_rate_hz;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    samples[n] *= std::polar(1.0, w * (start_sample + double(n)));
  }
}

} // namespace nbiot
