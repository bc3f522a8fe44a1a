#include "nbiot/grid.hpp"

#include "dft.hpp"

#include <algorithm>
#include <array>

namespace nbiot {

const char* to_string(operation_mode mode)
{
  switch (mode) {
    case operation_mode::standalone:
      return "standalone";
    case operation_mode::inband:
      return "inband";
    case operation_mode::guardband:
      return "guardband";
  }
  return "unknown";
}

void cell_config::validate() const
{
  if (n_id_ncell > 503) {
    raise(error_code::invalid_config, "n_id_ncell must be in [0, 503]");
  }
  if (n_ports != 1 && n_ports != 2) {
    raise(error_code::invalid_config, "n_ports must be 1 or 2");
  }
}

timing_counters timing_counters::from_absolute(uint64_t abs_sf)
{
  abs_sf %= subframes_per_cycle;
  timing_counters t;
  t.subframe = uint8_t(abs_sf % 10);
  t.sfn = uint16_t((abs_sf / 10) % 1024);
  t.hfn = uint16_t(abs_sf / subframes_per_hfn);
  return t;
}

timing_counters advance(timing_counters t, uint64_t n_subframes)
{
  return timing_counters::from_absolute(t.absolute() + n_subframes % timing_counters::subframes_per_cycle);
}

void resource_grid::put(unsigned k, unsigned l, cf_t value, re_tag tag)
{
  const unsigned i = index(k, l);
  if (tags_[i] != re_tag::empty) {
    raise(error_code::collision,
          "cell (k=" + std::to_string(k) + ", l=" + std::to_string(l) + ") already occupied");
  }
  cells_[i] = value;
  tags_[i] = tag;
}

unsigned resource_grid::count(re_tag tag) const
{
  return unsigned(std::count(tags_.begin(), tags_.end(), tag));
}

bool resource_grid::has_tags() const
{
  return std::any_of(tags_.begin(), tags_.end(), [](re_tag t) { return t != re_tag::empty; });
}

void resource_grid::overlay(const resource_grid& other)
{
  for (unsigned l = 0; l < nof_symbols; ++l) {
    for (unsigned k = 0; k < nof_subcarriers; ++k) {
      if (other.tag(k, l) != re_tag::empty) {
        put(k, l, other.at(k, l), other.tag(k, l));
      }
    }
  }
}

sample_buffer ofdm_modulate(const resource_grid& grid)
{
  sample_buffer out(samples_per_subframe);
  std::array<cf_t, fft_size> bins{};
  std::array<cf_t, fft_size> time{};
  for (unsigned l = 0; l < resource_grid::nof_symbols; ++l) {
    bins.fill(cf_t{});
    bool any = false;
    for (unsigned k = 0; k < resource_grid::nof_subcarriers; ++k) {
      bins[subcarrier_bin(k)] = grid.at(k, l);
      any = any || grid.at(k, l) != cf_t{};
    }
    if (!any) {
      continue;
    }
    detail::idft(bins, time);
    const unsigned cp = cp_length(l);
    cf_t* dst = out.data() + symbol_start(l);
    std::copy(time.end() - cp, time.end(), dst);
    std::copy(time.begin(), time.end(), dst + cp);
  }
  return out;
}

resource_grid ofdm_demodulate(std::span<const cf_t> samples)
{
  if (samples.size() != samples_per_subframe) {
    raise(error_code::wrong_length,
          "expected " + std::to_string(samples_per_subframe) + " samples, got " + std::to_string(samples.size()));
  }
  resource_grid grid;
  std::array<cf_t, fft_size> bins{};
  for (unsigned l = 0; l < resource_grid::nof_symbols; ++l) {
    auto useful = samples.subspan(symbol_start(l) + cp_length(l), fft_size);
    detail::dft(useful, bins);
    for (unsigned k = 0; k < resource_grid::nof_subcarriers; ++k) {
      grid.set(k, l, bins[subcarrier_bin(k)]);
    }
  }
  return grid;
}

} // namespace nbiot
