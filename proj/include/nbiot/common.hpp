#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbiot {

using cf_t = std::complex<double>;
using sample_buffer = std::vector<cf_t>;
using bit_vector = std::vector<uint8_t>;
using llr_vector = std::vector<double>;

inline constexpr double pi = 3.14159265358979323846;

/// Baseband numerology: 1.92 Msps, 128-point transform, 15 kHz subcarriers.
inline constexpr double sample_rate_hz = 1.92e6;
inline constexpr double subcarrier_spacing_hz = 15e3;
inline constexpr unsigned fft_size = 128;
inline constexpr unsigned samples_per_subframe = 1920;
inline constexpr unsigned samples_per_slot = 960;
inline constexpr unsigned subframes_per_frame = 10;
inline constexpr unsigned samples_per_frame = samples_per_subframe * subframes_per_frame;

enum class error_code {
  wrong_length,
  not_found,
  odd_frame,
  collision,
  no_pilots,
  singular_gain,
  too_short,
  odd_length,
  out_of_range,
  wrong_subframe,
  crc_fail,
  tbs_mismatch,
  size_mismatch,
  timeout,
  no_capacity,
  empty_buffer,
  bind_failure,
  invalid_command,
  no_signal,
  invalid_config,
  io_error,
};

const char* to_string(error_code code);

/// Exception carrying a machine-checkable error kind.
class error : public std::runtime_error
{
public:
  error(error_code code, const std::string& what) : std::runtime_error(what), code_(code) {}

  error_code code() const noexcept { return code_; }

private:
  error_code code_;
};

[[noreturn]] void raise(error_code code, const std::string& what);

} // namespace nbiot
