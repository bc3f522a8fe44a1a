#pragma once

#include "nbiot/grid.hpp"

#include <optional>
#include <span>
#include <vector>

namespace nbiot {

/// Outcome of a full NPSS + NSSS acquisition.
struct sync_result {
  /// Sample index where an NPSS-bearing subframe (subframe 5) starts.
  std::size_t frame_offset = 0;
  double cfo_hz = 0;
  uint16_t n_id_ncell = 0;
  /// Normalized NPSS correlation in [0, 1].
  double peak_metric = 0;
  /// Sample index of the start of a frame whose sfn is even (may precede the buffer).
  int64_t even_frame_start = 0;
  /// sfn mod 8 of the frame starting at even_frame_start.
  unsigned sfn_mod8 = 0;
};

inline constexpr double default_npss_threshold = 0.45;
inline constexpr double default_nsss_threshold = 0.45;

/// NPSS cover code of symbols 3..13.
inline constexpr int npss_cover_code[11] = {1, 1, 1, 1, -1, -1, 1, 1, 1, -1, 1};

resource_grid generate_npss();

struct npss_detection {
  std::size_t offset = 0;
  double cfo_hz = 0;
  double peak_metric = 0;
};

/// Searches at least 20 ms of samples for the strongest NPSS. Throws not_found
/// when the best normalized metric is below threshold.
npss_detection detect_npss(std::span<const cf_t> samples, double threshold = default_npss_threshold);

/// Fractional NPSS position (parabolic peak interpolation) within +-search samples of approx.
std::optional<double> refine_npss_timing(std::span<const cf_t> samples, std::size_t approx, unsigned search = 3);

/// Length-132 NSSS sequence for a cell and (even) frame number.
std::vector<cf_t> nsss_sequence(uint16_t n_id_ncell, unsigned sfn);

/// NSSS grid of subframe 9. Throws odd_frame for odd sfn.
resource_grid generate_nsss(const cell_config& cfg, unsigned sfn);

struct nsss_detection {
  uint16_t n_id_ncell = 0;
  int64_t even_frame_start = 0;
  unsigned sfn_mod8 = 0;
  double peak_metric = 0;
};

/// Tests all 504 identities (and the four frame-dependent shifts) on the subframe-9
/// candidates around an acquired NPSS. cfo_hz is removed before demodulation.
nsss_detection detect_nsss(std::span<const cf_t> samples,
                           std::size_t npss_offset,
                           double cfo_hz = 0,
                           double threshold = default_nsss_threshold);

/// NPSS then NSSS on one buffer (needs roughly 35 ms).
sync_result acquire_cell(std::span<const cf_t> samples);

/// Sample-rate offset in ppm from a linear fit of measured against nominal NPSS positions.
double estimate_sfo_ppm(std::span<const double> nominal_positions, std::span<const double> measured_positions);

/// Removes (or applies, with a negative frequency) a frequency offset in place, continuing from a phase.
void rotate_frequency(std::span<cf_t> samples, double cfo_hz, double start_sample);

} // namespace nbiot
