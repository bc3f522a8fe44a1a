#pragma once

#include "nbiot/common.hpp"

#include <span>

namespace nbiot::detail {

/// Unitary DFT of any size backed by FFTW. Plans are cached per size and
/// direction; execution is safe from multiple threads.
void dft(std::span<const cf_t> in, std::span<cf_t> out);
void idft(std::span<const cf_t> in, std::span<cf_t> out);

} // namespace nbiot::detail
