#include "dft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <utility>

namespace nbiot::detail {

namespace {

class plan_cache
{
public:
  ~plan_cache()
  {
    for (auto& [key, plan] : plans_) {
      fftw_destroy_plan(plan);
    }
  }

  fftw_plan get(unsigned n, int sign)
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_pair(n, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) {
      return it->second;
    }
    // Planning needs scratch arrays; FFTW_UNALIGNED lets us execute on any buffer.
    fftw_complex* a = fftw_alloc_complex(n);
    fftw_complex* b = fftw_alloc_complex(n);
    fftw_plan plan = fftw_plan_dft_1d(int(n), a, b, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(a);
    fftw_free(b);
    plans_.emplace(key, plan);
    return plan;
  }

private:
  std::mutex mutex_;
  std::map<std::pair<unsigned, int>, fftw_plan> plans_;
};

plan_cache& cache()
{
  static plan_cache instance;
  return instance;
}

void run(std::span<const cf_t> in, std::span<cf_t> out, int sign)
{
  if (in.size() != out.size()) {
    raise(error_code::wrong_length, "dft input/output size differ");
  }
  const auto n = unsigned(in.size());
  fftw_plan plan = cache().get(n, sign);
  // FFTW's new-array execute does not modify the input for out-of-place plans.
  fftw_execute_dft(plan,
                   reinterpret_cast<fftw_complex*>(const_cast<cf_t*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
  const double scale = 1.0 / std::sqrt(double(n));
  for (auto& v : out) {
    v *= scale;
  }
}

} // namespace

void dft(std::span<const cf_t> in, std::span<cf_t> out)
{
  run(in, out, FFTW_FORWARD);
}

void idft(std::span<const cf_t> in, std::span<cf_t> out)
{
  run(in, out, FFTW_BACKWARD);
}

} // namespace nbiot::detail
