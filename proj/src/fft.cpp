#include "fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <utility>

namespace amt::detail {

namespace {

// FFTW planning is not thread-safe; execution of an existing plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::pair<fftw_plan, fftw_plan> plans_for(std::size_t n) {
  static std::map<std::size_t, std::pair<fftw_plan, fftw_plan>> cache;
  std::lock_guard lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  double* r = fftw_alloc_real(n);
  fftw_complex* c = fftw_alloc_complex(n / 2 + 1);
  const int size = static_cast<int>(n);
  fftw_plan fwd = fftw_plan_dft_r2c_1d(size, r, c, FFTW_ESTIMATE);
  fftw_plan inv = fftw_plan_dft_c2r_1d(size, c, r, FFTW_ESTIMATE);
  fftw_free(r);
  fftw_free(c);
  return cache.emplace(n, std::make_pair(fwd, inv)).first->second;
}

}  // namespace

RealFft::RealFft(std::size_t n)
    : n_(n), real_(fftw_alloc_real(n)), complex_(fftw_alloc_complex(n / 2 + 1)) {
  auto [fwd, inv] = plans_for(n);
  forward_plan_ = fwd;
  inverse_plan_ = inv;
}

RealFft::~RealFft() {
  fftw_free(real_);
  fftw_free(complex_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  std::copy(in.begin(), in.end(), real_);
  auto* c = static_cast<fftw_complex*>(complex_);
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), real_, c);
  for (std::size_t k = 0; k < bins(); ++k) out[k] = {c[k][0], c[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  auto* c = static_cast<fftw_complex*>(complex_);
  for (std::size_t k = 0; k < bins(); ++k) {
    c[k][0] = in[k].real();
    c[k][1] = in[k].imag();
  }
  // c2r destroys its input; it is a scratch copy here.
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_), c, real_);
  std::copy(real_, real_ + n_, out.begin());
}

}  // namespace amt::detail
