#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace amt::detail {

// Real-input FFT of fixed size backed by FFTW. Plans are created once per
// size and shared; each RealFft instance owns its own buffers and may be
// used from one thread at a time.
class RealFft {
public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // Unnormalized inverse: inverse(forward(x)) == n * x.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

private:
  std::size_t n_;
  double* real_;
  void* complex_;  // fftw_complex*
  void* forward_plan_;
  void* inverse_plan_;
};

}  // namespace amt::detail
