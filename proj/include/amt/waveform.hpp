#pragma once

#include <vector>

namespace amt {

inline constexpr int kModelSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kModelSampleRate;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

}  // namespace amt
