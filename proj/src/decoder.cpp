#include "amt/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "amt/error.hpp"

namespace amt {

void DecoderParams::validate() const {
  if (!(sigma >= 0.0)) throw InvalidParam("sigma must be >= 0");
  if (!(rho > 0.0 && rho < 1.0)) throw InvalidParam("rho must be in (0, 1)");
  if (!std::isfinite(mu)) throw InvalidParam("mu must be finite");
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0)) throw InvalidParam("sigma must be >= 0");
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

Matrix gaussian_smooth(const Matrix& roll, double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  if (kernel.size() == 1) return roll;
  const long radius = static_cast<long>(kernel.size() / 2);
  const long T = static_cast<long>(roll.cols());
  Matrix out(roll.rows(), roll.cols());
  for (std::size_t r = 0; r < roll.rows(); ++r) {
    const auto src = roll.row(r);
    auto dst = out.row(r);
    for (long t = 0; t < T; ++t) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i) {
        const long u = t + i;
        if (u >= 0 && u < T) acc += kernel[static_cast<std::size_t>(i + radius)] * src[static_cast<std::size_t>(u)];
      }
      dst[static_cast<std::size_t>(t)] = acc;
    }
  }
  return out;
}

Matrix nms(const Matrix& roll) {
  Matrix out = roll;
  const std::size_t T = roll.cols();
  for (std::size_t r = 0; r < roll.rows(); ++r) {
    const auto src = roll.row(r);
    auto dst = out.row(r);
    for (std::size_t t = 0; t < T; ++t) {
      const bool below_left = t > 0 && src[t] < src[t - 1];
      const bool below_right = t + 1 < T && src[t] < src[t + 1];
      if (below_left || below_right) dst[t] = 0.0;
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> pick_onsets(const Matrix& roll, const DecoderParams& params) {
  params.validate();
  const Matrix peaks = nms(gaussian_smooth(roll, params.sigma));
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < peaks.rows(); ++k)
    for (std::size_t t = 0; t < peaks.cols(); ++t)
      if (peaks(k, t) >= params.rho) out.emplace_back(k, t);
  return out;
}

ScorePrediction decode(const Matrix& onset_roll, const Matrix& velocity_roll, const DecoderParams& params,
                       double delta_t, int pitch_min) {
  require_same_shape(onset_roll, velocity_roll, "decode");
  if (!(delta_t > 0.0)) throw InvalidParam("delta_t must be positive");
  ScorePrediction score;
  for (auto [k, t] : pick_onsets(onset_roll, params)) {
    const double time = std::max(0.0, delta_t * static_cast<double>(t) + params.mu);
    score.events.push_back({pitch_min + static_cast<int>(k), velocity_roll(k, t), time});
  }
  std::stable_sort(score.events.begin(), score.events.end(), [](const ScoreEvent& a, const ScoreEvent& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.pitch < b.pitch;
  });
  return score;
}

NoteSequence score_to_notes(const ScorePrediction& score, double note_length) {
  NoteSequence seq;
  for (const auto& e : score.events)
    seq.notes.push_back({e.pitch, e.time, e.time + note_length, std::clamp(e.velocity, 0.0, 1.0)});
  seq.normalize();
  return seq;
}

ScorePrediction notes_to_score(const NoteSequence& seq) {
  ScorePrediction score;
  for (const auto& n : seq.notes) score.events.push_back({n.pitch, n.velocity, n.onset});
  std::stable_sort(score.events.begin(), score.events.end(), [](const ScoreEvent& a, const ScoreEvent& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.pitch < b.pitch;
  });
  return score;
}

}  // namespace amt
