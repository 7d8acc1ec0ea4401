#pragma once

#include "amt/decoder.hpp"
#include "amt/dsp.hpp"
#include "amt/network.hpp"

namespace amt {

struct TranscribeOptions {
  FrontendConfig frontend;
  DecoderParams decoder;
  int threads = 1;
  int num_stages = 0;  // 0 = all onset stages
};

struct Transcription {
  SpectroInput input;
  nn::NetworkOutput output;
  ScorePrediction score;
};

/// Frontend, forward pass and decoding in sequence. Audio at another rate is
/// resampled first. The input planes and predicted rolls are kept at the f32
/// precision of their files. The result does not depend on `threads`.
Transcription transcribe(const Waveform& audio, const nn::Model& model, const TranscribeOptions& opt = {});

}  // namespace amt
