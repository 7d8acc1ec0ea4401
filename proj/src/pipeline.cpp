#include "amt/pipeline.hpp"

namespace amt {

Transcription transcribe(const Waveform& audio, const nn::Model& model, const TranscribeOptions& opt) {
  opt.frontend.validate();
  opt.decoder.validate();
  Transcription t;
  const Waveform w = resample(audio, opt.frontend.sample_rate);
  // Round-trip through the file encodings so the result matches running
  // `frontend`, `infer` and `decode` one after another on files.
  t.input = decode_spectro(encode_spectro(compute_frontend(w, opt.frontend, opt.threads)));

  nn::ForwardOptions fwd;
  fwd.threads = opt.threads;
  fwd.num_stages = opt.num_stages;
  fwd.delta_t = opt.frontend.frame_seconds();
  t.output = model.forward(t.input, fwd);
  auto to_file_precision = [](PianoRoll& r) { r.values = decode_roll(encode_roll(r.values, r.kind)).planes.front(); };
  for (auto& r : t.output.onset_stages) to_file_precision(r);
  to_file_precision(t.output.velocity);

  t.score = decode(t.output.onset_stages.back().values, t.output.velocity.values, opt.decoder, fwd.delta_t,
                   model.spec().num_keys == 88 ? kPianoPitchMin : 0);
  return t;
}

}  // namespace amt
