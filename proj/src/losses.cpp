#include "amt/losses.hpp"

#include <algorithm>
#include <cmath>

#include "amt/error.hpp"

namespace amt {

void LossConfig::validate() const {
  if (!(eps > 0.0 && eps < 0.1)) throw InvalidParam("eps must be in (0, 0.1)");
  if (!(frame_weight >= 1.0)) throw InvalidParam("frame_weight must be >= 1");
  if (!(lambda >= 0.0)) throw InvalidParam("lambda must be >= 0");
  if (!(onset_length > 0.0)) throw InvalidParam("onset_length must be positive");
  if (completion_frames < 1) throw InvalidParam("completion_frames must be >= 1");
}

namespace {

double cell_ce(double p, double t, double eps) {
  const double q = std::clamp(p, eps, 1.0 - eps);
  return -(t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
}

// d cell_ce / d p; zero where the clamp holds p fixed.
double cell_grad(double p, double t, double eps) {
  if (p <= eps || p >= 1.0 - eps) return 0.0;
  return -t / p + (1.0 - t) / (1.0 - p);
}

}  // namespace

double bce(const Matrix& pred, const Matrix& target, double eps) {
  require_same_shape(pred, target, "bce");
  CompensatedSum sum;
  for (std::size_t i = 0; i < pred.size(); ++i) sum.add(cell_ce(pred.data()[i], target.data()[i], eps));
  return sum.value();
}

double weighted_bce(const Matrix& pred, const Matrix& target, const Matrix& weight, double eps) {
  require_same_shape(pred, target, "weighted_bce");
  require_same_shape(pred, weight, "weighted_bce");
  CompensatedSum sum;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double w = weight.data()[i];
    if (w != 0.0) sum.add(w * cell_ce(pred.data()[i], target.data()[i], eps));
  }
  return sum.value();
}

Matrix frame_weight_roll(const NoteSequence& seq, const RollConfig& roll, const LossConfig& cfg) {
  const auto rolls = quantize(seq, roll);
  Matrix w(rolls.frames.values.rows(), rolls.frames.values.cols(), 1.0);
  const long frames = static_cast<long>(w.cols());
  for (const auto& n : seq.notes) {
    const long t1 = frame_index(n.onset, roll.delta_t);
    const long t3 = std::min(frames, std::max(t1 + 1, frame_index(n.offset, roll.delta_t)));
    const long t2 = std::min(t3, t1 + cfg.completion_frames);
    const std::size_t key = static_cast<std::size_t>(n.pitch - roll.pitch_min);
    for (long t = t1; t < t2; ++t) w(key, static_cast<std::size_t>(t)) = std::max(w(key, t), cfg.frame_weight);
  }
  return w;
}

LossLabels make_labels(const NoteSequence& seq, const RollConfig& roll, const LossConfig& cfg) {
  cfg.validate();
  const auto rolls = quantize(seq, roll);
  RollConfig fixed = roll;
  fixed.num_frames = rolls.frames.values.cols();
  LossLabels labels;
  labels.onset = quantize(truncate_for_onset_labels(seq, cfg.onset_length), fixed).frames.values;
  labels.frames = rolls.frames.values;
  labels.frame_weights = frame_weight_roll(seq, fixed, cfg);
  auto prolonged = prolong_onsets(rolls.onset, rolls.velocity);
  labels.onset3 = std::move(prolonged.onset.values);
  labels.velocity3 = std::move(prolonged.velocity.values);
  return labels;
}

double onset_loss(const Matrix& p_onset, const Matrix& i_onset, const LossConfig& cfg) {
  return bce(p_onset, i_onset, cfg.eps);
}

double onset_loss(const Matrix& p_onset, const NoteSequence& seq, const RollConfig& roll, const LossConfig& cfg) {
  RollConfig fixed = roll;
  fixed.num_frames = p_onset.cols();
  const auto labels = quantize(truncate_for_onset_labels(seq, cfg.onset_length), fixed).frames.values;
  return onset_loss(p_onset, labels, cfg);
}

double frame_loss(const Matrix& p_frame, const Matrix& i_frame, const LossConfig& cfg) {
  return bce(p_frame, i_frame, cfg.eps);
}

double frame_loss_weighted(const Matrix& p_frame, const Matrix& i_frame, const Matrix& weights, const LossConfig& cfg) {
  return weighted_bce(p_frame, i_frame, weights, cfg.eps);
}

TotalLoss total_loss(const Matrix& p_onset, const Matrix& p_frame, const LossLabels& labels, const LossConfig& cfg,
                     bool weighted_frames) {
  TotalLoss out;
  out.onset = onset_loss(p_onset, labels.onset, cfg);
  out.frame = weighted_frames ? frame_loss_weighted(p_frame, labels.frames, labels.frame_weights, cfg)
                              : frame_loss(p_frame, labels.frames, cfg);
  out.total = out.onset + out.frame;
  return out;
}

double velocity_masked_loss(const Matrix& pred_velocity, const Matrix& velocity3, const Matrix& onset3,
                            const LossConfig& cfg) {
  return weighted_bce(pred_velocity, velocity3, onset3, cfg.eps);
}

MultitaskLoss multitask_loss(const std::vector<Matrix>& onset_stages, const Matrix& pred_velocity,
                             const LossLabels& labels, const LossConfig& cfg) {
  MultitaskLoss out;
  CompensatedSum sum;
  for (const auto& stage : onset_stages) {
    out.stages.push_back(bce(stage, labels.onset3, cfg.eps));
    sum.add(out.stages.back());
  }
  out.velocity = velocity_masked_loss(pred_velocity, labels.velocity3, labels.onset3, cfg);
  sum.add(cfg.lambda * out.velocity);
  out.total = sum.value();
  return out;
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "onset") return LossKind::Onset;
  if (name == "frame") return LossKind::FrameRaw;
  if (name == "frame-weighted") return LossKind::FrameWeighted;
  if (name == "total") return LossKind::Total;
  if (name == "total-weighted") return LossKind::TotalWeighted;
  if (name == "velocity") return LossKind::VelocityMasked;
  if (name == "multitask") return LossKind::Multitask;
  throw InvalidParam("unknown loss kind '" + name + "'");
}

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Onset: return "onset";
    case LossKind::FrameRaw: return "frame";
    case LossKind::FrameWeighted: return "frame-weighted";
    case LossKind::Total: return "total";
    case LossKind::TotalWeighted: return "total-weighted";
    case LossKind::VelocityMasked: return "velocity";
    case LossKind::Multitask: return "multitask";
  }
  return "unknown";
}

namespace {

void require_count(const std::vector<Matrix>& preds, std::size_t n, LossKind kind) {
  if (preds.size() != n)
    throw InvalidParam(std::string("loss '") + to_string(kind) + "' takes " + std::to_string(n) +
                       " prediction rolls, got " + std::to_string(preds.size()));
}

Matrix bce_grad(const Matrix& pred, const Matrix& target, const Matrix* weight, double eps) {
  require_same_shape(pred, target, "loss_gradient");
  if (weight) require_same_shape(pred, *weight, "loss_gradient");
  Matrix g(pred.rows(), pred.cols());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double w = weight ? weight->data()[i] : 1.0;
    g.data()[i] = w == 0.0 ? 0.0 : w * cell_grad(pred.data()[i], target.data()[i], eps);
  }
  return g;
}

}  // namespace

double evaluate_loss(LossKind kind, const std::vector<Matrix>& preds, const LossLabels& labels, const LossConfig& cfg) {
  switch (kind) {
    case LossKind::Onset:
      require_count(preds, 1, kind);
      return onset_loss(preds[0], labels.onset, cfg);
    case LossKind::FrameRaw:
      require_count(preds, 1, kind);
      return frame_loss(preds[0], labels.frames, cfg);
    case LossKind::FrameWeighted:
      require_count(preds, 1, kind);
      return frame_loss_weighted(preds[0], labels.frames, labels.frame_weights, cfg);
    case LossKind::Total:
    case LossKind::TotalWeighted:
      require_count(preds, 2, kind);
      return total_loss(preds[0], preds[1], labels, cfg, kind == LossKind::TotalWeighted).total;
    case LossKind::VelocityMasked:
      require_count(preds, 1, kind);
      return velocity_masked_loss(preds[0], labels.velocity3, labels.onset3, cfg);
    case LossKind::Multitask: {
      if (preds.size() < 2) throw InvalidParam("loss 'multitask' needs at least one stage and a velocity roll");
      std::vector<Matrix> stages(preds.begin(), preds.end() - 1);
      return multitask_loss(stages, preds.back(), labels, cfg).total;
    }
  }
  throw InvalidParam("unknown loss kind");
}

std::vector<Matrix> loss_gradient(LossKind kind, const std::vector<Matrix>& preds, const LossLabels& labels,
                                  const LossConfig& cfg) {
  switch (kind) {
    case LossKind::Onset:
      require_count(preds, 1, kind);
      return {bce_grad(preds[0], labels.onset, nullptr, cfg.eps)};
    case LossKind::FrameRaw:
      require_count(preds, 1, kind);
      return {bce_grad(preds[0], labels.frames, nullptr, cfg.eps)};
    case LossKind::FrameWeighted:
      require_count(preds, 1, kind);
      return {bce_grad(preds[0], labels.frames, &labels.frame_weights, cfg.eps)};
    case LossKind::Total:
    case LossKind::TotalWeighted:
      require_count(preds, 2, kind);
      return {bce_grad(preds[0], labels.onset, nullptr, cfg.eps),
              bce_grad(preds[1], labels.frames, kind == LossKind::TotalWeighted ? &labels.frame_weights : nullptr,
                       cfg.eps)};
    case LossKind::VelocityMasked:
      require_count(preds, 1, kind);
      return {bce_grad(preds[0], labels.velocity3, &labels.onset3, cfg.eps)};
    case LossKind::Multitask: {
      if (preds.size() < 2) throw InvalidParam("loss 'multitask' needs at least one stage and a velocity roll");
      std::vector<Matrix> grads;
      for (std::size_t i = 0; i + 1 < preds.size(); ++i)
        grads.push_back(bce_grad(preds[i], labels.onset3, nullptr, cfg.eps));
      Matrix v = bce_grad(preds.back(), labels.velocity3, &labels.onset3, cfg.eps);
      for (double& x : v.data()) x *= cfg.lambda;
      grads.push_back(std::move(v));
      return grads;
    }
  }
  throw InvalidParam("unknown loss kind");
}

}  // namespace amt
