#pragma once

#include <string>
#include <vector>

#include "amt/matrix.hpp"
#include "amt/midi.hpp"
#include "amt/pianoroll.hpp"

namespace amt {

struct LossConfig {
  double eps = 1e-7;            // log clamp
  double frame_weight = 2.0;    // w on early-note frames
  double lambda = 1.0;          // velocity-loss weight
  double onset_length = kDefaultOnsetLength;
  int completion_frames = kProlongFrames;  // t2 - t1 for weighted frames

  void validate() const;
};

/// Summed binary cross-entropy, predictions clamped to [eps, 1 - eps].
double bce(const Matrix& pred, const Matrix& target, double eps);

/// Same with a per-cell weight (frame weighting, masking).
double weighted_bce(const Matrix& pred, const Matrix& target, const Matrix& weight, double eps);

/// Ground truth derived from one NoteSequence at the prediction resolution.
struct LossLabels {
  Matrix onset;          // I_onset: frames of notes truncated to onset_length
  Matrix frames;         // I_frame
  Matrix frame_weights;  // w on [t1, t2) of every note, 1 elsewhere
  Matrix onset3;         // 1_o3
  Matrix velocity3;      // R_V3
};

LossLabels make_labels(const NoteSequence& seq, const RollConfig& roll, const LossConfig& cfg);

/// Weight roll: `frame_weight` on frames [t1, min(t1 + completion_frames, t3))
/// of every note, 1 elsewhere; overlapping notes take the larger weight.
Matrix frame_weight_roll(const NoteSequence& seq, const RollConfig& roll, const LossConfig& cfg);

double onset_loss(const Matrix& p_onset, const Matrix& i_onset, const LossConfig& cfg);
double onset_loss(const Matrix& p_onset, const NoteSequence& seq, const RollConfig& roll, const LossConfig& cfg);

double frame_loss(const Matrix& p_frame, const Matrix& i_frame, const LossConfig& cfg);
double frame_loss_weighted(const Matrix& p_frame, const Matrix& i_frame, const Matrix& weights,
                           const LossConfig& cfg);

struct TotalLoss {
  double onset = 0.0;
  double frame = 0.0;
  double total = 0.0;
};

TotalLoss total_loss(const Matrix& p_onset, const Matrix& p_frame, const LossLabels& labels, const LossConfig& cfg,
                     bool weighted_frames);

/// Masked velocity cross-entropy: cells outside `onset3` contribute nothing.
double velocity_masked_loss(const Matrix& pred_velocity, const Matrix& velocity3, const Matrix& onset3,
                            const LossConfig& cfg);

struct MultitaskLoss {
  std::vector<double> stages;
  double velocity = 0.0;  // unweighted
  double total = 0.0;     // sum(stages) + lambda * velocity
};

MultitaskLoss multitask_loss(const std::vector<Matrix>& onset_stages, const Matrix& pred_velocity,
                             const LossLabels& labels, const LossConfig& cfg);

enum class LossKind { Onset, FrameRaw, FrameWeighted, Total, TotalWeighted, VelocityMasked, Multitask };

LossKind loss_kind_from_string(const std::string& name);
const char* to_string(LossKind kind);

/// Predictions a loss reads, in a fixed order per kind:
///   Onset: {P_onset}; Frame*: {P_frame}; Total*: {P_onset, P_frame};
///   VelocityMasked: {R_V}; Multitask: {stage 1..n, R_V}.
double evaluate_loss(LossKind kind, const std::vector<Matrix>& preds, const LossLabels& labels,
                     const LossConfig& cfg);

/// Analytic d loss / d pred, one matrix per prediction in the order above.
/// Cells where the clamp is active or the mask is zero get exactly 0.
std::vector<Matrix> loss_gradient(LossKind kind, const std::vector<Matrix>& preds, const LossLabels& labels,
                                  const LossConfig& cfg);

}  // namespace amt
