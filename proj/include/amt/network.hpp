#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "amt/dsp.hpp"
#include "amt/pianoroll.hpp"

namespace amt::nn {

/// Activations: channels x height x width, row-major. Height is frequency
/// before the domain transform and piano key after it; width is time.
struct Tensor {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t h, std::size_t w) { return data[(c * height + h) * width + w]; }
  const double& at(std::size_t c, std::size_t h, std::size_t w) const { return data[(c * height + h) * width + w]; }
  std::string shape_string() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Stored parameter: dims plus f32 values, as kept in weight files.
struct Param {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t size() const { return values.size(); }
  std::string shape_string() const;
};

// ---------------------------------------------------------------------------
// Primitive ops. Every op preserves the time axis.

struct ConvOptions {
  int dilation_h = 1;
  int dilation_w = 1;
};

/// Zero-padded "same" 2-D convolution (cross-correlation). weight is
/// (out, in, kh, kw) with odd kernel extents; bias is (out) or null.
Tensor conv2d(const Tensor& x, const Param& weight, const Param* bias, ConvOptions opt = {}, int threads = 1);

/// Per-channel dense map along the height axis: weight (C, out_h, in_h),
/// bias (C, out_h). This is the single frequency-to-key domain transform.
Tensor depthwise_conv(const Tensor& x, const Param& weight, const Param& bias, int threads = 1);

/// Sub-spectral batch norm with running statistics, one affine
/// normalization per (channel, height) index. All params are (C, H).
Tensor sbn(const Tensor& x, const Param& gamma, const Param& beta, const Param& mean, const Param& var,
           double eps = 1e-5);

/// Squeeze-excitation gate: global average over (height, time), fc1 (R, C),
/// leaky ReLU, fc2 (C, R), sigmoid, per-channel scaling.
Tensor channel_attention(const Tensor& x, const Param& fc1_w, const Param& fc1_b, const Param& fc2_w,
                         const Param& fc2_b, double slope);

void leaky_relu_inplace(Tensor& x, double slope);
Tensor leaky_relu(Tensor x, double slope);

/// Dropout at inference time is the identity.
inline const Tensor& dropout_inference(const Tensor& x) { return x; }

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);

double sigmoid(double z);

// ---------------------------------------------------------------------------
// Model description

enum class BlockType { ResidualBottleneck, Cam };

struct BlockSpec {
  BlockType type = BlockType::ResidualBottleneck;
  int kernel_freq = 1;
  int kernel_time = 3;
  std::vector<int> dilations;  // CAM only; one parallel branch per entry
};

struct ModelSpec {
  std::string name = "custom";
  int input_channels = 2;
  int input_height = 229;
  int num_keys = 88;

  int stem_channels = 16;
  int stem_kernel_freq = 3;
  int stem_kernel_time = 3;
  std::vector<BlockSpec> body;  // spectrogram side, before the transform

  int transform_channels = 2;
  int key_channels = 8;
  std::vector<BlockSpec> stage_blocks;  // per onset stage and velocity head
  int num_onset_stages = 3;
  int attention_reduction = 4;

  double dropout = 0.15;
  double leaky_slope = 0.1;
  double bn_eps = 1e-5;

  /// Throws InvalidParam when the structural constraints are broken (for
  /// example a key-side block with a vertical kernel).
  void validate() const;

  static ModelSpec toy();
  static ModelSpec reference();
  static ModelSpec by_name(const std::string& name);

  std::string to_json() const;
  static ModelSpec from_json(const std::string& text);
};

struct ParamShape {
  std::string name;
  std::vector<std::uint32_t> dims;
};

/// Every parameter the spec needs, in a fixed order.
std::vector<ParamShape> parameter_shapes(const ModelSpec& spec);
std::size_t count_params(const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Weights

using ModelWeights = std::map<std::string, Param>;

std::size_t count_params(const ModelWeights& w);

/// All-zero weights (including batch-norm statistics).
ModelWeights zero_weights(const ModelSpec& spec);

/// Deterministic pseudo-random weights for fixtures: He-uniform
/// convolutions, unit-variance batch-norm statistics.
ModelWeights random_weights(const ModelSpec& spec, std::uint64_t seed, double scale = 1.0);

/// "AMTW", version, count, then per tensor: u16 name length, name, u8 rank,
/// u32 dims, f32 data. Integers and floats are little-endian.
std::vector<std::uint8_t> save_weights(const ModelWeights& w);
ModelWeights load_weights(std::span<const std::uint8_t> bytes);

inline constexpr std::uint32_t kWeightFormatVersion = 1;

// ---------------------------------------------------------------------------
// Inference

struct NetworkOutput {
  std::vector<PianoRoll> onset_stages;  // refined in order; last is the final
  PianoRoll velocity;
};

struct ForwardOptions {
  int threads = 1;
  int num_stages = 0;  // 0 runs every onset stage
  double delta_t = 0.024;
};

class Model {
public:
  /// Throws WeightMismatch when a parameter is missing, duplicated, extra,
  /// or has the wrong shape.
  Model(ModelSpec spec, ModelWeights weights);

  const ModelSpec& spec() const { return spec_; }
  const ModelWeights& weights() const { return weights_; }

  NetworkOutput forward(const SpectroInput& input, const ForwardOptions& opt = {}) const;

  Tensor residual_bottleneck(const Tensor& x, const std::string& prefix, const BlockSpec& block,
                             int threads = 1) const;
  Tensor cam_block(const Tensor& x, const std::string& prefix, const BlockSpec& block, int threads = 1) const;

private:
  const Param& p(const std::string& name) const;
  Tensor conv(const Tensor& x, const std::string& prefix, ConvOptions opt, int threads) const;
  Tensor block(const Tensor& x, const std::string& prefix, const BlockSpec& b, int threads) const;
  Tensor head(const Tensor& in, const std::string& prefix, int threads) const;

  ModelSpec spec_;
  ModelWeights weights_;
};

/// Temporal receptive field (in frames) of one block: 1 + 2 * the largest
/// branch radius dilation * (kernel_time - 1) / 2.
int block_receptive_field(const BlockSpec& block);

}  // namespace amt::nn
