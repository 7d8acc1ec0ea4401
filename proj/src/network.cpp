#include "amt/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include "amt/error.hpp"
#include "amt/parallel.hpp"
#include "json.hpp"

namespace amt::nn {

namespace {

std::string dims_string(const std::vector<std::uint32_t>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + ")";
}

void require_dims(const Param& p, std::initializer_list<std::size_t> dims, const char* what) {
  bool ok = p.dims.size() == dims.size();
  std::size_t i = 0;
  for (std::size_t d : dims) ok = ok && p.dims[i++] == d;
  if (!ok) {
    std::string expected = "(";
    i = 0;
    for (std::size_t d : dims) expected += (i++ ? "," : "") + std::to_string(d);
    throw ShapeError(std::string(what) + ": parameter shape " + p.shape_string() + " vs expected " + expected + ")");
  }
}

}  // namespace

std::string Tensor::shape_string() const {
  return "(" + std::to_string(channels) + "," + std::to_string(height) + "," + std::to_string(width) + ")";
}

std::string Param::shape_string() const { return dims_string(dims); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Ops

Tensor conv2d(const Tensor& x, const Param& weight, const Param* bias, ConvOptions opt, int threads) {
  if (weight.dims.size() != 4)
    throw ShapeError("conv2d: weight must be rank 4, got " + weight.shape_string());
  const std::size_t cout = weight.dims[0], cin = weight.dims[1], kh = weight.dims[2], kw = weight.dims[3];
  if (x.channels != cin)
    throw ShapeError("conv2d: input " + x.shape_string() + " vs weight " + weight.shape_string());
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd, got " + weight.shape_string());
  if (bias) require_dims(*bias, {cout}, "conv2d bias");
  if (opt.dilation_h < 1 || opt.dilation_w < 1) throw InvalidParam("conv2d: dilation must be >= 1");

  const long H = static_cast<long>(x.height), W = static_cast<long>(x.width);
  const long ph = opt.dilation_h * static_cast<long>(kh - 1) / 2;
  const long pw = opt.dilation_w * static_cast<long>(kw - 1) / 2;
  Tensor out(cout, x.height, x.width);
  const std::size_t plane = x.height * x.width;

  parallel_for(cout, threads, [&](std::size_t co) {
    double* dst = out.data.data() + co * plane;
    if (bias) std::fill(dst, dst + plane, static_cast<double>(bias->values[co]));
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* src = x.data.data() + ci * plane;
      for (std::size_t i = 0; i < kh; ++i) {
        const long dh = static_cast<long>(i) * opt.dilation_h - ph;
        const long h0 = std::max(0L, -dh), h1 = std::min(H, H - dh);
        for (std::size_t j = 0; j < kw; ++j) {
          const double wt = weight.values[((co * cin + ci) * kh + i) * kw + j];
          if (wt == 0.0) continue;
          const long dw = static_cast<long>(j) * opt.dilation_w - pw;
          const long t0 = std::max(0L, -dw), t1 = std::min(W, W - dw);
          for (long h = h0; h < h1; ++h) {
            double* o = dst + h * W;
            const double* s = src + (h + dh) * W + dw;
            for (long t = t0; t < t1; ++t) o[t] += wt * s[t];
          }
        }
      }
    }
  });
  return out;
}

Tensor depthwise_conv(const Tensor& x, const Param& weight, const Param& bias, int threads) {
  if (weight.dims.size() != 3 || weight.dims[0] != x.channels || weight.dims[2] != x.height)
    throw ShapeError("depthwise_conv: input " + x.shape_string() + " vs weight " + weight.shape_string());
  const std::size_t C = x.channels, K = weight.dims[1], H = x.height, W = x.width;
  require_dims(bias, {C, K}, "depthwise_conv bias");
  Tensor out(C, K, W);
  parallel_for(C * K, threads, [&](std::size_t ck) {
    const std::size_t c = ck / K, k = ck % K;
    double* dst = &out.at(c, k, 0);
    std::fill(dst, dst + W, static_cast<double>(bias.values[c * K + k]));
    for (std::size_t h = 0; h < H; ++h) {
      const double wt = weight.values[(c * K + k) * H + h];
      if (wt == 0.0) continue;
      const double* src = &x.at(c, h, 0);
      for (std::size_t t = 0; t < W; ++t) dst[t] += wt * src[t];
    }
  });
  return out;
}

Tensor sbn(const Tensor& x, const Param& gamma, const Param& beta, const Param& mean, const Param& var, double eps) {
  for (const Param* p : {&gamma, &beta, &mean, &var})
    if (p->dims.size() != 2 || p->dims[0] != x.channels || p->dims[1] != x.height)
      throw ShapeError("sbn: input " + x.shape_string() + " vs statistics " + p->shape_string());
  Tensor out = x;
  for (std::size_t c = 0; c < x.channels; ++c) {
    for (std::size_t h = 0; h < x.height; ++h) {
      const std::size_t i = c * x.height + h;
      const double scale = gamma.values[i] / std::sqrt(static_cast<double>(var.values[i]) + eps);
      const double shift = beta.values[i] - mean.values[i] * scale;
      double* row = &out.at(c, h, 0);
      for (std::size_t t = 0; t < x.width; ++t) row[t] = row[t] * scale + shift;
    }
  }
  return out;
}

Tensor channel_attention(const Tensor& x, const Param& fc1_w, const Param& fc1_b, const Param& fc2_w,
                         const Param& fc2_b, double slope) {
  const std::size_t C = x.channels;
  if (fc1_w.dims.size() != 2 || fc1_w.dims[1] != C)
    throw ShapeError("channel_attention: input " + x.shape_string() + " vs fc1 " + fc1_w.shape_string());
  const std::size_t R = fc1_w.dims[0];
  require_dims(fc1_b, {R}, "channel_attention fc1 bias");
  require_dims(fc2_w, {C, R}, "channel_attention fc2");
  require_dims(fc2_b, {C}, "channel_attention fc2 bias");

  const std::size_t plane = x.height * x.width;
  std::vector<double> pooled(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x.data[c * plane + i];
    pooled[c] = plane ? acc / static_cast<double>(plane) : 0.0;
  }
  std::vector<double> hidden(R);
  for (std::size_t r = 0; r < R; ++r) {
    double acc = fc1_b.values[r];
    for (std::size_t c = 0; c < C; ++c) acc += fc1_w.values[r * C + c] * pooled[c];
    hidden[r] = acc >= 0 ? acc : acc * slope;
  }
  Tensor out = x;
  for (std::size_t c = 0; c < C; ++c) {
    double acc = fc2_b.values[c];
    for (std::size_t r = 0; r < R; ++r) acc += fc2_w.values[c * R + r] * hidden[r];
    const double gate = sigmoid(acc);
    for (std::size_t i = 0; i < plane; ++i) out.data[c * plane + i] *= gate;
  }
  return out;
}

void leaky_relu_inplace(Tensor& x, double slope) {
  for (double& v : x.data)
    if (v < 0) v *= slope;
}

Tensor leaky_relu(Tensor x, double slope) {
  leaky_relu_inplace(x, slope);
  return x;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError("concat_channels: " + a.shape_string() + " vs " + b.shape_string());
  Tensor out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width)
    throw ShapeError("add: " + a.shape_string() + " vs " + b.shape_string());
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

// ---------------------------------------------------------------------------
// Spec

void ModelSpec::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw InvalidParam(std::string("model spec: ") + what + " must be >= 1");
  };
  positive(input_channels, "input_channels");
  positive(input_height, "input_height");
  positive(num_keys, "num_keys");
  positive(stem_channels, "stem_channels");
  positive(transform_channels, "transform_channels");
  positive(key_channels, "key_channels");
  positive(num_onset_stages, "num_onset_stages");
  positive(attention_reduction, "attention_reduction");
  if (stem_kernel_freq % 2 == 0 || stem_kernel_time % 2 == 0 || stem_kernel_freq < 1 || stem_kernel_time < 1)
    throw InvalidParam("model spec: stem kernel extents must be odd");

  auto check_block = [&](const BlockSpec& b, int channels, bool key_side) {
    if (b.kernel_freq < 1 || b.kernel_time < 1 || b.kernel_freq % 2 == 0 || b.kernel_time % 2 == 0)
      throw InvalidParam("model spec: block kernel extents must be odd");
    if (key_side && b.kernel_freq != 1)
      throw InvalidParam("model spec: key-side blocks must have kernel_freq 1 (no vertical extent)");
    if (channels < 2) throw InvalidParam("model spec: residual blocks need at least 2 channels");
    if (b.type == BlockType::Cam) {
      if (b.dilations.empty()) throw InvalidParam("model spec: CAM block needs at least one dilation");
      for (int d : b.dilations)
        if (d < 1) throw InvalidParam("model spec: dilations must be >= 1");
    }
  };
  for (const auto& b : body) check_block(b, stem_channels, false);
  for (const auto& b : stage_blocks) check_block(b, key_channels, true);
  if (!(leaky_slope >= 0.0)) throw InvalidParam("model spec: leaky_slope must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidParam("model spec: dropout must be in [0, 1)");
  if (!(bn_eps > 0.0)) throw InvalidParam("model spec: bn_eps must be positive");
}

ModelSpec ModelSpec::toy() {
  ModelSpec s;
  s.name = "toy";
  s.stem_channels = 16;
  s.body = {{BlockType::ResidualBottleneck, 3, 3, {}}};
  s.transform_channels = 2;
  s.key_channels = 8;
  s.stage_blocks = {{BlockType::ResidualBottleneck, 1, 3, {}},
                    {BlockType::ResidualBottleneck, 1, 3, {}},
                    {BlockType::Cam, 1, 3, {1, 2, 4}}};
  return s;
}

ModelSpec ModelSpec::reference() {
  ModelSpec s;
  s.name = "reference";
  s.stem_channels = 32;
  s.body = {{BlockType::ResidualBottleneck, 3, 3, {}},
            {BlockType::ResidualBottleneck, 3, 3, {}},
            {BlockType::Cam, 3, 3, {1, 2, 4}}};
  s.transform_channels = 32;
  s.key_channels = 240;
  s.stage_blocks = {{BlockType::ResidualBottleneck, 1, 3, {}},
                    {BlockType::ResidualBottleneck, 1, 3, {}},
                    {BlockType::Cam, 1, 3, {1, 2, 4}}};
  return s;
}

ModelSpec ModelSpec::by_name(const std::string& name) {
  if (name == "toy") return toy();
  if (name == "reference") return reference();
  throw InvalidParam("unknown model spec '" + name + "' (expected toy or reference)");
}

namespace {

nlohmann::json block_to_json(const BlockSpec& b) {
  nlohmann::json j;
  j["type"] = b.type == BlockType::Cam ? "cam" : "bottleneck";
  j["kernel"] = {b.kernel_freq, b.kernel_time};
  if (b.type == BlockType::Cam) j["dilations"] = b.dilations;
  return j;
}

BlockSpec block_from_json(const nlohmann::json& j) {
  BlockSpec b;
  const std::string type = j.at("type").get<std::string>();
  if (type == "cam")
    b.type = BlockType::Cam;
  else if (type == "bottleneck")
    b.type = BlockType::ResidualBottleneck;
  else
    throw InvalidParam("model spec: unknown block type '" + type + "'");
  const auto kernel = j.at("kernel").get<std::vector<int>>();
  if (kernel.size() != 2) throw InvalidParam("model spec: block kernel must be [freq, time]");
  b.kernel_freq = kernel[0];
  b.kernel_time = kernel[1];
  if (b.type == BlockType::Cam) b.dilations = j.at("dilations").get<std::vector<int>>();
  return b;
}

}  // namespace

std::string ModelSpec::to_json() const {
  nlohmann::json j;
  j["format"] = "amt-model-spec";
  j["version"] = 1;
  j["name"] = name;
  j["input_channels"] = input_channels;
  j["input_height"] = input_height;
  j["num_keys"] = num_keys;
  j["stem"] = {{"channels", stem_channels}, {"kernel", {stem_kernel_freq, stem_kernel_time}}};
  j["body"] = nlohmann::json::array();
  for (const auto& b : body) j["body"].push_back(block_to_json(b));
  j["transform_channels"] = transform_channels;
  j["key_channels"] = key_channels;
  j["stage_blocks"] = nlohmann::json::array();
  for (const auto& b : stage_blocks) j["stage_blocks"].push_back(block_to_json(b));
  j["num_onset_stages"] = num_onset_stages;
  j["attention_reduction"] = attention_reduction;
  j["dropout"] = dropout;
  j["leaky_slope"] = leaky_slope;
  j["bn_eps"] = bn_eps;
  return j.dump(2);
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model spec: ") + e.what(), e.byte);
  }
  try {
    if (j.value("format", "") != "amt-model-spec") throw InvalidParam("model spec: missing format tag");
    if (j.at("version").get<int>() != 1)
      throw InvalidParam("model spec: unsupported version " + j.at("version").dump());
    ModelSpec s;
    s.name = j.value("name", "custom");
    s.input_channels = j.value("input_channels", 2);
    s.input_height = j.value("input_height", 229);
    s.num_keys = j.value("num_keys", 88);
    const auto& stem = j.at("stem");
    s.stem_channels = stem.at("channels").get<int>();
    const auto sk = stem.at("kernel").get<std::vector<int>>();
    if (sk.size() != 2) throw InvalidParam("model spec: stem kernel must be [freq, time]");
    s.stem_kernel_freq = sk[0];
    s.stem_kernel_time = sk[1];
    for (const auto& b : j.at("body")) s.body.push_back(block_from_json(b));
    s.transform_channels = j.at("transform_channels").get<int>();
    s.key_channels = j.at("key_channels").get<int>();
    for (const auto& b : j.at("stage_blocks")) s.stage_blocks.push_back(block_from_json(b));
    s.num_onset_stages = j.value("num_onset_stages", 3);
    s.attention_reduction = j.value("attention_reduction", 4);
    s.dropout = j.value("dropout", 0.15);
    s.leaky_slope = j.value("leaky_slope", 0.1);
    s.bn_eps = j.value("bn_eps", 1e-5);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Parameter layout

namespace {

using Dims = std::vector<std::uint32_t>;

Dims d(std::initializer_list<int> v) {
  Dims out;
  for (int x : v) out.push_back(static_cast<std::uint32_t>(x));
  return out;
}

void add_conv(std::vector<ParamShape>& out, const std::string& prefix, int cout, int cin, int kh, int kw) {
  out.push_back({prefix + ".weight", d({cout, cin, kh, kw})});
  out.push_back({prefix + ".bias", d({cout})});
}

void add_sbn(std::vector<ParamShape>& out, const std::string& prefix, int c, int h) {
  for (const char* s : {".gamma", ".beta", ".mean", ".var"}) out.push_back({prefix + s, d({c, h})});
}

int bottleneck_width(int channels) { return std::max(1, channels / 2); }

int attention_width(int channels, int reduction) { return std::max(1, channels / reduction); }

void add_block(std::vector<ParamShape>& out, const std::string& prefix, const BlockSpec& b, int c, int reduction) {
  const int m = bottleneck_width(c);
  add_conv(out, prefix + ".reduce", m, c, 1, 1);
  if (b.type == BlockType::ResidualBottleneck) {
    add_conv(out, prefix + ".conv", m, m, b.kernel_freq, b.kernel_time);
    add_conv(out, prefix + ".expand", c, m, 1, 1);
    return;
  }
  for (std::size_t i = 0; i < b.dilations.size(); ++i)
    add_conv(out, prefix + ".branch" + std::to_string(i), m, m, b.kernel_freq, b.kernel_time);
  add_conv(out, prefix + ".merge", c, m * static_cast<int>(b.dilations.size()), 1, 1);
  const int r = attention_width(c, reduction);
  out.push_back({prefix + ".attention.fc1.weight", d({r, c})});
  out.push_back({prefix + ".attention.fc1.bias", d({r})});
  out.push_back({prefix + ".attention.fc2.weight", d({c, r})});
  out.push_back({prefix + ".attention.fc2.bias", d({c})});
}

void add_head(std::vector<ParamShape>& out, const std::string& prefix, const ModelSpec& s, int in_channels) {
  add_conv(out, prefix + ".in", s.key_channels, in_channels, 1, 1);
  for (std::size_t i = 0; i < s.stage_blocks.size(); ++i)
    add_block(out, prefix + ".blocks." + std::to_string(i), s.stage_blocks[i], s.key_channels, s.attention_reduction);
  add_sbn(out, prefix + ".sbn", s.key_channels, s.num_keys);
  add_conv(out, prefix + ".out", 1, s.key_channels, 1, 1);
}

std::string stage_prefix(int s) { return "onset." + std::to_string(s); }

}  // namespace

std::vector<ParamShape> parameter_shapes(const ModelSpec& s) {
  s.validate();
  std::vector<ParamShape> out;
  add_sbn(out, "input_sbn", s.input_channels, s.input_height);
  add_conv(out, "stem.conv0", s.stem_channels, s.input_channels, s.stem_kernel_freq, s.stem_kernel_time);
  add_conv(out, "stem.conv1", s.stem_channels, s.stem_channels, s.stem_kernel_freq, s.stem_kernel_time);
  for (std::size_t i = 0; i < s.body.size(); ++i)
    add_block(out, "body." + std::to_string(i), s.body[i], s.stem_channels, s.attention_reduction);
  add_conv(out, "transform.reduce", s.transform_channels, s.stem_channels, 1, 1);
  out.push_back({"transform.depthwise.weight", d({s.transform_channels, s.num_keys, s.input_height})});
  out.push_back({"transform.depthwise.bias", d({s.transform_channels, s.num_keys})});
  add_conv(out, "transform.expand", s.key_channels, s.transform_channels, 1, 1);
  for (int st = 1; st <= s.num_onset_stages; ++st)
    add_head(out, stage_prefix(st), s, s.key_channels + (st > 1 ? 1 : 0));
  add_head(out, "velocity", s, s.key_channels + 1);
  return out;
}

std::size_t count_params(const ModelSpec& spec) {
  std::size_t total = 0;
  for (const auto& p : parameter_shapes(spec)) {
    std::size_t n = 1;
    for (auto x : p.dims) n *= x;
    total += n;
  }
  return total;
}

std::size_t count_params(const ModelWeights& w) {
  std::size_t total = 0;
  for (const auto& [name, p] : w) total += p.size();
  return total;
}

int block_receptive_field(const BlockSpec& block) {
  int radius = (block.kernel_time - 1) / 2;
  if (block.type == BlockType::Cam) {
    int widest = 0;
    for (int dil : block.dilations) widest = std::max(widest, dil * (block.kernel_time - 1) / 2);
    radius = widest;
  }
  return 1 + 2 * radius;
}

// ---------------------------------------------------------------------------
// Weights

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::size_t product(const Dims& dims) {
  std::size_t n = 1;
  for (auto x : dims) n *= x;
  return n;
}

}  // namespace

ModelWeights zero_weights(const ModelSpec& spec) {
  ModelWeights w;
  for (auto& shape : parameter_shapes(spec))
    w[shape.name] = Param{shape.dims, std::vector<float>(product(shape.dims), 0.0f)};
  return w;
}

ModelWeights random_weights(const ModelSpec& spec, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double bound) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return static_cast<float>((2.0 * u - 1.0) * bound);
  };
  ModelWeights w;
  for (auto& shape : parameter_shapes(spec)) {
    Param p{shape.dims, std::vector<float>(product(shape.dims))};
    const auto& n = shape.name;
    if (ends_with(n, ".gamma") || ends_with(n, ".var")) {
      std::fill(p.values.begin(), p.values.end(), 1.0f);
    } else if (ends_with(n, ".beta") || ends_with(n, ".mean")) {
      std::fill(p.values.begin(), p.values.end(), 0.0f);
    } else if (ends_with(n, ".bias")) {
      for (auto& v : p.values) v = uniform(0.1 * scale);
    } else {
      std::size_t fan_in = 1;
      if (p.dims.size() == 4)
        fan_in = std::size_t{p.dims[1]} * p.dims[2] * p.dims[3];
      else if (p.dims.size() >= 2)
        fan_in = p.dims.back();
      const double bound = scale * std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& v : p.values) v = uniform(bound);
    }
    w[n] = std::move(p);
  }
  return w;
}

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class LeReader {
public:
  explicit LeReader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint64_t get(int bytes, const char* what) {
    if (b_.size() - pos_ < static_cast<std::size_t>(bytes))
      throw WeightFormatError(std::string("truncated weight file reading ") + what + " at byte " + std::to_string(pos_));
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = v << 8 | b_[pos_ + static_cast<std::size_t>(i)];
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string str(std::size_t n) {
    if (b_.size() - pos_ < n) throw WeightFormatError("truncated tensor name at byte " + std::to_string(pos_));
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> save_weights(const ModelWeights& w) {
  std::vector<std::uint8_t> out = {'A', 'M', 'T', 'W'};
  put_le(out, kWeightFormatVersion, 4);
  put_le(out, w.size(), 4);
  for (const auto& [name, p] : w) {
    if (name.size() > 0xffff) throw SerializeError("tensor name too long: " + name);
    if (p.dims.size() > 0xff) throw SerializeError("tensor rank too large: " + name);
    if (product(p.dims) != p.values.size()) throw SerializeError("tensor " + name + " data does not match its dims");
    put_le(out, name.size(), 2);
    out.insert(out.end(), name.begin(), name.end());
    put_le(out, p.dims.size(), 1);
    for (auto dim : p.dims) put_le(out, dim, 4);
    for (float v : p.values) put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  return out;
}

ModelWeights load_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "AMTW", 4) != 0)
    throw WeightFormatError("bad magic: not an AMTW weight file");
  LeReader in(bytes.subspan(4));
  const auto version = in.get(4, "version");
  if (version != kWeightFormatVersion) throw WeightFormatError("unsupported weight file version " + std::to_string(version));
  const auto count = in.get(4, "tensor count");
  ModelWeights w;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = in.get(2, "name length");
    std::string name = in.str(len);
    const auto rank = in.get(1, "rank");
    Param p;
    std::size_t n = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      p.dims.push_back(static_cast<std::uint32_t>(in.get(4, "dims")));
      n *= p.dims.back();
    }
    if (n > bytes.size()) throw WeightFormatError("tensor " + name + " claims more data than the file holds");
    p.values.resize(n);
    for (auto& v : p.values) v = std::bit_cast<float>(static_cast<std::uint32_t>(in.get(4, "tensor data")));
    if (w.contains(name)) throw WeightFormatError("duplicate tensor " + name);
    w.emplace(std::move(name), std::move(p));
  }
  if (!in.done()) throw WeightFormatError("trailing bytes after last tensor");
  return w;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelSpec spec, ModelWeights weights) : spec_(std::move(spec)), weights_(std::move(weights)) {
  const auto shapes = parameter_shapes(spec_);
  std::set<std::string> expected;
  for (const auto& s : shapes) {
    expected.insert(s.name);
    auto it = weights_.find(s.name);
    if (it == weights_.end()) throw WeightMismatch("missing parameter " + s.name + " " + dims_string(s.dims));
    if (it->second.dims != s.dims)
      throw WeightMismatch("parameter " + s.name + " has shape " + it->second.shape_string() + ", spec needs " +
                           dims_string(s.dims));
    if (it->second.values.size() != product(s.dims)) throw WeightMismatch("parameter " + s.name + " data size mismatch");
  }
  for (const auto& [name, p] : weights_)
    if (!expected.contains(name)) throw WeightMismatch("unexpected parameter " + name);
}

const Param& Model::p(const std::string& name) const { return weights_.at(name); }

Tensor Model::conv(const Tensor& x, const std::string& prefix, ConvOptions opt, int threads) const {
  return conv2d(x, p(prefix + ".weight"), &p(prefix + ".bias"), opt, threads);
}

Tensor Model::residual_bottleneck(const Tensor& x, const std::string& prefix, const BlockSpec& b, int threads) const {
  const double slope = spec_.leaky_slope;
  Tensor h = leaky_relu(conv(x, prefix + ".reduce", {}, threads), slope);
  h = leaky_relu(conv(h, prefix + ".conv", {}, threads), slope);
  h = dropout_inference(h);
  (void)b;
  return add(x, conv(h, prefix + ".expand", {}, threads));
}

Tensor Model::cam_block(const Tensor& x, const std::string& prefix, const BlockSpec& b, int threads) const {
  const double slope = spec_.leaky_slope;
  const Tensor h = leaky_relu(conv(x, prefix + ".reduce", {}, threads), slope);
  Tensor merged;
  for (std::size_t i = 0; i < b.dilations.size(); ++i) {
    Tensor branch = leaky_relu(conv(h, prefix + ".branch" + std::to_string(i), {1, b.dilations[i]}, threads), slope);
    merged = i == 0 ? std::move(branch) : concat_channels(merged, branch);
  }
  Tensor y = conv(merged, prefix + ".merge", {}, threads);
  y = channel_attention(y, p(prefix + ".attention.fc1.weight"), p(prefix + ".attention.fc1.bias"),
                        p(prefix + ".attention.fc2.weight"), p(prefix + ".attention.fc2.bias"), slope);
  return add(x, y);
}

Tensor Model::block(const Tensor& x, const std::string& prefix, const BlockSpec& b, int threads) const {
  return b.type == BlockType::Cam ? cam_block(x, prefix, b, threads) : residual_bottleneck(x, prefix, b, threads);
}

Tensor Model::head(const Tensor& in, const std::string& prefix, int threads) const {
  Tensor h = leaky_relu(conv(in, prefix + ".in", {}, threads), spec_.leaky_slope);
  for (std::size_t i = 0; i < spec_.stage_blocks.size(); ++i)
    h = block(h, prefix + ".blocks." + std::to_string(i), spec_.stage_blocks[i], threads);
  h = sbn(h, p(prefix + ".sbn.gamma"), p(prefix + ".sbn.beta"), p(prefix + ".sbn.mean"), p(prefix + ".sbn.var"),
          spec_.bn_eps);
  return conv(h, prefix + ".out", {}, threads);
}

NetworkOutput Model::forward(const SpectroInput& input, const ForwardOptions& opt) const {
  const std::size_t H = static_cast<std::size_t>(spec_.input_height);
  if (input.x.rows() != H || !input.x.same_shape(input.dx))
    throw ShapeError("forward: input planes " + input.x.shape_string() + " / " + input.dx.shape_string() +
                     " vs expected " + std::to_string(H) + "xT");
  if (spec_.input_channels != 2) throw ShapeError("forward: spectrogram input provides 2 channels");
  const std::size_t T = input.x.cols();
  const int threads = opt.threads;
  const double slope = spec_.leaky_slope;

  Tensor x(2, H, T);
  std::copy(input.x.data().begin(), input.x.data().end(), x.data.begin());
  std::copy(input.dx.data().begin(), input.dx.data().end(), x.data.begin() + static_cast<std::ptrdiff_t>(H * T));

  x = sbn(x, p("input_sbn.gamma"), p("input_sbn.beta"), p("input_sbn.mean"), p("input_sbn.var"), spec_.bn_eps);
  x = leaky_relu(conv(x, "stem.conv0", {}, threads), slope);
  x = leaky_relu(conv(x, "stem.conv1", {}, threads), slope);
  x = dropout_inference(x);
  for (std::size_t i = 0; i < spec_.body.size(); ++i) x = block(x, "body." + std::to_string(i), spec_.body[i], threads);

  Tensor z = leaky_relu(conv(x, "transform.reduce", {}, threads), slope);
  z = depthwise_conv(z, p("transform.depthwise.weight"), p("transform.depthwise.bias"), threads);
  Tensor features = leaky_relu(conv(z, "transform.expand", {}, threads), slope);
  features = dropout_inference(features);

  RollConfig rc;
  rc.delta_t = opt.delta_t;
  rc.pitch_min = kPianoPitchMin;
  rc.pitch_max = kPianoPitchMin + spec_.num_keys - 1;
  rc.num_frames = T;
  auto to_roll = [&](const Tensor& logits) {
    PianoRoll roll{Matrix(logits.height, logits.width), rc, RollKind::Prediction};
    for (std::size_t i = 0; i < logits.data.size(); ++i) roll.values.data()[i] = sigmoid(logits.data[i]);
    return roll;
  };

  const int stages = opt.num_stages <= 0 ? spec_.num_onset_stages : std::min(opt.num_stages, spec_.num_onset_stages);
  NetworkOutput out;
  Tensor logits;
  for (int s = 1; s <= stages; ++s) {
    logits = head(s == 1 ? features : concat_channels(features, logits), stage_prefix(s), threads);
    out.onset_stages.push_back(to_roll(logits));
  }
  out.velocity = to_roll(head(concat_channels(features, logits), "velocity", threads));
  return out;
}

}  // namespace amt::nn
