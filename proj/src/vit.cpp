// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/vit.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <type_traits>

#include "mixpro/error.hpp"
#include "mixpro/ops.hpp"

namespace mixpro::vit {

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(embed_dim) * mlp_ratio));
}

void ViTConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) +
                      " is not a multiple of patch_size " + std::to_string(patch_size));
  }
  if (heads == 0 || embed_dim == 0 || embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (channels == 0 || depth == 0) throw ConfigError("channels and depth must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw ConfigError("mlp_ratio must be positive");
  if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) {
    throw ConfigError("drop_path_rate must lie in [0, 1)");
  }
}

namespace {

template <typename Params, typename Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  fn(p.patch_weight, "patch_embed.weight", true);
  fn(p.patch_bias, "patch_embed.bias", false);
  fn(p.cls_token, "cls_token", false);
  fn(p.pos_embed, "pos_embed", false);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    fn(b.ln1_gamma, pre + "norm1.weight", false);
    fn(b.ln1_beta, pre + "norm1.bias", false);
    fn(b.q_weight, pre + "attn.q.weight", true);
    fn(b.q_bias, pre + "attn.q.bias", false);
    fn(b.k_weight, pre + "attn.k.weight", true);
    fn(b.k_bias, pre + "attn.k.bias", false);
    fn(b.v_weight, pre + "attn.v.weight", true);
    fn(b.v_bias, pre + "attn.v.bias", false);
    fn(b.proj_weight, pre + "attn.proj.weight", true);
    fn(b.proj_bias, pre + "attn.proj.bias", false);
    fn(b.ln2_gamma, pre + "norm2.weight", false);
    fn(b.ln2_beta, pre + "norm2.bias", false);
    fn(b.fc1_weight, pre + "mlp.fc1.weight", true);
    fn(b.fc1_bias, pre + "mlp.fc1.bias", false);
    fn(b.fc2_weight, pre + "mlp.fc2.weight", true);
    fn(b.fc2_bias, pre + "mlp.fc2.bias", false);
  }
  fn(p.norm_gamma, "norm.weight", false);
  fn(p.norm_beta, "norm.bias", false);
  fn(p.head_weight, "head.weight", true);
  fn(p.head_bias, "head.bias", false);
}

}  // namespace

std::vector<Tensor*> ViTParams::tensors() {
  std::vector<Tensor*> out;
  for_each_tensor(*this, [&](Tensor& t, const std::string&, bool) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> ViTParams::tensors() const {
  std::vector<const Tensor*> out;
  for_each_tensor(*this, [&](const Tensor& t, const std::string&, bool) { out.push_back(&t); });
  return out;
}

std::vector<std::string> ViTParams::names() const {
  std::vector<std::string> out;
  for_each_tensor(*this, [&](const Tensor&, const std::string& n, bool) { out.push_back(n); });
  return out;
}

std::vector<bool> ViTParams::decay_mask() const {
  std::vector<bool> out;
  for_each_tensor(*this, [&](const Tensor&, const std::string&, bool d) { out.push_back(d); });
  return out;
}

std::size_t ViTParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

void ViTParams::set_requires_grad(bool on) {
  for (Tensor* t : tensors()) t->set_requires_grad(on);
}

void ViTParams::zero_grad() {
  for (Tensor* t : tensors()) t->zero_grad();
}

ViTParams init_params(const ViTConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_stream(seed, {kTagInit});
  std::normal_distribution<double> normal(0.0, 0.02);
  auto trunc_normal = [&](ad::Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
      do {
        v = normal(rng);
      } while (std::abs(v) > 0.04);
    }
    return t;
  };
  const std::size_t d = config.embed_dim;
  const std::size_t hidden = config.mlp_hidden();
  ViTParams p;
  p.config = config;
  p.patch_weight = trunc_normal({config.patch_dim(), d});
  p.patch_bias = Tensor({d});
  p.cls_token = trunc_normal({d});
  p.pos_embed = trunc_normal({config.tokens(), d});
  for (std::size_t i = 0; i < config.depth; ++i) {
    BlockParams b;
    b.ln1_gamma = Tensor({d}, 1.0);
    b.ln1_beta = Tensor({d});
    b.q_weight = trunc_normal({d, d});
    b.q_bias = Tensor({d});
    b.k_weight = trunc_normal({d, d});
    b.k_bias = Tensor({d});
    b.v_weight = trunc_normal({d, d});
    b.v_bias = Tensor({d});
    b.proj_weight = trunc_normal({d, d});
    b.proj_bias = Tensor({d});
    b.ln2_gamma = Tensor({d}, 1.0);
    b.ln2_beta = Tensor({d});
    b.fc1_weight = trunc_normal({d, hidden});
    b.fc1_bias = Tensor({hidden});
    b.fc2_weight = trunc_normal({hidden, d});
    b.fc2_bias = Tensor({d});
    p.blocks.push_back(std::move(b));
  }
  p.norm_gamma = Tensor({d}, 1.0);
  p.norm_beta = Tensor({d});
  p.head_weight = trunc_normal({d, config.num_classes});
  p.head_bias = Tensor({config.num_classes});
  return p;
}

Tensor patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) throw DimensionError("patchify expects a [C×H×W] image");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0) {
    throw DimensionError("image " + ad::shape_to_string(image.shape()) +
                         " is not divisible into " + std::to_string(patch_size) + "-pixel patches");
  }
  const std::size_t gh = h / patch_size, gw = w / patch_size;
  const std::size_t pd = c * patch_size * patch_size;
  Tensor tokens({gh * gw, pd});
  for (std::size_t gy = 0; gy < gh; ++gy) {
    for (std::size_t gx = 0; gx < gw; ++gx) {
      double* dst = tokens.data().data() + (gy * gw + gx) * pd;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t py = 0; py < patch_size; ++py) {
          const double* src =
              image.data().data() + (ch * h + gy * patch_size + py) * w + gx * patch_size;
          std::copy_n(src, patch_size, dst);
          dst += patch_size;
        }
      }
    }
  }
  return tokens;
}

Tensor unpatchify(const Tensor& tokens, std::size_t channels, std::size_t image_size,
                  std::size_t patch_size) {
  if (patch_size == 0 || image_size % patch_size != 0) {
    throw DimensionError("image size not divisible by patch size");
  }
  const std::size_t g = image_size / patch_size;
  const std::size_t pd = channels * patch_size * patch_size;
  if (tokens.shape() != ad::Shape{g * g, pd}) {
    throw DimensionError("unpatchify: token shape " + ad::shape_to_string(tokens.shape()) +
                         " does not match the image geometry");
  }
  Tensor image({channels, image_size, image_size});
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      const double* src = tokens.data().data() + (gy * g + gx) * pd;
      for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t py = 0; py < patch_size; ++py) {
          double* dst = image.data().data() +
                        (ch * image_size + gy * patch_size + py) * image_size + gx * patch_size;
          std::copy_n(src, patch_size, dst);
          src += patch_size;
        }
      }
    }
  }
  return image;
}

namespace {

Tensor patchify_batch(const ViTConfig& cfg, const Tensor& batch) {
  const std::size_t s = cfg.image_size;
  if (batch.rank() != 4 || batch.dim(1) != cfg.channels || batch.dim(2) != s ||
      batch.dim(3) != s) {
    throw DimensionError("batch shape " + ad::shape_to_string(batch.shape()) +
                         " does not match model input [B×" + std::to_string(cfg.channels) + "×" +
                         std::to_string(s) + "×" + std::to_string(s) + "]");
  }
  const std::size_t b = batch.dim(0);
  const std::size_t n = cfg.num_patches(), pd = cfg.patch_dim();
  const std::size_t image_len = cfg.channels * s * s;
  Tensor out({b, n, pd});
  for (std::size_t i = 0; i < b; ++i) {
    Tensor image({cfg.channels, s, s},
                 std::vector<double>(batch.data().begin() + static_cast<std::ptrdiff_t>(i * image_len),
                                     batch.data().begin() +
                                         static_cast<std::ptrdiff_t>((i + 1) * image_len)));
    Tensor tokens = patchify(image, cfg.patch_size);
    std::copy(tokens.data().begin(), tokens.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i * n * pd));
  }
  return out;
}

// [B×T×d] → [B·H × T × dh]
ad::Var split_heads(const ad::Var& x, std::size_t batch, std::size_t tokens, std::size_t heads,
                    std::size_t head_dim) {
  ad::Var r = ad::reshape(x, {batch, tokens, heads, head_dim});
  r = ad::permute(r, {0, 2, 1, 3});
  return ad::reshape(r, {batch * heads, tokens, head_dim});
}

ad::Var merge_heads(const ad::Var& x, std::size_t batch, std::size_t tokens, std::size_t heads,
                    std::size_t head_dim) {
  ad::Var r = ad::reshape(x, {batch, heads, tokens, head_dim});
  r = ad::permute(r, {0, 2, 1, 3});
  return ad::reshape(r, {batch, tokens, heads * head_dim});
}

ad::Var drop_path(const ad::Var& branch, Mode mode, double rate, Rng& rng) {
  if (mode != Mode::kTrain || rate == 0.0) return branch;
  const std::size_t b = branch.shape()[0];
  const double keep = 1.0 - rate;
  std::vector<double> factors(b);
  for (double& f : factors) f = uniform01(rng) < keep ? 1.0 / keep : 0.0;
  return ad::scale_leading(branch, factors);
}

Tensor class_attention(const Tensor& attn, std::size_t batch, std::size_t heads,
                       std::size_t tokens) {
  const std::size_t n = tokens - 1;
  Tensor out({batch, n});
  for (std::size_t b = 0; b < batch; ++b) {
    double* row = out.data().data() + b * n;
    for (std::size_t h = 0; h < heads; ++h) {
      // Row 0 of each head's [T×T] map is the class-token query.
      const double* cls_row = attn.data().data() + (b * heads + h) * tokens * tokens;
      for (std::size_t i = 0; i < n; ++i) row[i] += cls_row[1 + i];
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += row[i];
    for (std::size_t i = 0; i < n; ++i) row[i] /= total;
  }
  return out;
}

template <typename Params>
TrainingForward forward_impl(ad::Graph& g, Params& p, const Tensor& batch, Mode mode, Rng& rng) {
  const ViTConfig& cfg = p.config;
  const std::size_t b = batch.rank() == 4 ? batch.dim(0) : 0;
  const std::size_t t = cfg.tokens();
  const std::size_t d = cfg.embed_dim;
  const std::size_t heads = cfg.heads;
  const std::size_t hd = cfg.head_dim();
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  ad::Var x = g.constant(patchify_batch(cfg, batch));
  x = ad::add(ad::linear(x, g.leaf(p.patch_weight)), g.leaf(p.patch_bias));
  ad::Var cls = ad::repeat_leading(ad::reshape(g.leaf(p.cls_token), {1, d}), b);
  ad::Var z = ad::concat({cls, x}, 1);
  z = ad::add(z, g.leaf(p.pos_embed));

  ad::Var last_attn;
  for (auto& blk : p.blocks) {
    ad::Var h = ad::layer_norm(z, g.leaf(blk.ln1_gamma), g.leaf(blk.ln1_beta));
    ad::Var q = ad::add(ad::linear(h, g.leaf(blk.q_weight)), g.leaf(blk.q_bias));
    ad::Var k = ad::add(ad::linear(h, g.leaf(blk.k_weight)), g.leaf(blk.k_bias));
    ad::Var v = ad::add(ad::linear(h, g.leaf(blk.v_weight)), g.leaf(blk.v_bias));
    q = split_heads(q, b, t, heads, hd);
    k = split_heads(k, b, t, heads, hd);
    v = split_heads(v, b, t, heads, hd);
    ad::Var scores = ad::scale(ad::bmm(q, k, true), score_scale);
    last_attn = ad::softmax(scores, 2);
    ad::Var ctx = merge_heads(ad::bmm(last_attn, v), b, t, heads, hd);
    ad::Var out = ad::add(ad::linear(ctx, g.leaf(blk.proj_weight)), g.leaf(blk.proj_bias));
    z = ad::add(z, drop_path(out, mode, cfg.drop_path_rate, rng));

    ad::Var h2 = ad::layer_norm(z, g.leaf(blk.ln2_gamma), g.leaf(blk.ln2_beta));
    ad::Var m = ad::gelu(ad::add(ad::linear(h2, g.leaf(blk.fc1_weight)), g.leaf(blk.fc1_bias)));
    m = ad::add(ad::linear(m, g.leaf(blk.fc2_weight)), g.leaf(blk.fc2_bias));
    z = ad::add(z, drop_path(m, mode, cfg.drop_path_rate, rng));
  }
  z = ad::layer_norm(z, g.leaf(p.norm_gamma), g.leaf(p.norm_beta));
  ad::Var cls_out = ad::reshape(ad::slice(z, 1, 0, 1), {b, d});
  ad::Var logits = ad::add(ad::linear(cls_out, g.leaf(p.head_weight)), g.leaf(p.head_bias));

  TrainingForward result;
  result.logits = logits;
  result.output.logits = logits.value().reshaped(logits.shape());
  result.output.probs = ad::softmax_rows(result.output.logits);
  result.output.attention = class_attention(last_attn.value(), b, heads, t);
  return result;
}

}  // namespace

TrainingForward forward(ad::Graph& graph, ViTParams& params, const Tensor& batch, Mode mode,
                        Rng& rng) {
  return forward_impl(graph, params, batch, mode, rng);
}

ForwardOutput forward(const ViTParams& params, const Tensor& batch, Mode mode, Rng& rng) {
  ad::Graph graph;
  return forward_impl(graph, params, batch, mode, rng).output;
}

ForwardOutput predict(const ViTParams& params, const Tensor& batch) {
  Rng unused(0);
  return forward(params, batch, Mode::kEval, unused);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'M', 'I', 'X', 'P', 'R', 'O', 'V', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  template <typename T>
  void le(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    bytes(raw, sizeof(T));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > in_.size()) throw FormatError("checkpoint truncated", pos_);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T le() {
    std::uint8_t raw[sizeof(T)];
    bytes(raw, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const ViTParams& params) {
  const ViTConfig& c = params.config;
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(kVersion);
  for (std::size_t v : {c.image_size, c.channels, c.patch_size, c.embed_dim, c.heads, c.depth,
                        c.num_classes}) {
    w.le<std::uint64_t>(v);
  }
  w.le<double>(c.mlp_ratio);
  w.le<double>(c.drop_path_rate);
  w.le<std::uint64_t>(params.parameter_count());
  for (const Tensor* t : params.tensors()) {
    for (double v : t->data()) w.le<double>(v);
  }
  return w.take();
}

ViTParams deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[sizeof(kMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a MixPro ViT checkpoint (bad magic)", 0);
  }
  const auto version = r.le<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 8);
  }
  ViTConfig c;
  c.image_size = r.le<std::uint64_t>();
  c.channels = r.le<std::uint64_t>();
  c.patch_size = r.le<std::uint64_t>();
  c.embed_dim = r.le<std::uint64_t>();
  c.heads = r.le<std::uint64_t>();
  c.depth = r.le<std::uint64_t>();
  c.num_classes = r.le<std::uint64_t>();
  c.mlp_ratio = r.le<double>();
  c.drop_path_rate = r.le<double>();
  const std::size_t config_end = r.pos();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what(), config_end);
  }
  ViTParams p = init_params(c, 0);
  const auto count = r.le<std::uint64_t>();
  if (count != p.parameter_count()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " values, config needs " +
                      std::to_string(p.parameter_count()),
                      r.pos() - 8);
  }
  for (Tensor* t : p.tensors()) {
    for (double& v : t->data()) v = r.le<double>();
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.pos());
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ViTParams& params) {
  const auto bytes = serialize(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

ViTParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace mixpro::vit
