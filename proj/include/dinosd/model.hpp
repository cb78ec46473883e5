#pragma once

#include <map>
#include <string>

#include "dinosd/attention.hpp"

namespace dsd {

enum class AttentionMode { None, SelfAttention, Adjacent };

inline const char* to_string(AttentionMode m) {
  switch (m) {
    case AttentionMode::None: return "none";
    case AttentionMode::SelfAttention: return "self";
    case AttentionMode::Adjacent: return "adjacent";
  }
  return "?";
}

inline AttentionMode attention_mode_from(const std::string& s) {
  if (s == "none") return AttentionMode::None;
  if (s == "self") return AttentionMode::SelfAttention;
  if (s == "adjacent") return AttentionMode::Adjacent;
  throw ValueError("unknown attention mode '" + s + "' (expected none|self|adjacent)");
}

struct EncoderConfig {
  std::size_t patch = 8;
  std::size_t channels = 64;
  std::size_t blocks = 6;
  std::size_t heads = 2;
  std::size_t mlp_ratio = 2;
  std::size_t height = 64;
  std::size_t width = 96;

  void validate() const {
    if (blocks < 4) throw ValueError("encoder: block_count must be >= 4 (four tap points)");
    if (heads == 0 || channels % heads != 0) throw ValueError("encoder: heads must divide channels");
    if (height % patch != 0 || width % patch != 0)
      throw ShapeError("encoder: image dims " + std::to_string(height) + "x" + std::to_string(width) +
                       " not divisible by patch size " + std::to_string(patch));
  }
  std::size_t grid_h() const { return height / patch; }
  std::size_t grid_w() const { return width / patch; }
  std::size_t tokens() const { return grid_h() * grid_w(); }
};

struct DecoderConfig {
  std::size_t fusion_channels = 48;
  // fixed stage order, mapped to encoder taps deepest-first;
  // the first two stages carry multi-view attention (M-DPT), the rest are plain DPT
  std::array<double, 4> resample_scales{1.0, 0.5, 2.0, 4.0};
};

struct DepthRange {
  double d_min = 0.1;
  double d_max = 80.0;
  void validate() const {
    if (!(0.0 < d_min && d_min < d_max)) throw ValueError("depth range: need 0 < d_min < d_max");
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  DepthRange range;
  bool attention_residual = true;
  std::uint64_t init_seed = 1;
};

enum class ParamGroup { Encoder, Decoder };

struct Param {
  std::string name;
  Tensor tensor;
  ParamGroup group;
};

// x:[N,T,C], gamma/beta:[C]
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  Tensor m = reduce_mean(x, {2}, true);
  Tensor centered = sub(x, m);
  Tensor var = reduce_mean(square(centered), {2}, true);
  Tensor normed = div(centered, sqrt(add_scalar(var, 1e-6)));
  return add(mul(normed, gamma), beta);
}

inline Tensor conv_bias(const Tensor& x, const Tensor& w, const Tensor& b) {
  // bias [O] reshaped to [O,1,1] broadcasts over [N,O,H,W]
  return add(conv2d(x, w), reshape(b, {b.size(), 1, 1}));
}

struct EncoderBlock {
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  AttentionParams attn;
  Tensor wo, bo;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

class DinoSD {
 public:
  explicit DinoSD(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.encoder.validate();
    cfg_.range.validate();
    std::mt19937_64 rng(cfg_.init_seed);
    init_params(rng);
  }

  const ModelConfig& config() const { return cfg_; }

  // Token sets after each of the last four blocks, shallowest first.
  std::array<Tensor, 4> encoder_forward(const Tensor& images) const {
    const auto& e = cfg_.encoder;
    const Shape& is = images.shape();
    if (is.size() != 4 || is[1] != 3 || is[2] != e.height || is[3] != e.width)
      throw ShapeError("encoder: expected [6N,3," + std::to_string(e.height) + "," +
                       std::to_string(e.width) + "], got " + shape_str(is));
    Tensor x = im2patch(images, e.patch);                  // [6N,T,3nn]
    x = add(add(matmul(x, embed_w_), embed_b_), pos_);     // [6N,T,C]
    std::array<Tensor, 4> taps;
    std::size_t first_tap = e.blocks - 4;
    for (std::size_t b = 0; b < e.blocks; ++b) {
      const EncoderBlock& blk = blocks_[b];
      Tensor h = layer_norm(x, blk.ln1_g, blk.ln1_b);
      Tensor a = scaled_dot_attention(h, h, blk.attn);
      x = add(x, add(matmul(a, blk.wo), blk.bo));
      h = layer_norm(x, blk.ln2_g, blk.ln2_b);
      Tensor m = add(matmul(relu(add(matmul(h, blk.mlp_w1), blk.mlp_b1)), blk.mlp_w2), blk.mlp_b2);
      x = add(x, m);
      if (b >= first_tap) taps[b - first_tap] = x;
    }
    return taps;
  }

  // taps ordered deepest-first; returns fused features [6N,Cf,4*H/n,4*W/n].
  Tensor decode(const std::array<Tensor, 4>& taps, AttentionMode mode) const {
    const auto& e = cfg_.encoder;
    std::size_t gh = e.grid_h(), gw = e.grid_w();
    std::size_t total = taps[0].shape()[0];
    if (total % kViewCount != 0)
      throw ShapeError("decode: leading dim must be a multiple of 6 views");
    std::size_t n_scenes = total / kViewCount;
    Tensor fused;
    for (std::size_t s = 0; s < 4; ++s) {
      Tensor tokens = taps[s];
      if (s < 2 && mode != AttentionMode::None) {
        std::array<Tensor, kViewCount> views;
        for (std::size_t v = 0; v < kViewCount; ++v)
          views[v] = slice(tokens, 0, v * n_scenes, (v + 1) * n_scenes);
        std::array<Tensor, kViewCount> attended =
            mode == AttentionMode::SelfAttention
                ? cross_view_self_attention(views, stage_attn_[s], cfg_.attention_residual)
                : adjacent_view_cross_attention(views, stage_attn_[s], cfg_.attention_residual);
        tokens = concat(std::vector<Tensor>(attended.begin(), attended.end()), 0);
      }
      Tensor feat = tokens_to_spatial(tokens, gh, gw);
      feat = conv_bias(feat, stage_proj_w_[s], stage_proj_b_[s]);
      feat = resample_bilinear(feat, cfg_.decoder.resample_scales[s]);
      if (s == 0) {
        fused = feat;
      } else {
        Tensor prev = resize_bilinear(fused, feat.shape()[2], feat.shape()[3]);
        fused = add(prev, feat);
      }
      fused = relu(conv_bias(fused, stage_fuse_w_[s], stage_fuse_b_[s]));
    }
    return fused;
  }

  // conv -> relu -> conv -> sigmoid -> metric depth -> upsample to H x W.
  Tensor depth_head(const Tensor& features) const {
    const auto& r = cfg_.range;
    Tensor h = relu(conv_bias(features, head_w1_, head_b1_));
    Tensor logits = conv_bias(h, head_w2_, head_b2_);
    Tensor depth = add_scalar(mul_scalar(sigmoid(logits), r.d_max - r.d_min), r.d_min);
    return resize_bilinear(depth, cfg_.encoder.height, cfg_.encoder.width);
  }

  Tensor forward(const Tensor& images, AttentionMode mode) const {
    std::array<Tensor, 4> taps = encoder_forward(images);
    std::array<Tensor, 4> deepest_first{taps[3], taps[2], taps[1], taps[0]};
    return depth_head(decode(deepest_first, mode));
  }

  std::vector<Param>& parameters() { return params_; }
  const std::vector<Param>& parameters() const { return params_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  Tensor* find_param(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p.tensor;
    return nullptr;
  }

 private:
  Tensor reg(const std::string& name, Tensor t, ParamGroup g) {
    t.set_requires_grad(true);
    params_.push_back({name, t, g});
    return t;
  }

  Tensor identity_center_conv(std::size_t out_ch, std::size_t in_ch, std::mt19937_64& rng) {
    Tensor w = randn_trunc({out_ch, in_ch, 3, 3}, 0.02, rng);
    for (std::size_t o = 0; o < out_ch; ++o)
      if (o < in_ch) w.data()[((o * in_ch + o) * 3 + 1) * 3 + 1] += 1.0;
    return w;
  }

  void init_params(std::mt19937_64& rng) {
    const auto& e = cfg_.encoder;
    std::size_t C = e.channels, D = 3 * e.patch * e.patch, Hm = e.mlp_ratio * C;
    std::size_t Cf = cfg_.decoder.fusion_channels;
    embed_w_ = reg("encoder.embed.w", randn_trunc({D, C}, 0.02, rng), ParamGroup::Encoder);
    embed_b_ = reg("encoder.embed.b", Tensor::zeros({C}), ParamGroup::Encoder);
    pos_ = reg("encoder.pos", randn_trunc({e.tokens(), C}, 0.02, rng), ParamGroup::Encoder);
    blocks_.resize(e.blocks);
    for (std::size_t b = 0; b < e.blocks; ++b) {
      std::string pre = "encoder.block" + std::to_string(b) + ".";
      EncoderBlock& blk = blocks_[b];
      blk.ln1_g = reg(pre + "ln1.g", Tensor::full({C}, 1.0), ParamGroup::Encoder);
      blk.ln1_b = reg(pre + "ln1.b", Tensor::zeros({C}), ParamGroup::Encoder);
      blk.attn.head_count = e.heads;
      blk.attn.wq = reg(pre + "attn.wq", randn_trunc({C, C}, 0.02, rng), ParamGroup::Encoder);
      blk.attn.wk = reg(pre + "attn.wk", randn_trunc({C, C}, 0.02, rng), ParamGroup::Encoder);
      blk.attn.wv = reg(pre + "attn.wv", randn_trunc({C, C}, 0.02, rng), ParamGroup::Encoder);
      blk.wo = reg(pre + "attn.wo", randn_trunc({C, C}, 0.02, rng), ParamGroup::Encoder);
      blk.bo = reg(pre + "attn.bo", Tensor::zeros({C}), ParamGroup::Encoder);
      blk.ln2_g = reg(pre + "ln2.g", Tensor::full({C}, 1.0), ParamGroup::Encoder);
      blk.ln2_b = reg(pre + "ln2.b", Tensor::zeros({C}), ParamGroup::Encoder);
      blk.mlp_w1 = reg(pre + "mlp.w1", randn_trunc({C, Hm}, 0.02, rng), ParamGroup::Encoder);
      blk.mlp_b1 = reg(pre + "mlp.b1", Tensor::zeros({Hm}), ParamGroup::Encoder);
      blk.mlp_w2 = reg(pre + "mlp.w2", randn_trunc({Hm, C}, 0.02, rng), ParamGroup::Encoder);
      blk.mlp_b2 = reg(pre + "mlp.b2", Tensor::zeros({C}), ParamGroup::Encoder);
    }
    for (std::size_t s = 0; s < 4; ++s) {
      std::string pre = "decoder.stage" + std::to_string(s) + ".";
      if (s < 2) {
        stage_attn_[s].head_count = e.heads;
        stage_attn_[s].wq = reg(pre + "attn.wq", randn_trunc({C, C}, 0.02, rng), ParamGroup::Decoder);
        stage_attn_[s].wk = reg(pre + "attn.wk", randn_trunc({C, C}, 0.02, rng), ParamGroup::Decoder);
        stage_attn_[s].wv = reg(pre + "attn.wv", randn_trunc({C, C}, 0.02, rng), ParamGroup::Decoder);
      }
      stage_proj_w_[s] = reg(pre + "proj.w", randn_trunc({Cf, C, 3, 3}, 0.02, rng), ParamGroup::Decoder);
      stage_proj_b_[s] = reg(pre + "proj.b", Tensor::zeros({Cf}), ParamGroup::Decoder);
      stage_fuse_w_[s] = reg(pre + "fuse.w", identity_center_conv(Cf, Cf, rng), ParamGroup::Decoder);
      stage_fuse_b_[s] = reg(pre + "fuse.b", Tensor::zeros({Cf}), ParamGroup::Decoder);
    }
    head_w1_ = reg("head.conv1.w", identity_center_conv(Cf, Cf, rng), ParamGroup::Decoder);
    head_b1_ = reg("head.conv1.b", Tensor::zeros({Cf}), ParamGroup::Decoder);
    head_w2_ = reg("head.conv2.w", randn_trunc({1, Cf, 3, 3}, 0.02, rng), ParamGroup::Decoder);
    head_b2_ = reg("head.conv2.b", Tensor::zeros({1}), ParamGroup::Decoder);
  }

  ModelConfig cfg_;
  std::vector<Param> params_;
  Tensor embed_w_, embed_b_, pos_;
  std::vector<EncoderBlock> blocks_;
  std::array<AttentionParams, 2> stage_attn_;
  std::array<Tensor, 4> stage_proj_w_, stage_proj_b_, stage_fuse_w_, stage_fuse_b_;
  Tensor head_w1_, head_b1_, head_w2_, head_b2_;
};

}  // namespace dsd
