#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "kmoco/checkpoint.hpp"
#include "kmoco/rng.hpp"
#include "kmoco/tensor.hpp"

namespace kmoco {

struct EncoderConfig {
  // Backbone: three 3x3 conv stages (ReLU; 2x2 average pooling after the
  // first two), then global average pooling.
  std::array<std::size_t, 3> channels{16, 32, 64};
  // Projection head: Linear → ReLU → Linear, or a single Linear when 0.
  std::size_t head_hidden = 64;
  bool head_bias = true;
  std::size_t embed_dim = 32;
  // The two crop resolutions accepted by forward_backbone.
  int large_side = 32;
  int small_side = 16;

  std::size_t feature_dim() const { return channels[2]; }
  void validate() const;
};

struct NamedParam {
  std::string name;
  ad::Var var;
};
using ParamSet = std::vector<NamedParam>;

ParamSet init_backbone(const EncoderConfig& cfg, Rng& rng);
ParamSet init_head(const EncoderConfig& cfg, Rng& rng);

// [B, 3, S, S] → [B, C_g, S/4, S/4], before global pooling. Any S divisible
// by 4 is accepted; used by the dense evaluation protocols.
ad::Var backbone_spatial(const ParamSet& g, const ad::Var& images);
// [B, 3, S, S] → [B, C_g]. S must be large_side or small_side (ConfigError).
ad::Var forward_backbone(const EncoderConfig& cfg, const ParamSet& g, const ad::Var& images);
// [B, C_g] → [B, C_h] with unit rows. A zero pre-normalization row raises
// NumericError (representation collapse).
ad::Var forward_head(const EncoderConfig& cfg, const ParamSet& h, const ad::Var& features);

// Online encoder f = h∘g and its momentum twin f′. The momentum parameters
// are constants: they never take part in backward.
class EncoderPair {
 public:
  EncoderPair() = default;
  EncoderPair(EncoderConfig cfg, double momentum, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }
  double momentum() const { return m_; }
  void set_momentum(double m);

  ParamSet& g() { return g_; }
  ParamSet& h() { return h_; }
  const ParamSet& g() const { return g_; }
  const ParamSet& h() const { return h_; }
  const ParamSet& g_momentum() const { return gm_; }
  const ParamSet& h_momentum() const { return hm_; }

  // g then h, in a stable order (optimizer slots follow it).
  std::vector<ad::Var> online_params() const;
  void zero_grad();

  // θ′ ← m·θ′ + (1 − m)·θ, elementwise.
  void ema_update();

  // Names: "g.<p>", "h.<p>", "gm.<p>", "hm.<p>".
  void save(TensorTable& table) const;
  void load(const TensorTable& table);

 private:
  EncoderConfig cfg_;
  double m_ = 0.999;
  ParamSet g_, h_, gm_, hm_;
};

ParamSet constant_copy(const ParamSet& p);

}  // namespace kmoco
