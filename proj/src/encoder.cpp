#include "kmoco/encoder.hpp"

#include <cmath>

#include "kmoco/errors.hpp"

namespace kmoco {

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, double gain, Rng& rng) {
  Tensor t(std::move(shape));
  const double sd = std::sqrt(gain / static_cast<double>(fan_in));
  for (auto& v : t.vec()) v = sd * normal(rng);
  return t;
}

const ad::Var& find(const ParamSet& p, const std::string& name) {
  for (const auto& np : p)
    if (np.name == name) return np.var;
  throw ConfigError("missing encoder parameter '" + name + "'");
}

ad::Var linear(const ad::Var& x, const ParamSet& p, const std::string& prefix, bool bias) {
  ad::Var y = ad::matmul(x, find(p, prefix + ".w"));
  return bias ? ad::add_bias(y, find(p, prefix + ".b")) : y;
}

}  // namespace

void EncoderConfig::validate() const {
  for (auto c : channels)
    if (c == 0) throw ConfigError("encoder channel widths must be positive");
  if (embed_dim == 0) throw ConfigError("encoder embed_dim must be positive");
  if (large_side <= 0 || small_side <= 0 || large_side % 4 || small_side % 4)
    throw ConfigError("crop sides must be positive multiples of 4");
}

ParamSet init_backbone(const EncoderConfig& cfg, Rng& rng) {
  ParamSet p;
  std::size_t in = 3;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t out = cfg.channels[i];
    const std::string n = "conv" + std::to_string(i + 1);
    p.push_back({n + ".w", ad::parameter(he_normal({out, in, 3, 3}, in * 9, 2.0, rng))});
    p.push_back({n + ".b", ad::parameter(Tensor({out}, 0.0))});
    in = out;
  }
  return p;
}

ParamSet init_head(const EncoderConfig& cfg, Rng& rng) {
  ParamSet p;
  const std::size_t cg = cfg.feature_dim();
  if (cfg.head_hidden > 0) {
    p.push_back({"fc1.w", ad::parameter(he_normal({cg, cfg.head_hidden}, cg, 2.0, rng))});
    if (cfg.head_bias) p.push_back({"fc1.b", ad::parameter(Tensor({cfg.head_hidden}, 0.0))});
    p.push_back({"fc2.w", ad::parameter(he_normal({cfg.head_hidden, cfg.embed_dim}, cfg.head_hidden, 1.0, rng))});
  } else {
    p.push_back({"fc2.w", ad::parameter(he_normal({cg, cfg.embed_dim}, cg, 1.0, rng))});
  }
  if (cfg.head_bias) p.push_back({"fc2.b", ad::parameter(Tensor({cfg.embed_dim}, 0.0))});
  return p;
}

namespace {
constexpr double kInputMean = 0.5, kInputStd = 0.25;
}  // namespace

ad::Var backbone_spatial(const ParamSet& g, const ad::Var& images) {
  if (images.shape().size() != 4 || images.shape()[2] % 4 || images.shape()[3] % 4)
    throw ConfigError("backbone input must be [B,3,S,S] with S divisible by 4, got " +
                      shape_str(images.shape()));
  // Fixed input normalization: [0, 1] → roughly zero mean, unit spread.
  Tensor centered = images.value();
  for (auto& v : centered.vec()) v = (v - kInputMean) / kInputStd;
  ad::Var x = ad::relu(ad::conv3x3(ad::constant(std::move(centered)), find(g, "conv1.w"), find(g, "conv1.b")));
  x = ad::avg_pool2(x);
  x = ad::relu(ad::conv3x3(x, find(g, "conv2.w"), find(g, "conv2.b")));
  x = ad::avg_pool2(x);
  return ad::relu(ad::conv3x3(x, find(g, "conv3.w"), find(g, "conv3.b")));
}

ad::Var forward_backbone(const EncoderConfig& cfg, const ParamSet& g, const ad::Var& images) {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != s[3] ||
      (static_cast<int>(s[2]) != cfg.large_side && static_cast<int>(s[2]) != cfg.small_side))
    throw ConfigError("unsupported backbone input " + shape_str(s) + " (expected side " +
                      std::to_string(cfg.large_side) + " or " + std::to_string(cfg.small_side) + ")");
  return ad::global_avg_pool(backbone_spatial(g, images));
}

ad::Var forward_head(const EncoderConfig& cfg, const ParamSet& h, const ad::Var& features) {
  if (features.shape().size() != 2 || features.shape()[1] != cfg.feature_dim())
    throw DimensionError("head input must be [B, " + std::to_string(cfg.feature_dim()) + "], got " +
                         shape_str(features.shape()));
  ad::Var x = features;
  if (cfg.head_hidden > 0) x = ad::relu(linear(x, h, "fc1", cfg.head_bias));
  x = linear(x, h, "fc2", cfg.head_bias);
  return ad::l2_normalize(x);
}

ParamSet constant_copy(const ParamSet& p) {
  ParamSet out;
  out.reserve(p.size());
  for (const auto& np : p) out.push_back({np.name, ad::constant(np.var.value())});
  return out;
}

EncoderPair::EncoderPair(EncoderConfig cfg, double momentum, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  set_momentum(momentum);
  g_ = init_backbone(cfg_, rng);
  h_ = init_head(cfg_, rng);
  gm_ = constant_copy(g_);
  hm_ = constant_copy(h_);
}

void EncoderPair::set_momentum(double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("momentum must be in [0, 1]");
  m_ = m;
}

std::vector<ad::Var> EncoderPair::online_params() const {
  std::vector<ad::Var> out;
  for (const auto& p : g_) out.push_back(p.var);
  for (const auto& p : h_) out.push_back(p.var);
  return out;
}

void EncoderPair::zero_grad() {
  for (auto& p : g_) p.var.zero_grad();
  for (auto& p : h_) p.var.zero_grad();
}

void EncoderPair::ema_update() {
  auto blend = [this](ParamSet& mom, const ParamSet& online) {
    for (std::size_t i = 0; i < mom.size(); ++i) {
      auto& q = mom[i].var.mutable_value().vec();
      const auto& p = online[i].var.value().vec();
      for (std::size_t j = 0; j < q.size(); ++j) q[j] = m_ * q[j] + (1.0 - m_) * p[j];
    }
  };
  blend(gm_, g_);
  blend(hm_, h_);
}

void EncoderPair::save(TensorTable& table) const {
  for (const auto& p : g_) table.put("g." + p.name, p.var.value());
  for (const auto& p : h_) table.put("h." + p.name, p.var.value());
  for (const auto& p : gm_) table.put("gm." + p.name, p.var.value());
  for (const auto& p : hm_) table.put("hm." + p.name, p.var.value());
}

void EncoderPair::load(const TensorTable& table) {
  auto fill = [&table](ParamSet& ps, const std::string& prefix) {
    for (auto& p : ps) {
      const Tensor& t = table.get(prefix + p.name);
      if (t.shape() != p.var.shape())
        throw FormatError("checkpoint tensor " + prefix + p.name + " has shape " + shape_str(t.shape()));
      p.var.mutable_value() = t;
    }
  };
  fill(g_, "g.");
  fill(h_, "h.");
  fill(gm_, "gm.");
  fill(hm_, "hm.");
}

}  // namespace kmoco
