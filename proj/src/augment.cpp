#include "kmoco/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "kmoco/errors.hpp"

namespace kmoco {

namespace {

constexpr double kLuma[3] = {0.299, 0.587, 0.114};

struct KindInfo {
  AugKind kind;
  const char* name;
  double mag_lo, mag_hi;
};

constexpr std::array<KindInfo, 10> kKinds{{
    {AugKind::kHorizontalFlip, "hflip", 0.0, 0.0},
    {AugKind::kBrightness, "brightness", 0.0, 1.0},
    {AugKind::kContrast, "contrast", 0.0, 1.0},
    {AugKind::kSaturation, "saturation", 0.0, 1.0},
    {AugKind::kHue, "hue", 0.0, 0.5},
    {AugKind::kGrayscale, "grayscale", 0.0, 0.0},
    {AugKind::kGaussianBlur, "blur", 0.1, 5.0},
    {AugKind::kPosterize, "posterize", 1.0, 8.0},
    {AugKind::kSolarize, "solarize", 0.0, 1.0},
    {AugKind::kSharpness, "sharpness", 0.0, 1.0},
}};

const KindInfo& info(AugKind k) {
  for (const auto& i : kKinds)
    if (i.kind == k) return i;
  throw ConfigError("unknown augmentation kind");
}

inline double luma(const ImageTensor& im, int r, int c) {
  return kLuma[0] * im.at(r, c, 0) + kLuma[1] * im.at(r, c, 1) + kLuma[2] * im.at(r, c, 2);
}

inline float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void require_rgb(const ImageTensor& im) {
  if (im.channels != 3) throw DimensionError("colour op needs a 3-channel image");
}

void apply_op(ImageTensor& im, const AugOp& op, Rng& rng) {
  const double m = op.magnitude;
  switch (op.kind) {
    case AugKind::kHorizontalFlip: horizontal_flip(im); break;
    case AugKind::kBrightness: adjust_brightness(im, uniform(rng, 1 - m, 1 + m)); break;
    case AugKind::kContrast: adjust_contrast(im, uniform(rng, 1 - m, 1 + m)); break;
    case AugKind::kSaturation: adjust_saturation(im, uniform(rng, 1 - m, 1 + m)); break;
    case AugKind::kHue: rotate_hue(im, uniform(rng, -m, m)); break;
    case AugKind::kGrayscale: to_grayscale(im); break;
    case AugKind::kGaussianBlur: gaussian_blur(im, uniform(rng, 0.1, m)); break;
    case AugKind::kPosterize: posterize(im, static_cast<int>(std::lround(m))); break;
    case AugKind::kSolarize: solarize(im, m); break;
    case AugKind::kSharpness: adjust_sharpness(im, uniform(rng, 1 - m, 1 + m)); break;
  }
}

}  // namespace

const char* aug_kind_name(AugKind k) { return info(k).name; }

void AugPolicy::validate() const {
  for (const auto& op : ops) {
    const auto& i = info(op.kind);
    if (!(op.probability >= 0.0 && op.probability <= 1.0))
      throw ConfigError(std::string("augmentation ") + i.name + ": probability outside [0, 1]");
    if (i.mag_hi > i.mag_lo && !(op.magnitude >= i.mag_lo && op.magnitude <= i.mag_hi))
      throw ConfigError(std::string("augmentation ") + i.name + ": magnitude outside [" +
                        std::to_string(i.mag_lo) + ", " + std::to_string(i.mag_hi) + "]");
  }
}

std::string AugPolicy::to_string() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& inf = info(ops[i].kind);
    os << (i ? ", " : "") << inf.name << '@' << ops[i].probability;
    if (inf.mag_hi > inf.mag_lo) os << ':' << ops[i].magnitude;
  }
  return os.str();
}

AugPolicy AugPolicy::parse(const std::string& text) {
  AugPolicy p;
  std::stringstream ss(text);
  std::string item;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto at = item.find('@');
    if (at == std::string::npos) throw ConfigError("augmentation '" + item + "': expected name@prob");
    const std::string name = trim(item.substr(0, at));
    std::string rest = item.substr(at + 1);
    const auto colon = rest.find(':');
    AugOp op{};
    bool found = false;
    for (const auto& k : kKinds)
      if (name == k.name) {
        op.kind = k.kind;
        found = true;
      }
    if (!found) throw ConfigError("unknown augmentation '" + name + "'");
    try {
      op.probability = std::stod(rest.substr(0, colon));
      if (colon != std::string::npos) op.magnitude = std::stod(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("augmentation '" + item + "': bad number");
    }
    p.ops.push_back(op);
  }
  p.validate();
  return p;
}

AugPolicy AugPolicy::standard() {
  return AugPolicy{{
      {AugKind::kBrightness, 0.8, 0.4},
      {AugKind::kContrast, 0.8, 0.4},
      {AugKind::kSaturation, 0.8, 0.4},
      {AugKind::kHue, 0.8, 0.1},
      {AugKind::kGrayscale, 0.2, 0.0},
      {AugKind::kGaussianBlur, 0.5, 0.6},
      {AugKind::kHorizontalFlip, 0.5, 0.0},
  }};
}

AugPolicy AugPolicy::strong() {
  return AugPolicy{{
      {AugKind::kPosterize, 0.4, 4.0},
      {AugKind::kSolarize, 0.2, 0.5},
      {AugKind::kSharpness, 0.5, 0.9},
      {AugKind::kBrightness, 0.5, 0.6},
      {AugKind::kContrast, 0.5, 0.6},
      {AugKind::kHorizontalFlip, 0.5, 0.0},
  }};
}

ImageTensor apply_policy(const ImageTensor& image, const AugPolicy& policy, Rng& rng) {
  ImageTensor out = image;
  for (const auto& op : policy.ops)
    if (bernoulli(rng, op.probability)) apply_op(out, op, rng);
  out.clamp01();
  return out;
}

ImageTensor apply_mixed(const ImageTensor& image, const AugPolicy& standard, const AugPolicy& strong,
                        double p_strong, Rng& rng, bool* used_strong) {
  if (!(p_strong >= 0.0 && p_strong <= 1.0)) throw ConfigError("p_strong must be in [0, 1]");
  const bool s = bernoulli(rng, p_strong);
  if (used_strong) *used_strong = s;
  return apply_policy(image, s ? strong : standard, rng);
}

void horizontal_flip(ImageTensor& im) {
  for (int r = 0; r < im.height; ++r)
    for (int c = 0; c < im.width / 2; ++c)
      for (int ch = 0; ch < im.channels; ++ch)
        std::swap(im.at(r, c, ch), im.at(r, im.width - 1 - c, ch));
}

void adjust_brightness(ImageTensor& im, double factor) {
  for (auto& v : im.data) v = clamp01(v * factor);
}

void adjust_contrast(ImageTensor& im, double factor) {
  require_rgb(im);
  double mean = 0.0;
  for (int r = 0; r < im.height; ++r)
    for (int c = 0; c < im.width; ++c) mean += luma(im, r, c);
  mean /= static_cast<double>(im.height) * im.width;
  for (auto& v : im.data) v = clamp01(mean + factor * (v - mean));
}

void adjust_saturation(ImageTensor& im, double factor) {
  require_rgb(im);
  for (int r = 0; r < im.height; ++r)
    for (int c = 0; c < im.width; ++c) {
      const double g = luma(im, r, c);
      for (int ch = 0; ch < 3; ++ch) im.at(r, c, ch) = clamp01(g + factor * (im.at(r, c, ch) - g));
    }
}

void rotate_hue(ImageTensor& im, double shift) {
  require_rgb(im);
  for (int r = 0; r < im.height; ++r)
    for (int c = 0; c < im.width; ++c) {
      const double R = im.at(r, c, 0), G = im.at(r, c, 1), B = im.at(r, c, 2);
      const double mx = std::max({R, G, B}), mn = std::min({R, G, B});
      const double delta = mx - mn;
      if (delta <= 0.0) continue;  // grey: hue undefined
      double h;
      if (mx == R)
        h = (G - B) / delta;
      else if (mx == G)
        h = 2.0 + (B - R) / delta;
      else
        h = 4.0 + (R - G) / delta;
      h = h / 6.0 + shift;
      h -= std::floor(h);
      const double s = delta / mx, v = mx;
      const double h6 = h * 6.0;
      const int sector = static_cast<int>(std::floor(h6)) % 6;
      const double f = h6 - std::floor(h6);
      const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
      double o[3];
      switch (sector) {
        case 0: o[0] = v, o[1] = t, o[2] = p; break;
        case 1: o[0] = q, o[1] = v, o[2] = p; break;
        case 2: o[0] = p, o[1] = v, o[2] = t; break;
        case 3: o[0] = p, o[1] = q, o[2] = v; break;
        case 4: o[0] = t, o[1] = p, o[2] = v; break;
        default: o[0] = v, o[1] = p, o[2] = q; break;
      }
      for (int ch = 0; ch < 3; ++ch) im.at(r, c, ch) = clamp01(o[ch]);
    }
}

void to_grayscale(ImageTensor& im) {
  require_rgb(im);
  for (int r = 0; r < im.height; ++r)
    for (int c = 0; c < im.width; ++c) {
      const float g = clamp01(luma(im, r, c));
      for (int ch = 0; ch < 3; ++ch) im.at(r, c, ch) = g;
    }
}

void gaussian_blur(ImageTensor& im, double sigma) {
  if (!(sigma > 0.0)) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) ksum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= ksum;

  const int H = im.height, W = im.width, C = im.channels;
  std::vector<double> tmp(im.data.size());
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      for (int ch = 0; ch < C; ++ch) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * im.at(r, std::clamp(c + i, 0, W - 1), ch);
        tmp[(static_cast<std::size_t>(r) * W + c) * C + ch] = s;
      }
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      for (int ch = 0; ch < C; ++ch) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += k[i + radius] * tmp[(static_cast<std::size_t>(std::clamp(r + i, 0, H - 1)) * W + c) * C + ch];
        im.at(r, c, ch) = clamp01(s);
      }
}

void posterize(ImageTensor& im, int bits) {
  bits = std::clamp(bits, 1, 8);
  const int mask = ~((1 << (8 - bits)) - 1) & 0xff;
  for (auto& v : im.data) {
    const int q = std::clamp(static_cast<int>(v * 255.0f + 0.5f), 0, 255) & mask;
    v = static_cast<float>(q) / 255.0f;
  }
}

void solarize(ImageTensor& im, double threshold) {
  for (auto& v : im.data)
    if (v >= threshold) v = 1.0f - v;
}

void adjust_sharpness(ImageTensor& im, double factor) {
  // Blend with a 3x3 smoothing kernel (centre weight 5, total 13); borders unchanged.
  const ImageTensor src = im;
  for (int r = 1; r + 1 < im.height; ++r)
    for (int c = 1; c + 1 < im.width; ++c)
      for (int ch = 0; ch < im.channels; ++ch) {
        double s = 4.0 * src.at(r, c, ch);
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) s += src.at(r + dr, c + dc, ch);
        const double smooth = s / 13.0;
        im.at(r, c, ch) = clamp01(smooth + factor * (src.at(r, c, ch) - smooth));
      }
}

}  // namespace kmoco
