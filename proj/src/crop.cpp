#include "kmoco/crop.hpp"

#include <algorithm>
#include <cmath>

#include "kmoco/errors.hpp"

namespace kmoco {

bool CropRect::valid() const {
  return w > 0 && h > 0 && x0 >= 0 && y0 >= 0 && x0 + w <= src_w && y0 + h <= src_h;
}

void CropSpec::validate() const {
  if (!(scale_lo > 0 && scale_lo <= scale_hi && scale_hi <= 1.0))
    throw ConfigError("crop scale range must satisfy 0 < lo <= hi <= 1");
  if (!(ratio_lo > 0 && ratio_lo <= ratio_hi))
    throw ConfigError("crop ratio range must satisfy 0 < lo <= hi");
  if (out_side <= 0) throw ConfigError("crop output side must be positive");
}

double intersection_area(const CropRect& a, const CropRect& b) {
  const double iw = std::min(a.x0 + a.w, b.x0 + b.w) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y0 + a.h, b.y0 + b.h) - std::max(a.y0, b.y0);
  return (iw > 0 && ih > 0) ? iw * ih : 0.0;
}

double iou(const CropRect& a, const CropRect& b) {
  if (a.src_w != b.src_w || a.src_h != b.src_h)
    throw DimensionError("iou: rectangles come from different source sizes");
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double overlap_fraction(const CropRect& c, const CropRect& anchor) {
  return c.area() > 0 ? intersection_area(c, anchor) / c.area() : 0.0;
}

CropRect sample_rrc(Rng& rng, int W, int H, const CropSpec& spec) {
  spec.validate();
  if (W <= 0 || H <= 0) throw SamplingError("sample_rrc: empty source image");
  const double area = static_cast<double>(W) * H;
  const double log_lo = std::log(spec.ratio_lo), log_hi = std::log(spec.ratio_hi);
  for (int attempt = 0; attempt < kRrcAttempts; ++attempt) {
    const double target = uniform(rng, spec.scale_lo, spec.scale_hi) * area;
    const double ratio = std::exp(uniform(rng, log_lo, log_hi));
    const long w = std::min<long>(std::lround(std::sqrt(target * ratio)), W);
    const long h = std::min<long>(std::lround(std::sqrt(target / ratio)), H);
    if (w <= 0 || h <= 0) continue;
    const long x0 = randint(rng, 0, W - w);
    const long y0 = randint(rng, 0, H - h);
    return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(w),
            static_cast<double>(h), W, H};
  }
  const double in_ratio = static_cast<double>(W) / H;
  long w = W, h = H;
  if (in_ratio < spec.ratio_lo)
    h = std::lround(W / spec.ratio_lo);
  else if (in_ratio > spec.ratio_hi)
    w = std::lround(H * spec.ratio_hi);
  w = std::min<long>(w, W);
  h = std::min<long>(h, H);
  if (w <= 0 || h <= 0) throw SamplingError("sample_rrc: spec infeasible for image size");
  return {static_cast<double>((W - w) / 2), static_cast<double>((H - h) / 2), static_cast<double>(w),
          static_cast<double>(h), W, H};
}

std::pair<CropRect, CropRect> sample_pair_iou_bounded(Rng& rng, int W, int H, const CropSpec& spec,
                                                      double iou_max, int max_attempts) {
  if (!(iou_max >= 0.0 && iou_max <= 1.0)) throw ConfigError("iou_max must be in [0, 1]");
  for (int round = 0; round < max_attempts; ++round) {
    const CropRect a = sample_rrc(rng, W, H, spec);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      CropRect b = sample_rrc(rng, W, H, spec);
      if (iou(a, b) <= iou_max) return {a, b};
    }
  }
  throw SamplingError("sample_pair_iou_bounded: no pair with IoU <= " + std::to_string(iou_max) +
                      " after " + std::to_string(max_attempts) + " first crops");
}

std::vector<CropRect> sample_constrained_multicrop(Rng& rng, const CropRect& anchor, std::size_t n,
                                                   const CropSpec& small_spec, double min_overlap,
                                                   int max_attempts, MulticropStats* stats) {
  if (!anchor.valid()) throw SamplingError("sample_constrained_multicrop: invalid anchor");
  std::vector<CropRect> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    CropRect c = sample_rrc(rng, anchor.src_w, anchor.src_h, small_spec);
    int attempt = 0;
    while (overlap_fraction(c, anchor) < min_overlap && attempt < max_attempts) {
      if (stats) ++stats->resampled;
      c = sample_rrc(rng, anchor.src_w, anchor.src_h, small_spec);
      ++attempt;
    }
    if (overlap_fraction(c, anchor) < min_overlap) {
      c.w = std::min(c.w, anchor.w);
      c.h = std::min(c.h, anchor.h);
      c.x0 = anchor.x0 + std::floor((anchor.w - c.w) / 2);
      c.y0 = anchor.y0 + std::floor((anchor.h - c.h) / 2);
      if (stats) ++stats->fallbacks;
    }
    if (stats) ++stats->emitted;
    out.push_back(c);
  }
  return out;
}

ImageTensor crop_and_resize(const ImageTensor& image, const CropRect& rect, int out_side) {
  if (out_side <= 0) throw ConfigError("crop_and_resize: out_side must be positive");
  if (rect.src_w != image.width || rect.src_h != image.height || !rect.valid())
    throw SamplingError("crop_and_resize: rectangle does not fit the image");
  ImageTensor out(out_side, out_side, image.channels);

  struct Tap {
    int lo, hi;
    double frac;
  };
  auto taps = [out_side](double origin, double extent, int limit) {
    std::vector<Tap> t(out_side);
    for (int o = 0; o < out_side; ++o) {
      double s = origin + (o + 0.5) * extent / out_side - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(limit - 1));
      const int lo = static_cast<int>(std::floor(s));
      t[o] = {lo, std::min(lo + 1, limit - 1), s - lo};
    }
    return t;
  };
  const auto xs = taps(rect.x0, rect.w, image.width);
  const auto ys = taps(rect.y0, rect.h, image.height);

  for (int r = 0; r < out_side; ++r)
    for (int c = 0; c < out_side; ++c)
      for (int ch = 0; ch < image.channels; ++ch) {
        const auto& ty = ys[r];
        const auto& tx = xs[c];
        const double top = (1 - tx.frac) * image.at(ty.lo, tx.lo, ch) + tx.frac * image.at(ty.lo, tx.hi, ch);
        const double bot = (1 - tx.frac) * image.at(ty.hi, tx.lo, ch) + tx.frac * image.at(ty.hi, tx.hi, ch);
        out.at(r, c, ch) = static_cast<float>((1 - ty.frac) * top + ty.frac * bot);
      }
  return out;
}

IouHistogram crop_iou_histogram(Rng& rng, int W, int H, const CropSpec& spec, std::size_t pairs,
                                std::size_t bins) {
  IouHistogram hist;
  hist.pairs = pairs;
  hist.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) hist.edges.push_back(static_cast<double>(i) / bins);
  for (std::size_t i = 0; i < pairs; ++i) {
    const CropRect a = sample_rrc(rng, W, H, spec);
    const CropRect b = sample_rrc(rng, W, H, spec);
    const double v = iou(a, b);
    if (v < 0.1) ++hist.below_01;
    if (v == 0.0) ++hist.exact_zero;
    const std::size_t bin = std::min(bins - 1, static_cast<std::size_t>(v * bins));
    ++hist.counts[bin];
  }
  return hist;
}

}  // namespace kmoco
