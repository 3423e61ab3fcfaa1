#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "kmoco/image.hpp"
#include "kmoco/rng.hpp"

namespace kmoco {

// Axis-aligned crop inside a src_w × src_h image, in pixel units.
struct CropRect {
  double x0 = 0, y0 = 0, w = 0, h = 0;
  int src_w = 0, src_h = 0;

  double area() const { return w * h; }
  bool valid() const;
  friend bool operator==(const CropRect&, const CropRect&) = default;
};

// Random-resized-crop parameters: area fraction in [scale_lo, scale_hi],
// aspect ratio (w/h) log-uniform in [ratio_lo, ratio_hi], square output.
struct CropSpec {
  double scale_lo = 0.2, scale_hi = 1.0;
  double ratio_lo = 3.0 / 4.0, ratio_hi = 4.0 / 3.0;
  int out_side = 32;

  void validate() const;  // ConfigError
};

inline constexpr int kRrcAttempts = 10;
inline constexpr int kDefaultRejectionBudget = 100;

double intersection_area(const CropRect& a, const CropRect& b);
double iou(const CropRect& a, const CropRect& b);
// area(c ∩ anchor) / area(c)
double overlap_fraction(const CropRect& c, const CropRect& anchor);

// Area u·W·H with u ~ U[scale_lo, scale_hi], log-uniform aspect ratio, sides
// rounded and clipped to the image, offset uniform over valid placements.
// After kRrcAttempts degenerate draws, falls back to the largest centered
// rectangle whose ratio lies in range.
CropRect sample_rrc(Rng& rng, int W, int H, const CropSpec& spec);

// Two crops with iou ≤ iou_max; the second crop is rejection-sampled. A first
// crop that exhausts `max_attempts` rejections is redrawn (a large first crop
// can make a low bound unreachable); SamplingError after `max_attempts` such
// redraws.
std::pair<CropRect, CropRect> sample_pair_iou_bounded(Rng& rng, int W, int H, const CropSpec& spec,
                                                      double iou_max,
                                                      int max_attempts = kDefaultRejectionBudget);

struct MulticropStats {
  std::size_t emitted = 0;
  std::size_t resampled = 0;  // rejected candidates
  std::size_t fallbacks = 0;  // crops placed by re-centering inside the anchor
};

// N small crops, each with overlap_fraction(crop, anchor) ≥ min_overlap.
// Candidates are drawn over the whole source image; after `max_attempts`
// rejections the last candidate is shrunk to fit and centered in the anchor.
std::vector<CropRect> sample_constrained_multicrop(Rng& rng, const CropRect& anchor, std::size_t n,
                                                   const CropSpec& small_spec,
                                                   double min_overlap = 0.2,
                                                   int max_attempts = kDefaultRejectionBudget,
                                                   MulticropStats* stats = nullptr);

// Bilinear resample of `rect` to out_side × out_side (half-pixel centers,
// edge clamping).
ImageTensor crop_and_resize(const ImageTensor& image, const CropRect& rect, int out_side);

// Histogram of IoU between independent crop pairs over [0, 1].
struct IouHistogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> counts;
  std::size_t below_01 = 0;  // pairs with IoU < 0.1
  std::size_t exact_zero = 0;
  std::size_t pairs = 0;
};
IouHistogram crop_iou_histogram(Rng& rng, int W, int H, const CropSpec& spec, std::size_t pairs,
                                std::size_t bins = 20);

}  // namespace kmoco
