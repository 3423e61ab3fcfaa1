#pragma once

#include <string>
#include <vector>

#include "kmoco/image.hpp"
#include "kmoco/rng.hpp"

namespace kmoco {

enum class AugKind {
  kHorizontalFlip,
  kBrightness,  // magnitude m ∈ [0,1]: factor ~ U[1−m, 1+m]
  kContrast,    // same, around the mean luma
  kSaturation,  // same, around per-pixel luma
  kHue,         // m ∈ [0,0.5]: hue shift ~ U[−m, m] turns
  kGrayscale,
  kGaussianBlur,  // m = σ_max ∈ [0.1, 5]: σ ~ U[0.1, m]
  kPosterize,     // m = bits kept ∈ [1, 8]
  kSolarize,      // m = threshold ∈ [0, 1]
  kSharpness,     // m ∈ [0,1]: factor ~ U[1−m, 1+m]
};

struct AugOp {
  AugKind kind;
  double probability = 1.0;
  double magnitude = 0.0;
};

// Ordered op list; each op fires independently with its probability.
//
// Text form (used in config files): comma-separated `name@prob[:magnitude]`,
// e.g. "brightness@0.8:0.4, grayscale@0.2, hflip@0.5".
struct AugPolicy {
  std::vector<AugOp> ops;

  void validate() const;  // ConfigError on out-of-range probability/magnitude
  std::string to_string() const;
  static AugPolicy parse(const std::string& text);

  // Flip, colour jitter (0.4, 0.4, 0.4, 0.1) at p=0.8, grayscale p=0.2,
  // blur p=0.5 with σ ∈ [0.1, 0.6] (scaled down for 32-pixel crops).
  static AugPolicy standard();
  // Posterize/solarize/sharpness plus stronger brightness/contrast jitter;
  // no hue, saturation or grayscale, so fewer colour distortions than standard.
  static AugPolicy strong();
};

const char* aug_kind_name(AugKind k);

ImageTensor apply_policy(const ImageTensor& image, const AugPolicy& policy, Rng& rng);

// Exactly one of the two policies runs: strong with probability p_strong.
ImageTensor apply_mixed(const ImageTensor& image, const AugPolicy& standard, const AugPolicy& strong,
                        double p_strong, Rng& rng, bool* used_strong = nullptr);

// Individual ops; all keep values in [0, 1].
void horizontal_flip(ImageTensor& im);
void adjust_brightness(ImageTensor& im, double factor);
void adjust_contrast(ImageTensor& im, double factor);
void adjust_saturation(ImageTensor& im, double factor);
void rotate_hue(ImageTensor& im, double shift);
void to_grayscale(ImageTensor& im);
// Separable normalized Gaussian, radius ceil(3σ), edge replication.
void gaussian_blur(ImageTensor& im, double sigma);
void posterize(ImageTensor& im, int bits);
void solarize(ImageTensor& im, double threshold);
void adjust_sharpness(ImageTensor& im, double factor);

}  // namespace kmoco
