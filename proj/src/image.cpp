#include "kmoco/image.hpp"

#include <algorithm>

#include "kmoco/errors.hpp"

namespace kmoco {

bool ImageTensor::in_range() const {
  return std::all_of(data.begin(), data.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

void ImageTensor::clamp01() {
  for (auto& v : data) v = std::clamp(v, 0.0f, 1.0f);
}

Tensor to_batch(std::span<const ImageTensor> images) {
  if (images.empty()) throw DimensionError("to_batch: empty image list");
  const auto& f = images.front();
  const std::size_t C = f.channels, H = f.height, W = f.width;
  Tensor out({images.size(), C, H, W});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& im = images[n];
    if (im.channels != f.channels || im.height != f.height || im.width != f.width)
      throw DimensionError("to_batch: images differ in size");
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c)
        for (std::size_t ch = 0; ch < C; ++ch)
          out[((n * C + ch) * H + r) * W + c] = im.data[(r * W + c) * C + ch];
  }
  return out;
}

}  // namespace kmoco
