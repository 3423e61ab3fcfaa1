#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kmoco/tensor.hpp"

namespace kmoco {

// H×W×C raster (channels interleaved), values in [0, 1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c = 3, float fill = 0.0f)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int r, int c, int ch) {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  float at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }

  bool in_range() const;
  void clamp01();

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

// Stacks equally sized images into a [B, C, H, W] tensor.
Tensor to_batch(std::span<const ImageTensor> images);

}  // namespace kmoco
