#pragma once

#include <cstdint>
#include <vector>

#include "viapt/numerics/tensor.hpp"

namespace viapt {

/// Labelled C x S x S float32 images stored back to back.
struct Dataset {
  std::uint32_t channels = 1;
  std::uint32_t side = 16;
  std::uint32_t classes = 0;
  std::vector<float> pixels;
  std::vector<std::uint16_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_numel() const { return std::size_t{channels} * side * side; }

  template <typename T>
  Tensor<T> image(std::size_t i) const {
    const float* src = pixels.data() + i * image_numel();
    return Tensor<T>({channels, side, side}, std::vector<T>(src, src + image_numel()));
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

}  // namespace viapt
