#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "spsl/image.hpp"
#include "spsl/matcher.hpp"

namespace spsl::nn {

/// Dense row-major tensor.
struct TensorGrid {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  TensorGrid() = default;
  explicit TensorGrid(std::vector<std::size_t> shape);
  std::size_t size() const noexcept { return data.size(); }
  double& at(std::size_t i, std::size_t j) { return data.at(i * shape.at(1) + j); }
  double at(std::size_t i, std::size_t j) const { return data.at(i * shape.at(1) + j); }
  friend bool operator==(const TensorGrid&, const TensorGrid&) = default;
};

inline constexpr std::size_t kFeatureChannels = 5;

/// One row per grid cell (row-major over cells): mean R, G, B scaled to
/// [0,1], then the cell center as (col + 0.5) / G and (row + 0.5) / G. A
/// mask, when given, is applied to the image first. Throws
/// std::invalid_argument unless G divides both image sides.
TensorGrid extract_object_features(const RgbImage& image, int grid, const match::MaskGrid* mask = nullptr);

}  // namespace spsl::nn
