#include "spsl/nn/tensor.hpp"

#include <functional>
#include <numeric>

namespace spsl::nn {

TensorGrid::TensorGrid(std::vector<std::size_t> s) : shape(std::move(s)) {
  data.assign(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), 0.0);
}

TensorGrid extract_object_features(const RgbImage& raw, int grid, const match::MaskGrid* mask) {
  if (grid < 1 || raw.width() % grid != 0 || raw.height() % grid != 0)
    throw std::invalid_argument("grid size must divide the image size");
  const RgbImage image = mask ? match::apply_mask(raw, *mask) : raw;
  const int cw = image.width() / grid, ch = image.height() / grid;
  const double norm = 1.0 / (255.0 * cw * ch);
  TensorGrid out({static_cast<std::size_t>(grid * grid), kFeatureChannels});
  for (int row = 0; row < grid; ++row) {
    for (int col = 0; col < grid; ++col) {
      double sum[3] = {0, 0, 0};
      for (int y = row * ch; y < (row + 1) * ch; ++y) {
        for (int x = col * cw; x < (col + 1) * cw; ++x) {
          Rgb p = image.at(x, y);
          sum[0] += p.r;
          sum[1] += p.g;
          sum[2] += p.b;
        }
      }
      std::size_t cell = static_cast<std::size_t>(row * grid + col);
      for (std::size_t c = 0; c < 3; ++c) out.at(cell, c) = sum[c] * norm;
      out.at(cell, 3) = (col + 0.5) / grid;
      out.at(cell, 4) = (row + 0.5) / grid;
    }
  }
  return out;
}

}  // namespace spsl::nn
