#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

namespace spsl {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major 8-bit RGB raster.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  std::span<const std::uint8_t> bytes() const noexcept { return data_; }
  std::span<std::uint8_t> bytes() noexcept { return data_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  int width_ = 0, height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Row-major 8-bit single-channel raster.
struct GrayImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary netpbm, maxval 255.
void write_ppm(std::ostream& out, const RgbImage& image);
RgbImage read_ppm(std::istream& in);
void write_pgm(std::ostream& out, const GrayImage& image);
GrayImage read_pgm(std::istream& in);

void save_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage load_ppm(const std::filesystem::path& path);
void save_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage load_pgm(const std::filesystem::path& path);

/// 64-bit FNV-1a, used for golden image hashes.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace spsl
