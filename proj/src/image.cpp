#include "spsl/image.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace spsl {

RgbImage::RgbImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw std::invalid_argument("negative image size");
  data_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

Rgb RgbImage::at(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) throw std::out_of_range("pixel out of range");
  std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void RgbImage::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) throw std::out_of_range("pixel out of range");
  std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  data_[i] = c.r;
  data_[i + 1] = c.g;
  data_[i + 2] = c.b;
}

namespace {

void write_header(std::ostream& out, const char* magic, int w, int h) {
  out << magic << '\n' << w << ' ' << h << "\n255\n";
}

// Reads magic, width, height, maxval and the single whitespace byte after it.
// Comments (#...) are allowed between fields.
void read_header(std::istream& in, const std::string& magic, int& w, int& h) {
  auto token = [&]() {
    std::string t;
    for (;;) {
      int c = in.get();
      if (c == EOF) break;
      if (c == '#') {
        while (c != '\n' && c != EOF) c = in.get();
        continue;
      }
      if (std::isspace(c)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(c));
    }
    return t;
  };
  if (token() != magic) throw ImageFormatError("expected " + magic + " header");
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    if (std::stoi(token()) != 255) throw ImageFormatError("only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw ImageFormatError("malformed " + magic + " header");
  }
  if (w <= 0 || h <= 0) throw ImageFormatError("bad image dimensions");
}

void read_payload(std::istream& in, std::uint8_t* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw ImageFormatError("truncated pixel data");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

}  // namespace

void write_ppm(std::ostream& out, const RgbImage& image) {
  write_header(out, "P6", image.width(), image.height());
  auto b = image.bytes();
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

RgbImage read_ppm(std::istream& in) {
  int w = 0, h = 0;
  read_header(in, "P6", w, h);
  RgbImage image(w, h);
  read_payload(in, image.bytes().data(), image.bytes().size());
  return image;
}

void write_pgm(std::ostream& out, const GrayImage& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height)
    throw std::invalid_argument("gray image size mismatch");
  write_header(out, "P5", image.width, image.height);
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

GrayImage read_pgm(std::istream& in) {
  GrayImage image;
  read_header(in, "P5", image.width, image.height);
  image.pixels.resize(static_cast<std::size_t>(image.width) * image.height);
  read_payload(in, image.pixels.data(), image.pixels.size());
  return image;
}

void save_ppm(const std::filesystem::path& path, const RgbImage& image) {
  auto out = open_out(path);
  write_ppm(out, image);
}

RgbImage load_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_ppm(in);
}

void save_pgm(const std::filesystem::path& path, const GrayImage& image) {
  auto out = open_out(path);
  write_pgm(out, image);
}

GrayImage load_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_pgm(in);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace spsl
