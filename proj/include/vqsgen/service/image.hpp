#pragma once

// 8-bit grayscale export of stroke rasters: binary PGM files, PNG bytes, and
// base-64 text for JSON transport.

#include <png.h>
#include <sodium.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Square 8-bit raster; 255 is full ink.
struct Gray8 {
  std::size_t size = 0;
  std::vector<std::uint8_t> px;

  bool operator==(const Gray8&) const = default;
};

inline Gray8 to_gray8(const StrokeImage& img) {
  Gray8 g{img.size(), std::vector<std::uint8_t>(img.pixels().size())};
  for (std::size_t i = 0; i < g.px.size(); ++i)
    g.px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels()[i], 0.0, 1.0) * 255.0));
  return g;
}

inline std::string encode_pgm(const Gray8& g) {
  std::string out = "P5\n" + std::to_string(g.size) + " " + std::to_string(g.size) + "\n255\n";
  out.append(g.px.begin(), g.px.end());
  return out;
}

inline std::string encode_png(const Gray8& g) {
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  im.width = static_cast<png_uint_32>(g.size);
  im.height = static_cast<png_uint_32>(g.size);
  im.format = PNG_FORMAT_GRAY;
  png_alloc_size_t n = 0;
  if (!png_image_write_to_memory(&im, nullptr, &n, 0, g.px.data(), 0, nullptr)) throw ImageError(std::string("png: ") + im.message);
  std::string out(n, '\0');
  if (!png_image_write_to_memory(&im, out.data(), &n, 0, g.px.data(), 0, nullptr)) throw ImageError(std::string("png: ") + im.message);
  out.resize(n);
  return out;
}

inline Gray8 decode_png(const std::string& bytes) {
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&im, bytes.data(), bytes.size())) throw ImageError(std::string("png: ") + im.message);
  if (im.width != im.height) {
    png_image_free(&im);
    throw ImageError("png: image is not square");
  }
  im.format = PNG_FORMAT_GRAY;
  Gray8 g{im.width, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(im))};
  if (!png_image_finish_read(&im, nullptr, g.px.data(), 0, nullptr)) throw ImageError(std::string("png: ") + im.message);
  return g;
}

inline void write_image(const std::string& path, const Gray8& g) {
  const bool png = path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write image '" + path + "'");
  const std::string bytes = png ? encode_png(g) : encode_pgm(g);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("short write to '" + path + "'");
}

inline std::string base64_encode(const std::string& bin) {
  std::string out(sodium_base64_ENCODED_LEN(bin.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bin.data()), bin.size(),
                    sodium_base64_VARIANT_ORIGINAL);
  out.resize(out.size() - 1);
  return out;
}

inline std::string base64_decode(const std::string& text) {
  std::string out(text.size() / 4 * 3 + 3, '\0');
  std::size_t n = 0;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(), nullptr, &n, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0)
    throw ImageError("invalid base-64 text");
  out.resize(n);
  return out;
}

inline std::string png_base64(const StrokeImage& img) { return base64_encode(encode_png(to_gray8(img))); }

}  // namespace vqsgen
