#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pcg/circuit.hpp"
#include "pcg/error.hpp"

namespace pcg {

/// Grayscale or RGB image with 8-bit samples. RGB is flattened channel-major
/// (all R, then all G, then all B) when mapped to variables.
struct Image {
  std::size_t height = 0, width = 0, channels = 1;
  std::vector<std::uint8_t> pixels;  // interleaved as in the file
};

inline std::uint8_t category_to_gray(std::size_t c, std::size_t num_categories) {
  if (num_categories <= 1) return 0;
  return static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(c) / static_cast<double>(num_categories - 1)));
}

inline Category gray_to_category(std::uint8_t g, std::size_t num_categories) {
  if (num_categories <= 1) return 0;
  return static_cast<Category>(std::lround(static_cast<double>(g) * static_cast<double>(num_categories - 1) / 255.0));
}

namespace detail {

inline void skip_ws_and_comments(std::istream& in) {
  while (true) {
    int ch = in.peek();
    if (ch == '#') {
      std::string junk;
      std::getline(in, junk);
    } else if (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t') {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace detail

inline Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::string tag;
  in >> tag;
  if (tag != "P5" && tag != "P6") throw Error(ErrorCode::FormatError, path + ": only binary PGM/PPM supported");
  Image img;
  img.channels = tag == "P6" ? 3 : 1;
  std::size_t maxval = 0;
  detail::skip_ws_and_comments(in);
  in >> img.width;
  detail::skip_ws_and_comments(in);
  in >> img.height;
  detail::skip_ws_and_comments(in);
  in >> maxval;
  if (!in || maxval != 255) throw Error(ErrorCode::FormatError, path + ": expected maxval 255");
  in.get();
  img.pixels.resize(img.height * img.width * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw Error(ErrorCode::FormatError, path + ": truncated pixel data");
  return img;
}

inline void write_pnm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

/// Variables of an image: row-major per channel, channels stacked.
inline std::vector<Category> image_to_categories(const Image& img, std::size_t num_categories) {
  const std::size_t plane = img.height * img.width;
  std::vector<Category> out(plane * img.channels);
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t ch = 0; ch < img.channels; ++ch)
      out[ch * plane + p] = gray_to_category(img.pixels[p * img.channels + ch], num_categories);
  return out;
}

inline Image categories_to_image(std::span<const Category> values, std::size_t height, std::size_t width,
                                 std::size_t num_categories, std::size_t channels = 1) {
  const std::size_t plane = height * width;
  if (values.size() != plane * channels) throw Error(ErrorCode::DimMismatch, "image dims do not match values");
  Image img{height, width, channels, std::vector<std::uint8_t>(plane * channels)};
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t ch = 0; ch < channels; ++ch)
      img.pixels[p * channels + ch] = category_to_gray(values[ch * plane + p], num_categories);
  return img;
}

}  // namespace pcg
