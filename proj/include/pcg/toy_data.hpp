#pragma once

#include <cstdint>
#include <string>

#include "pcg/error.hpp"
#include "pcg/inference.hpp"
#include "pcg/random.hpp"

namespace pcg {

/// Desk-scale image generators, reproducible from (name, params, seed).
///   bars     - horizontal or vertical bands of `bar_width` pixels, each on
///              with probability `bar_probability`
///   checker  - checkerboard of `cell_size` cells with random phase/polarity
///   constant - every pixel equals `constant_value`
///   mixture  - bars or checker (coin flip) drawn at a random foreground level
struct ToyDatasetSpec {
  std::string generator = "bars";
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t num_categories = 2;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::size_t bar_width = 2;
  double bar_probability = 0.5;
  std::size_t cell_size = 2;
  std::size_t constant_value = 1;
};

namespace detail {

inline void draw_bars(Rng& rng, const ToyDatasetSpec& s, Category on, std::span<Category> img) {
  const bool horizontal = rng.uniform() < 0.5;
  const std::size_t extent = horizontal ? s.height : s.width;
  const std::size_t bw = std::max<std::size_t>(1, s.bar_width);
  std::vector<std::uint8_t> lit((extent + bw - 1) / bw);
  for (auto& b : lit) b = rng.uniform() < s.bar_probability;
  for (std::size_t r = 0; r < s.height; ++r)
    for (std::size_t c = 0; c < s.width; ++c)
      img[r * s.width + c] = lit[(horizontal ? r : c) / bw] ? on : Category{0};
}

inline void draw_checker(Rng& rng, const ToyDatasetSpec& s, Category on, std::span<Category> img) {
  const std::size_t cell = std::max<std::size_t>(1, s.cell_size);
  const std::size_t dr = rng.below(2 * cell), dc = rng.below(2 * cell);
  const bool invert = rng.uniform() < 0.5;
  for (std::size_t r = 0; r < s.height; ++r)
    for (std::size_t c = 0; c < s.width; ++c) {
      bool parity = (((r + dr) / cell) + ((c + dc) / cell)) % 2 == 1;
      img[r * s.width + c] = (parity != invert) ? on : Category{0};
    }
}

}  // namespace detail

inline Dataset generate_toy_dataset(const ToyDatasetSpec& s) {
  if (s.num_categories < 2) throw Error(ErrorCode::InvalidConfig, "toy datasets need at least 2 categories");
  if (s.height == 0 || s.width == 0) throw Error(ErrorCode::InvalidConfig, "empty image grid");
  if (!(s.bar_probability >= 0.0 && s.bar_probability <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "bar_probability outside [0, 1]");
  Rng rng(Rng::derive(s.seed, "toy:" + s.generator));
  Dataset d(s.count, s.height * s.width, s.num_categories);
  const auto top = static_cast<Category>(s.num_categories - 1);
  for (std::size_t i = 0; i < s.count; ++i) {
    auto img = d.row(i);
    if (s.generator == "bars") {
      detail::draw_bars(rng, s, top, img);
    } else if (s.generator == "checker") {
      detail::draw_checker(rng, s, top, img);
    } else if (s.generator == "constant") {
      if (s.constant_value >= s.num_categories) throw Error(ErrorCode::InvalidConfig, "constant_value >= C");
      std::fill(img.begin(), img.end(), static_cast<Category>(s.constant_value));
    } else if (s.generator == "mixture") {
      auto level = static_cast<Category>(1 + rng.below(s.num_categories - 1));
      if (rng.uniform() < 0.5)
        detail::draw_bars(rng, s, level, img);
      else
        detail::draw_checker(rng, s, level, img);
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown generator '" + s.generator + "'");
    }
  }
  return d;
}

}  // namespace pcg
