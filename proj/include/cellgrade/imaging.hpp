// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cellgrade/tensor.hpp"

namespace cellgrade::imaging {

// Decoded RGB raster, values in [0,1], row-major (row, column, channel).
struct PixelImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  static constexpr std::size_t kChannels = 3;

  PixelImage() = default;
  PixelImage(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), values(w * h * kChannels, fill) {}

  std::size_t pixel_count() const { return width * height; }
  double& at(std::size_t row, std::size_t col, std::size_t ch) {
    return values[(row * width + col) * kChannels + ch];
  }
  double at(std::size_t row, std::size_t col, std::size_t ch) const {
    return values[(row * width + col) * kChannels + ch];
  }
};

// Per pixel (h, s, v); h is a fraction of the hue circle in [0,1).
struct HsvImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;
};

enum class FeatureKind { raw_pixel, hsv_histogram };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view name);

struct FeatureVector {
  FeatureKind kind = FeatureKind::raw_pixel;
  std::vector<double> values;

  std::size_t dims() const { return values.size(); }
};

inline constexpr std::size_t kRawSide = 32;
inline constexpr std::size_t kRawDims = kRawSide * kRawSide * 3;
inline constexpr std::size_t kDefaultHistogramBins = 8;
inline constexpr std::size_t kDefaultTensorSide = 64;

// PNG codec. Accepts 8-bit RGB/RGBA (alpha dropped); rejects grayscale and
// 16-bit images with UnsupportedFormatError, malformed data with DecodeError.
PixelImage decode_image(std::span<const std::uint8_t> bytes);
PixelImage decode_image_file(const std::string& path);

// 8-bit RGB PNG. Values are rounded to the nearest 1/255. Output bytes are a
// pure function of the image.
std::vector<std::uint8_t> encode_png(const PixelImage& img);

// Bilinear resampling with half-pixel centres:
//   src = (dst + 0.5) * src_extent / dst_extent - 0.5, clamped to [0, extent-1].
PixelImage resize_bilinear(const PixelImage& img, std::size_t out_w,
                           std::size_t out_h);

HsvImage rgb_to_hsv(const PixelImage& img);
PixelImage hsv_to_rgb(const HsvImage& img);

FeatureVector extract_raw_features(const PixelImage& img);
FeatureVector extract_histogram_features(
    const PixelImage& img, std::size_t bins_per_channel = kDefaultHistogramBins);

FeatureVector extract_features(const PixelImage& img, FeatureKind kind,
                               std::size_t bins_per_channel = kDefaultHistogramBins);

// Resized to side x side, shape [side, side, 3].
Tensor<float> image_to_tensor(const PixelImage& img,
                              std::size_t side = kDefaultTensorSide);

}  // namespace cellgrade::imaging
