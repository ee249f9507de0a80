// SPDX-License-Identifier: Apache-2.0
#include "cellgrade/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cellgrade/errors.hpp"

namespace cellgrade::imaging {

std::string_view to_string(FeatureKind kind) {
  return kind == FeatureKind::raw_pixel ? "raw" : "hist";
}

FeatureKind parse_feature_kind(std::string_view name) {
  if (name == "raw") return FeatureKind::raw_pixel;
  if (name == "hist") return FeatureKind::hsv_histogram;
  throw ConfigError("unknown feature kind '" + std::string(name) +
                    "' (expected raw or hist)");
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> out(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  const double max_coord = static_cast<double>(src - 1);
  for (std::size_t d = 0; d < dst; ++d) {
    double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, max_coord);
    const auto lo = static_cast<std::size_t>(std::floor(s));
    const std::size_t hi = std::min(lo + 1, src - 1);
    out[d] = {lo, hi, s - static_cast<double>(lo)};
  }
  return out;
}

}  // namespace

PixelImage resize_bilinear(const PixelImage& img, std::size_t out_w,
                           std::size_t out_h) {
  if (out_w == 0 || out_h == 0) {
    throw ConfigError("resize target must be at least 1x1");
  }
  if (img.width == 0 || img.height == 0) {
    throw ConfigError("cannot resize an empty image");
  }
  if (out_w == img.width && out_h == img.height) return img;

  const auto xs = taps(img.width, out_w);
  const auto ys = taps(img.height, out_h);
  PixelImage out(out_w, out_h);
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& tx = xs[x];
      for (std::size_t c = 0; c < PixelImage::kChannels; ++c) {
        const double top = (1.0 - tx.frac) * img.at(ty.lo, tx.lo, c) +
                           tx.frac * img.at(ty.lo, tx.hi, c);
        const double bottom = (1.0 - tx.frac) * img.at(ty.hi, tx.lo, c) +
                              tx.frac * img.at(ty.hi, tx.hi, c);
        out.at(y, x, c) = (1.0 - ty.frac) * top + ty.frac * bottom;
      }
    }
  }
  return out;
}

HsvImage rgb_to_hsv(const PixelImage& img) {
  HsvImage out{img.width, img.height, std::vector<double>(img.values.size())};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double r = img.values[3 * i];
    const double g = img.values[3 * i + 1];
    const double b = img.values[3 * i + 2];
    const double v = std::max({r, g, b});
    const double delta = v - std::min({r, g, b});
    const double s = v > 0.0 ? delta / v : 0.0;
    double h = 0.0;
    if (delta > 0.0) {
      if (v == r) {
        h = (g - b) / delta;
      } else if (v == g) {
        h = (b - r) / delta + 2.0;
      } else {
        h = (r - g) / delta + 4.0;
      }
      h /= 6.0;
      if (h < 0.0) h += 1.0;
      // -tiny + 1 rounds to exactly 1; the circle wraps to 0.
      if (h >= 1.0) h = 0.0;
    }
    out.values[3 * i] = h;
    out.values[3 * i + 1] = s;
    out.values[3 * i + 2] = v;
  }
  return out;
}

PixelImage hsv_to_rgb(const HsvImage& img) {
  PixelImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.width * img.height; ++i) {
    const double h = img.values[3 * i] * 6.0;
    const double s = img.values[3 * i + 1];
    const double v = img.values[3 * i + 2];
    const double sector = std::floor(h);
    const double f = h - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r = v, g = v, b = v;
    switch (static_cast<int>(sector) % 6) {
      case 0: r = v; g = t; b = p; break;
      case 1: r = q; g = v; b = p; break;
      case 2: r = p; g = v; b = t; break;
      case 3: r = p; g = q; b = v; break;
      case 4: r = t; g = p; b = v; break;
      default: r = v; g = p; b = q; break;
    }
    out.values[3 * i] = r;
    out.values[3 * i + 1] = g;
    out.values[3 * i + 2] = b;
  }
  return out;
}

FeatureVector extract_raw_features(const PixelImage& img) {
  PixelImage small = resize_bilinear(img, kRawSide, kRawSide);
  return {FeatureKind::raw_pixel, std::move(small.values)};
}

FeatureVector extract_histogram_features(const PixelImage& img,
                                         std::size_t bins_per_channel) {
  if (bins_per_channel == 0) throw ConfigError("histogram needs at least 1 bin");
  if (img.pixel_count() == 0) throw ConfigError("histogram of an empty image");
  const std::size_t bins = bins_per_channel;
  const auto bin_of = [bins](double value) {
    const auto b = static_cast<std::size_t>(std::floor(value * static_cast<double>(bins)));
    return std::min(b, bins - 1);
  };

  const HsvImage hsv = rgb_to_hsv(img);
  std::vector<std::size_t> counts(bins * bins * bins, 0);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const std::size_t hb = bin_of(hsv.values[3 * i]);
    const std::size_t sb = bin_of(hsv.values[3 * i + 1]);
    const std::size_t vb = bin_of(hsv.values[3 * i + 2]);
    ++counts[(hb * bins + sb) * bins + vb];
  }
  FeatureVector out{FeatureKind::hsv_histogram, std::vector<double>(counts.size())};
  const auto total = static_cast<double>(img.pixel_count());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out.values[i] = static_cast<double>(counts[i]) / total;
  }
  return out;
}

FeatureVector extract_features(const PixelImage& img, FeatureKind kind,
                               std::size_t bins_per_channel) {
  return kind == FeatureKind::raw_pixel
             ? extract_raw_features(img)
             : extract_histogram_features(img, bins_per_channel);
}

Tensor<float> image_to_tensor(const PixelImage& img, std::size_t side) {
  if (side == 0) throw ConfigError("tensor side must be at least 1");
  const PixelImage sized = resize_bilinear(img, side, side);
  std::vector<float> values(sized.values.begin(), sized.values.end());
  return Tensor<float>({side, side, 3}, std::move(values));
}

}  // namespace cellgrade::imaging
