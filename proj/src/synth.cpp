// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <json.hpp>

#include "cellgrade/data.hpp"
#include "cellgrade/errors.hpp"
#include "cellgrade/io.hpp"
#include "cellgrade/prng.hpp"

namespace cellgrade::data {

namespace fs = std::filesystem;
using imaging::PixelImage;

namespace {

struct Rgb {
  double r, g, b;
};

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Smooth 0..1 ramp across [edge0, edge1].
double smoothstep(double edge0, double edge1, double x) {
  const double t = clamp01((x - edge0) / (edge1 - edge0));
  return t * t * (3.0 - 2.0 * t);
}

struct Blob {
  double cx, cy, radius;
  Rgb color;
};

}  // namespace

PixelImage synth_cell(std::size_t side, bool parasitized, std::uint64_t seed) {
  SeededPrng rng(seed);
  const double s = static_cast<double>(side);
  PixelImage img(side, side);

  // Cell geometry: a rotated ellipse near the centre.
  const double cx = s * (0.5 + rng.uniform(-0.06, 0.06));
  const double cy = s * (0.5 + rng.uniform(-0.06, 0.06));
  const double rx = s * rng.uniform(0.30, 0.42);
  const double ry = s * rng.uniform(0.30, 0.42);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);

  // Staining varies per slide: the cell body colour drifts between pink and
  // mauve and the exposure drifts too.
  const double drift = rng.uniform();
  const Rgb pink{0.92, 0.62, 0.70};
  const Rgb mauve{0.80, 0.58, 0.80};
  const double exposure = rng.uniform(0.80, 1.05);
  Rgb body = mix(pink, mauve, drift);
  body = {body.r * exposure, body.g * exposure, body.b * exposure};
  const Rgb rim{body.r * 0.80, body.g * 0.72, body.b * 0.78};
  const double background = rng.uniform(0.0, 0.04);

  std::vector<Blob> blobs;
  if (parasitized) {
    const auto count = 1 + static_cast<std::size_t>(rng.below(3));
    for (std::size_t i = 0; i < count; ++i) {
      const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double rr = std::sqrt(rng.uniform()) * 0.6;
      const double lx = rr * std::cos(t) * rx;
      const double ly = rr * std::sin(t) * ry;
      const double shade = rng.uniform(0.0, 1.0);
      blobs.push_back({cx + lx * ca - ly * sa, cy + lx * sa + ly * ca,
                       s * rng.uniform(0.05, 0.09),
                       mix(Rgb{0.45, 0.18, 0.55}, Rgb{0.30, 0.10, 0.45}, shade)});
    }
  }

  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double px = static_cast<double>(x) + 0.5 - cx;
      const double py = static_cast<double>(y) + 0.5 - cy;
      const double u = (px * ca + py * sa) / rx;
      const double v = (-px * sa + py * ca) / ry;
      const double r = std::sqrt(u * u + v * v);

      const double noise = rng.uniform(-0.03, 0.03);
      Rgb c{background + noise, background + noise, background + noise};
      const double inside = 1.0 - smoothstep(0.95, 1.05, r);
      if (inside > 0.0) {
        Rgb cell = mix(body, rim, smoothstep(0.6, 1.0, r));
        for (const auto& b : blobs) {
          const double d = std::hypot(static_cast<double>(x) + 0.5 - b.cx,
                                      static_cast<double>(y) + 0.5 - b.cy);
          const double w = 1.0 - smoothstep(b.radius * 0.7, b.radius * 1.2, d);
          cell = mix(cell, b.color, w);
        }
        c = mix(c, Rgb{cell.r + noise, cell.g + noise, cell.b + noise}, inside);
      }
      img.at(y, x, 0) = clamp01(c.r);
      img.at(y, x, 1) = clamp01(c.g);
      img.at(y, x, 2) = clamp01(c.b);
    }
  }
  return img;
}

void synth_generate(const fs::path& out, const SynthConfig& config) {
  if (config.n < 2) throw ConfigError("synthetic set needs n >= 2");
  if (!(config.parasitized_fraction > 0.0 && config.parasitized_fraction < 1.0)) {
    throw ConfigError("parasitized fraction must lie in (0, 1)");
  }
  if (config.side < 8) throw ConfigError("synthetic images need side >= 8");

  const auto n_par = static_cast<std::size_t>(
      std::llround(config.parasitized_fraction * static_cast<double>(config.n)));
  const std::size_t n_uninf = config.n - n_par;
  if (n_par == 0 || n_uninf == 0) {
    throw ConfigError("parasitized fraction leaves one class empty");
  }

  std::error_code ec;
  fs::create_directories(out / kParasitizedDir, ec);
  if (!ec) fs::create_directories(out / kUninfectedDir, ec);
  if (ec) {
    throw Error("cannot create output directory " + out.string() + ": " + ec.message());
  }

  SeededPrng master(config.seed);
  const auto write_class = [&](const char* dir, std::size_t count, bool parasitized) {
    for (std::size_t i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "cell_%05zu.png", i);
      const auto image = synth_cell(config.side, parasitized, master.next());
      io::write_file_atomic(out / dir / name, imaging::encode_png(image));
    }
  };
  write_class(kParasitizedDir, n_par, true);
  write_class(kUninfectedDir, n_uninf, false);

  nlohmann::ordered_json manifest;
  manifest["generator"] = kGeneratorVersion;
  manifest["seed"] = config.seed;
  manifest["n"] = config.n;
  manifest["fraction"] = config.parasitized_fraction;
  manifest["side"] = config.side;
  manifest["parasitized"] = n_par;
  manifest["uninfected"] = n_uninf;
  io::write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace cellgrade::data
