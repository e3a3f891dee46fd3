#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vseg/image.hpp"
#include "vseg/rng.hpp"

namespace vseg::synth {

struct Ellipse {
  double cx = 0, cy = 0;  // centre, pixel units
  double a = 0, b = 0;    // semi-axes, a along the rotated major axis
  double rotation = 0;    // radians
};

struct Polyline {
  std::vector<std::pair<double, double>> points;  // (x, y)
  double width = 1.0;                             // stroke width in px
};

struct Rgb {
  float r = 0, g = 0, b = 0;
};

inline float color_distance(const Rgb& p, const Rgb& q) {
  const float dr = p.r - q.r, dg = p.g - q.g, db = p.b - q.b;
  return std::sqrt(dr * dr + dg * dg + db * db);
}

/// Full description of one synthetic leaf; generate() is a pure function of
/// this. The vein polylines are built inside the blade ellipse.
struct LeafParams {
  Ellipse blade;
  std::vector<Polyline> veins;  // midrib first, then laterals
  Rgb background_color, blade_color, vein_color;
  float noise_sigma = 0.03f;
  std::uint64_t seed = 0;
};

enum class Contrast { High, Low };

struct ClassFractions {
  double background = 0, blade = 0, veins = 0;
};

inline ClassFractions measure_fractions(const data::LabelMask& mask) {
  ClassFractions f;
  const double total = static_cast<double>(mask.labels.size());
  for (auto v : mask.labels) {
    if (v == 0) f.background += 1;
    else if (v == 1) f.blade += 1;
    else f.veins += 1;
  }
  f.background /= total;
  f.blade /= total;
  f.veins /= total;
  return f;
}

inline bool inside_ellipse(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx, dy = y - e.cy;
  const double c = std::cos(e.rotation), s = std::sin(e.rotation);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return (u * u) / (e.a * e.a) + (v * v) / (e.b * e.b) <= 1.0;
}

namespace detail {

inline double dist_to_segment(double px, double py, double x0, double y0, double x1, double y1) {
  const double vx = x1 - x0, vy = y1 - y0;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - x0) * vx + (py - y0) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (x0 + t * vx), dy = py - (y0 + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

inline bool on_polyline(const Polyline& line, double x, double y) {
  const double half = line.width * 0.5;
  for (std::size_t i = 0; i + 1 < line.points.size(); ++i) {
    if (dist_to_segment(x, y, line.points[i].first, line.points[i].second, line.points[i + 1].first,
                        line.points[i + 1].second) <= half) {
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Rasterizes labels only: veins override blade override background, so every
/// pixel carries exactly one label. Vein strokes are clipped to the ellipse.
inline data::LabelMask rasterize_mask(const LeafParams& params, int h, int w) {
  if (params.blade.a <= 0 || params.blade.b <= 0) {
    throw std::invalid_argument("rasterize_mask: infeasible geometry (non-positive ellipse axes)");
  }
  data::LabelMask mask = data::LabelMask::create(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!inside_ellipse(params.blade, x, y)) continue;
      std::uint8_t label = 1;
      for (const auto& line : params.veins) {
        if (detail::on_polyline(line, x, y)) {
          label = 2;
          break;
        }
      }
      mask.at(y, x) = label;
    }
  }
  return mask;
}

/// Paints the image from the mask colors plus clamped Gaussian noise.
inline data::Image paint_image(const LeafParams& params, const data::LabelMask& mask) {
  data::Image img = data::Image::create(mask.height, mask.width, 3);
  Rng noise(derive_seed(params.seed, 7));
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const Rgb& c = mask.at(y, x) == 0 ? params.background_color
                    : mask.at(y, x) == 1 ? params.blade_color
                                         : params.vein_color;
      const float base[3] = {c.r, c.g, c.b};
      for (int ch = 0; ch < 3; ++ch) {
        const float v = base[ch] + static_cast<float>(noise.normal(0.0, params.noise_sigma));
        img.at(ch, y, x) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return img;
}

/// Class-balance guardrails; mirrors the imbalance of the real task where
/// veins are a thin minority class.
inline bool fractions_in_bounds(const ClassFractions& f) {
  return f.blade >= 0.2 && f.blade <= 0.7 && f.veins >= 0.005 && f.veins <= 0.05 && f.veins < f.blade &&
         f.veins < f.background;
}

/// Deterministic pair from explicit parameters. Rejects geometry whose
/// rasterized class balance leaves the supported range.
inline std::pair<data::Image, data::LabelMask> generate(const LeafParams& params, int h, int w) {
  data::LabelMask mask = rasterize_mask(params, h, w);
  const auto f = measure_fractions(mask);
  if (!fractions_in_bounds(f)) {
    throw std::invalid_argument("generate: infeasible geometry (blade fraction " + std::to_string(f.blade) +
                                ", vein fraction " + std::to_string(f.veins) + ")");
  }
  data::Image img = paint_image(params, mask);
  return {std::move(img), std::move(mask)};
}

inline LeafParams sample_leaf_params(std::uint64_t seed, Contrast contrast, int h, int w) {
  Rng rng(seed);
  LeafParams p;
  p.seed = seed;

  const double s = std::min(h, w);
  p.blade.cx = w * 0.5 + rng.uniform(-0.06, 0.06) * w;
  p.blade.cy = h * 0.5 + rng.uniform(-0.06, 0.06) * h;
  p.blade.rotation = rng.uniform(0.0, 3.14159265358979323846);
  const double area_fraction = rng.uniform(0.30, 0.50);
  const double aspect = rng.uniform(1.25, 1.8);
  p.blade.b = std::sqrt(area_fraction * h * w / (3.14159265358979323846 * aspect));
  p.blade.a = p.blade.b * aspect;

  const double cr = std::cos(p.blade.rotation), sr = std::sin(p.blade.rotation);
  auto to_image = [&](double u, double v) {
    return std::pair<double, double>{p.blade.cx + cr * u - sr * v, p.blade.cy + sr * u + cr * v};
  };

  // midrib along the major axis
  Polyline midrib;
  midrib.width = std::max(1.0, 0.022 * s);
  midrib.points.push_back(to_image(-0.82 * p.blade.a, 0.0));
  midrib.points.push_back(to_image(0.82 * p.blade.a, 0.0));
  p.veins.push_back(midrib);

  // lateral branches leaving the midrib towards the rim
  const int laterals = rng.uniform_int(2, 3);
  const double lat_width = std::max(0.8, 0.013 * s);
  for (int i = 0; i < laterals; ++i) {
    const double t = -0.65 + 1.3 * (i + rng.uniform(0.3, 0.7)) / laterals;
    for (int side = -1; side <= 1; side += 2) {
      const double angle = rng.uniform(0.6, 1.1);  // radians off the midrib
      const double base_u = t * p.blade.a;
      // longest in-ellipse run along the branch direction, then shortened
      const double du = std::cos(angle), dv = side * std::sin(angle);
      double tmax = 0.0;
      for (double probe = 0.0; probe < 2.0 * p.blade.a; probe += 0.5) {
        const double u = base_u + du * probe, v = dv * probe;
        if ((u * u) / (p.blade.a * p.blade.a) + (v * v) / (p.blade.b * p.blade.b) > 0.9) break;
        tmax = probe;
      }
      const double len = tmax * rng.uniform(0.5, 0.8);
      if (len < 1.5) continue;
      Polyline lat;
      lat.width = lat_width;
      lat.points.push_back(to_image(base_u, 0.0));
      lat.points.push_back(to_image(base_u + du * len, dv * len));
      p.veins.push_back(std::move(lat));
    }
  }

  p.noise_sigma = rng.uniformf(0.02f, 0.04f);
  if (contrast == Contrast::High) {
    p.background_color = {rng.uniformf(0.08f, 0.22f), rng.uniformf(0.08f, 0.20f), rng.uniformf(0.05f, 0.16f)};
    p.blade_color = {rng.uniformf(0.15f, 0.35f), rng.uniformf(0.45f, 0.65f), rng.uniformf(0.15f, 0.30f)};
    p.vein_color = {rng.uniformf(0.70f, 0.85f), rng.uniformf(0.70f, 0.88f), rng.uniformf(0.32f, 0.50f)};
  } else {
    p.background_color = {rng.uniformf(0.10f, 0.20f), rng.uniformf(0.10f, 0.20f), rng.uniformf(0.08f, 0.18f)};
    p.blade_color = {rng.uniformf(0.40f, 0.48f), rng.uniformf(0.46f, 0.54f), rng.uniformf(0.36f, 0.44f)};
    // veins barely brighter than the blade; the low-contrast failure mode
    const float delta = rng.uniformf(0.035f, 0.06f);
    p.vein_color = {p.blade_color.r + delta, p.blade_color.g + delta, p.blade_color.b + delta * 0.8f};
  }
  return p;
}

/// Seeded sample with bounded resampling until the class balance lands in
/// range.
inline std::pair<data::Image, data::LabelMask> generate_sample(std::uint64_t seed, Contrast contrast,
                                                               int h, int w) {
  for (int attempt = 0; attempt < 32; ++attempt) {
    const LeafParams params = sample_leaf_params(derive_seed(seed, static_cast<std::uint64_t>(attempt)),
                                                 contrast, h, w);
    data::LabelMask mask = rasterize_mask(params, h, w);
    if (!fractions_in_bounds(measure_fractions(mask))) continue;
    data::Image img = paint_image(params, mask);
    return {std::move(img), std::move(mask)};
  }
  throw std::runtime_error("generate_sample: no feasible geometry after 32 attempts at " +
                           std::to_string(w) + "x" + std::to_string(h));
}

/// Writes n unique pairs in the dataset directory layout
/// (images/leaf_###.png + trimaps/leaf_###.png).
inline void generate_dataset(const std::string& out_dir, int n, int h, int w, Contrast contrast,
                             std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  fs::create_directories(fs::path(out_dir) / "trimaps", ec);
  if (!fs::is_directory(fs::path(out_dir) / "images") || !fs::is_directory(fs::path(out_dir) / "trimaps")) {
    throw std::runtime_error("generate_dataset: cannot create output directory " + out_dir);
  }
  for (int i = 0; i < n; ++i) {
    auto [img, mask] = generate_sample(derive_seed(seed, 1000 + static_cast<std::uint64_t>(i)), contrast, h, w);
    char name[32];
    std::snprintf(name, sizeof(name), "leaf_%03d", i);
    data::save_image(img, (fs::path(out_dir) / "images" / (std::string(name) + ".png")).string());
    data::save_trimap(mask, (fs::path(out_dir) / "trimaps" / (std::string(name) + ".png")).string());
  }
}

}  // namespace vseg::synth
