#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "vseg/image.hpp"
#include "vseg/rng.hpp"

namespace vseg::data {

struct AugmentParams {
  float max_rotation_deg = 30.0f;
  float zoom_min = 0.8f;
  float zoom_max = 1.2f;
};

/// Rotation about the image centre (positive = counter-clockwise with y down)
/// combined with zoom (>1 magnifies). The same transform is applied to both
/// halves of the pair: bilinear for the image, nearest for the mask, with
/// background fill (pixel 0 / class 0) outside the source.
inline std::pair<Image, LabelMask> rotate_zoom(const Image& img, const LabelMask& mask,
                                               float angle_deg, float zoom) {
  if (img.height != mask.height || img.width != mask.width) {
    throw std::invalid_argument("rotate_zoom: image and mask extents differ");
  }
  if (zoom <= 0.0f) throw std::invalid_argument("rotate_zoom: zoom must be positive");
  if (angle_deg == 0.0f && zoom == 1.0f) return {img, mask};

  const int h = img.height, w = img.width;
  Image out_img = Image::create(h, w, img.channels);
  LabelMask out_mask = LabelMask::create(h, w);
  const double theta = angle_deg * (3.14159265358979323846 / 180.0);
  const double c = std::cos(theta), s = std::sin(theta);
  const double cy = (h - 1) * 0.5, cx = (w - 1) * 0.5;
  const double inv_zoom = 1.0 / zoom;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      // inverse map: rotate back by theta, then unscale
      const double sx = cx + (c * dx + s * dy) * inv_zoom;
      const double sy = cy + (-s * dx + c * dy) * inv_zoom;

      const int ny = static_cast<int>(std::floor(sy + 0.5));
      const int nx = static_cast<int>(std::floor(sx + 0.5));
      out_mask.at(y, x) = (ny >= 0 && ny < h && nx >= 0 && nx < w) ? mask.at(ny, nx) : 0;

      // small tolerance so exact 90-degree multiples keep boundary pixels
      constexpr double eps = 1e-6;
      if (sy < -eps || sy > h - 1 + eps || sx < -eps || sx > w - 1 + eps) continue;  // image fill stays 0
      const double csy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const double csx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      const int y0 = static_cast<int>(csy);
      const int x0 = static_cast<int>(csx);
      const int y1 = std::min(y0 + 1, h - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const float wy = static_cast<float>(csy - y0);
      const float wx = static_cast<float>(csx - x0);
      for (int ch = 0; ch < img.channels; ++ch) {
        const float top = img.at(ch, y0, x0) * (1.0f - wx) + img.at(ch, y0, x1) * wx;
        const float bot = img.at(ch, y1, x0) * (1.0f - wx) + img.at(ch, y1, x1) * wx;
        out_img.at(ch, y, x) = top * (1.0f - wy) + bot * wy;
      }
    }
  }
  return {std::move(out_img), std::move(out_mask)};
}

/// Seeded random rotation + zoom; deterministic for a given seed.
inline std::pair<Image, LabelMask> augment(const Image& img, const LabelMask& mask,
                                           std::uint64_t seed, const AugmentParams& params) {
  if (params.max_rotation_deg < 0.0f || params.zoom_min <= 0.0f || params.zoom_max < params.zoom_min) {
    throw std::invalid_argument("augment: invalid parameter ranges");
  }
  Rng rng(seed);
  const float angle = rng.uniformf(-params.max_rotation_deg, params.max_rotation_deg);
  const float zoom = rng.uniformf(params.zoom_min, params.zoom_max);
  return rotate_zoom(img, mask, angle, zoom);
}

}  // namespace vseg::data
