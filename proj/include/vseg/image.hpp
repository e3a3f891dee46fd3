#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

namespace vseg::data {

/// Planar float image, channel-major ([c][y][x]), values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  static Image create(int height, int width, int channels) {
    Image img;
    img.height = height;
    img.width = width;
    img.channels = channels;
    img.pixels.assign(static_cast<std::size_t>(height) * width * channels, 0.0f);
    return img;
  }

  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

/// Per-pixel integer class labels. For the trimap task the alphabet is
/// {0 background, 1 blade, 2 veins}.
struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  static LabelMask create(int height, int width) {
    LabelMask m;
    m.height = height;
    m.width = width;
    m.labels.assign(static_cast<std::size_t>(height) * width, 0);
    return m;
  }

  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

namespace detail {

struct PngMessage {
  char text[240] = "unknown error";
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* out = static_cast<PngMessage*>(png_get_error_ptr(png));
  std::snprintf(out->text, sizeof(out->text), "%s", msg);
  std::longjmp(png_jmpbuf(png), 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

/// Reads an 8-bit gray or RGB PNG into packed bytes (row-major, interleaved).
inline void read_png_bytes(const std::string& path, int& width, int& height, int& channels,
                           std::vector<std::uint8_t>& bytes) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open " + path);
  PngMessage msg;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &msg, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("libpng init failed for " + path);
  }
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("corrupt PNG " + path + ": " + msg.text);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error(path + ": unsupported bit depth " + std::to_string(bit_depth) +
                             " (only 8-bit PNG is supported)");
  }
  if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error(path + ": unsupported color type " + std::to_string(color_type) +
                             " (only 8-bit grayscale or RGB is supported)");
  }
  channels = color_type == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  width = static_cast<int>(w);
  height = static_cast<int>(h);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  bytes.assign(static_cast<std::size_t>(width) * height * channels, 0);
  rows.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * width * channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
}

inline void write_png_bytes(const std::string& path, int width, int height, int channels,
                            const std::uint8_t* bytes) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot create " + path);
  PngMessage msg;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &msg, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("failed to write PNG " + path + ": " + msg.text);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes + static_cast<std::size_t>(y) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace detail

/// 8-bit grayscale or RGB PNG, scaled by 1/255.
inline Image load_image(const std::string& path) {
  int w = 0, h = 0, c = 0;
  std::vector<std::uint8_t> bytes;
  detail::read_png_bytes(path, w, h, c, bytes);
  Image img = Image::create(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        img.at(ch, y, x) = bytes[(static_cast<std::size_t>(y) * w + x) * c + ch] / 255.0f;
  return img;
}

inline void save_image(const Image& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("save_image: channels must be 1 or 3");
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(img.height) * img.width * img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        bytes[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  detail::write_png_bytes(path, img.width, img.height, img.channels, bytes.data());
}

/// 8-bit single-channel PNG holding raw labels; no value restriction.
inline LabelMask load_mask(const std::string& path) {
  int w = 0, h = 0, c = 0;
  std::vector<std::uint8_t> bytes;
  detail::read_png_bytes(path, w, h, c, bytes);
  if (c != 1) throw std::runtime_error(path + ": trimap must be single-channel, got " + std::to_string(c));
  LabelMask m = LabelMask::create(h, w);
  m.labels = std::move(bytes);
  return m;
}

/// Trimap loader; any pixel outside {0,1,2} is rejected with its value and
/// position.
inline LabelMask load_trimap(const std::string& path) {
  LabelMask m = load_mask(path);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x) > 2) {
        throw std::runtime_error(path + ": invalid trimap value " + std::to_string(m.at(y, x)) +
                                 " at (" + std::to_string(x) + "," + std::to_string(y) + ")");
      }
  return m;
}

inline void save_trimap(const LabelMask& mask, const std::string& path) {
  detail::write_png_bytes(path, mask.width, mask.height, 1, mask.labels.data());
}

/// Human-viewable rendering: background black, blade green, veins red,
/// further labels from a fixed palette.
inline Image colorize_mask(const LabelMask& mask) {
  static constexpr std::uint8_t palette[10][3] = {
      {0, 0, 0},     {0, 200, 0},   {220, 0, 0},   {40, 90, 220},  {230, 220, 40},
      {200, 60, 200}, {60, 210, 210}, {240, 140, 40}, {140, 80, 20}, {255, 255, 255}};
  Image img = Image::create(mask.height, mask.width, 3);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const auto& rgb = palette[mask.at(y, x) % 10];
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c] / 255.0f;
    }
  return img;
}

// ---------------------------------------------------------------------------
// Resizing and intensity correction
// ---------------------------------------------------------------------------

/// Bilinear resize with half-pixel (corner-aligned-false) sampling.
inline Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_bilinear: target extent must be positive");
  if (out_h == img.height && out_w == img.width) return img;
  Image out = Image::create(out_h, out_w, img.channels);
  const float sy = static_cast<float>(img.height) / out_h;
  const float sx = static_cast<float>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const float top = img.at(c, y0, x0) * (1.0f - wx) + img.at(c, y0, x1) * wx;
        const float bot = img.at(c, y1, x0) * (1.0f - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1.0f - wy) + bot * wy;
      }
    }
  }
  return out;
}

/// Nearest-neighbour mask resize; labels are never blended.
inline LabelMask resize_nearest(const LabelMask& mask, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_nearest: target extent must be positive");
  if (out_h == mask.height && out_w == mask.width) return mask;
  LabelMask out = LabelMask::create(out_h, out_w);
  const float sy = static_cast<float>(mask.height) / out_h;
  const float sx = static_cast<float>(mask.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const int src_y = std::min(static_cast<int>((y + 0.5f) * sy), mask.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const int src_x = std::min(static_cast<int>((x + 0.5f) * sx), mask.width - 1);
      out.at(y, x) = mask.at(src_y, src_x);
    }
  }
  return out;
}

/// s = 1 / (1 + exp(gain * (cutoff - x))), applied per value.
inline Image sigmoid_correction(const Image& img, float gain = 10.0f, float cutoff = 0.5f) {
  if (gain <= 0.0f) throw std::invalid_argument("sigmoid_correction: gain must be positive");
  Image out = img;
  for (auto& v : out.pixels) v = 1.0f / (1.0f + std::exp(gain * (cutoff - v)));
  return out;
}

}  // namespace vseg::data
