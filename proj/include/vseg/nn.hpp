#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg::nn {

enum class Padding { Same, Valid };

namespace detail {

struct ConvDims {
  int n, c, h, w;
  int oc, kh, kw;
  int oh, ow;
  int pad_top, pad_left;
};

inline ConvDims conv_dims(const Shape& x, int oc, int kh, int kw, int stride, Padding padding,
                          const char* opname) {
  if (x.size() != 4) throw std::invalid_argument(std::string(opname) + ": input must be [n,c,h,w], got " + shape_str(x));
  ConvDims d{};
  d.n = x[0];
  d.c = x[1];
  d.h = x[2];
  d.w = x[3];
  d.oc = oc;
  d.kh = kh;
  d.kw = kw;
  if (padding == Padding::Same) {
    d.oh = (d.h + stride - 1) / stride;
    d.ow = (d.w + stride - 1) / stride;
    const int pad_h = std::max(0, (d.oh - 1) * stride + kh - d.h);
    const int pad_w = std::max(0, (d.ow - 1) * stride + kw - d.w);
    d.pad_top = pad_h / 2;
    d.pad_left = pad_w / 2;
  } else {
    if (d.h < kh || d.w < kw) {
      throw std::invalid_argument(std::string(opname) + ": spatial extent " + std::to_string(d.h) + "x" +
                                  std::to_string(d.w) + " smaller than kernel " + std::to_string(kh) +
                                  "x" + std::to_string(kw) + " under valid padding");
    }
    d.oh = (d.h - kh) / stride + 1;
    d.ow = (d.w - kw) / stride + 1;
    d.pad_top = 0;
    d.pad_left = 0;
  }
  return d;
}

/// Gathers conv patches of one image into [c*kh*kw, oh*ow]; zero fill outside.
inline void im2col(const float* x, const ConvDims& d, int stride, float* cols) {
  const std::int64_t plane = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
  std::int64_t row = 0;
  for (int c = 0; c < d.c; ++c) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx, ++row) {
        float* dst = cols + row * out_plane;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int sy = oy * stride - d.pad_top + ky;
          if (sy < 0 || sy >= d.h) {
            std::fill_n(dst + static_cast<std::int64_t>(oy) * d.ow, d.ow, 0.0f);
            continue;
          }
          const float* src_row = x + c * plane + static_cast<std::int64_t>(sy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int sx = ox * stride - d.pad_left + kx;
            dst[static_cast<std::int64_t>(oy) * d.ow + ox] =
                (sx >= 0 && sx < d.w) ? src_row[sx] : 0.0f;
          }
        }
      }
    }
  }
}

/// Scatter-add of column gradients back onto the input image.
inline void col2im_add(const float* cols, const ConvDims& d, int stride, float* dx) {
  const std::int64_t plane = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
  std::int64_t row = 0;
  for (int c = 0; c < d.c; ++c) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx, ++row) {
        const float* src = cols + row * out_plane;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int sy = oy * stride - d.pad_top + ky;
          if (sy < 0 || sy >= d.h) continue;
          float* dst_row = dx + c * plane + static_cast<std::int64_t>(sy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int sx = ox * stride - d.pad_left + kx;
            if (sx >= 0 && sx < d.w) dst_row[sx] += src[static_cast<std::int64_t>(oy) * d.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D convolution with cross-correlation semantics (no kernel flip).
/// weight [oc,ic,kh,kw], bias [oc]; bias may be undefined to skip it.
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride = 1,
                     Padding padding = Padding::Same) {
  if (weight.rank() != 4) throw std::invalid_argument("conv2d: weight must be [oc,ic,kh,kw]");
  const int oc = weight.shape()[0], ic = weight.shape()[1];
  const int kh = weight.shape()[2], kw = weight.shape()[3];
  const auto d = detail::conv_dims(x.shape(), oc, kh, kw, stride, padding, "conv2d");
  if (d.c != ic) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(d.c) + " channels, weight expects " +
                                std::to_string(ic));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != oc)) {
    throw std::invalid_argument("conv2d: bias must be [oc]");
  }

  const std::int64_t krows = static_cast<std::int64_t>(ic) * kh * kw;
  const std::int64_t out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
  const std::int64_t in_image = static_cast<std::int64_t>(d.c) * d.h * d.w;
  const std::int64_t out_image = static_cast<std::int64_t>(oc) * out_plane;

  std::vector<float> cols(static_cast<std::size_t>(krows * out_plane));
  std::vector<float> out(static_cast<std::size_t>(d.n) * static_cast<std::size_t>(out_image));
  for (int img = 0; img < d.n; ++img) {
    detail::im2col(x.data().data() + img * in_image, d, stride, cols.data());
    vseg::detail::gemm(weight.data().data(), cols.data(), out.data() + img * out_image,
                       oc, static_cast<int>(krows), static_cast<int>(out_plane), false, false, 0.0f);
  }
  if (bias.defined()) {
    for (int img = 0; img < d.n; ++img) {
      for (int c = 0; c < oc; ++c) {
        float* dst = out.data() + img * out_image + c * out_plane;
        const float b = bias.data()[static_cast<std::size_t>(c)];
        for (std::int64_t i = 0; i < out_plane; ++i) dst[i] += b;
      }
    }
  }

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  auto backward = [xn, wn, bn, d, stride, krows, out_plane, in_image, out_image](TensorNode& self) {
    std::vector<float> cols(static_cast<std::size_t>(krows * out_plane));
    const bool need_dx = xn->requires_grad;
    const bool need_dw = wn->requires_grad;
    if (need_dx) xn->ensure_grad();
    if (need_dw) wn->ensure_grad();
    std::vector<float> dcols(need_dx ? static_cast<std::size_t>(krows * out_plane) : 0);
    for (int img = 0; img < d.n; ++img) {
      const float* dy = self.grad.data() + img * out_image;
      if (need_dw) {
        detail::im2col(xn->data.data() + img * in_image, d, stride, cols.data());
        // dW += dY * cols^T
        vseg::detail::gemm(dy, cols.data(), wn->grad.data(), d.oc, static_cast<int>(out_plane),
                           static_cast<int>(krows), false, true, 1.0f);
      }
      if (need_dx) {
        // dcols = W^T * dY, then scatter back
        vseg::detail::gemm(wn->data.data(), dy, dcols.data(), static_cast<int>(krows), d.oc,
                           static_cast<int>(out_plane), true, false, 0.0f);
        detail::col2im_add(dcols.data(), d, stride, xn->grad.data() + img * in_image);
      }
    }
    if (bn && bn->requires_grad) {
      bn->ensure_grad();
      for (int img = 0; img < d.n; ++img) {
        for (int c = 0; c < d.oc; ++c) {
          const float* dy = self.grad.data() + img * out_image + c * out_plane;
          float acc = 0.0f;
          for (std::int64_t i = 0; i < out_plane; ++i) acc += dy[i];
          bn->grad[static_cast<std::size_t>(c)] += acc;
        }
      }
    }
  };
  std::vector<std::shared_ptr<TensorNode>> parents{xn, wn};
  if (bn) parents.push_back(bn);
  return vseg::detail::make_op_result({d.n, oc, d.oh, d.ow}, std::move(out), std::move(parents),
                                      std::move(backward));
}

/// Per-channel convolution, weight [c,1,kh,kw]; channel i only sees plane i.
inline Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, Padding padding = Padding::Same) {
  if (weight.rank() != 4 || weight.shape()[1] != 1) {
    throw std::invalid_argument("depthwise_conv2d: weight must be [c,1,kh,kw]");
  }
  const int kh = weight.shape()[2], kw = weight.shape()[3];
  const auto d = detail::conv_dims(x.shape(), weight.shape()[0], kh, kw, 1, padding, "depthwise_conv2d");
  if (d.c != weight.shape()[0]) {
    throw std::invalid_argument("depthwise_conv2d: input has " + std::to_string(d.c) +
                                " channels, weight expects " + std::to_string(weight.shape()[0]));
  }
  const std::int64_t plane = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
  std::vector<float> out(static_cast<std::size_t>(d.n) * d.c * out_plane, 0.0f);
  const auto& xd = x.data();
  const auto& wd = weight.data();
  for (int img = 0; img < d.n; ++img) {
    for (int c = 0; c < d.c; ++c) {
      const float* src = xd.data() + (static_cast<std::int64_t>(img) * d.c + c) * plane;
      const float* k = wd.data() + static_cast<std::int64_t>(c) * kh * kw;
      float* dst = out.data() + (static_cast<std::int64_t>(img) * d.c + c) * out_plane;
      for (int oy = 0; oy < d.oh; ++oy) {
        for (int ox = 0; ox < d.ow; ++ox) {
          float acc = 0.0f;
          for (int ky = 0; ky < kh; ++ky) {
            const int sy = oy - d.pad_top + ky;
            if (sy < 0 || sy >= d.h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int sx = ox - d.pad_left + kx;
              if (sx < 0 || sx >= d.w) continue;
              acc += src[sy * static_cast<std::int64_t>(d.w) + sx] * k[ky * kw + kx];
            }
          }
          dst[oy * static_cast<std::int64_t>(d.ow) + ox] = acc;
        }
      }
    }
  }
  auto xn = x.node();
  auto wn = weight.node();
  auto backward = [xn, wn, d, kh, kw, plane, out_plane](TensorNode& self) {
    const bool need_dx = xn->requires_grad;
    const bool need_dw = wn->requires_grad;
    if (need_dx) xn->ensure_grad();
    if (need_dw) wn->ensure_grad();
    for (int img = 0; img < d.n; ++img) {
      for (int c = 0; c < d.c; ++c) {
        const float* src = xn->data.data() + (static_cast<std::int64_t>(img) * d.c + c) * plane;
        const float* k = wn->data.data() + static_cast<std::int64_t>(c) * kh * kw;
        const float* dy = self.grad.data() + (static_cast<std::int64_t>(img) * d.c + c) * out_plane;
        float* dx = need_dx ? xn->grad.data() + (static_cast<std::int64_t>(img) * d.c + c) * plane : nullptr;
        float* dk = need_dw ? wn->grad.data() + static_cast<std::int64_t>(c) * kh * kw : nullptr;
        for (int oy = 0; oy < d.oh; ++oy) {
          for (int ox = 0; ox < d.ow; ++ox) {
            const float g = dy[oy * static_cast<std::int64_t>(d.ow) + ox];
            if (g == 0.0f) continue;
            for (int ky = 0; ky < kh; ++ky) {
              const int sy = oy - d.pad_top + ky;
              if (sy < 0 || sy >= d.h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int sx = ox - d.pad_left + kx;
                if (sx < 0 || sx >= d.w) continue;
                if (dk) dk[ky * kw + kx] += g * src[sy * static_cast<std::int64_t>(d.w) + sx];
                if (dx) dx[sy * static_cast<std::int64_t>(d.w) + sx] += g * k[ky * kw + kx];
              }
            }
          }
        }
      }
    }
  };
  return vseg::detail::make_op_result({d.n, d.c, d.oh, d.ow}, std::move(out), {xn, wn}, std::move(backward));
}

/// 2x2 max pooling, stride 2. Gradient routes to the argmax; ties go to the
/// first element in row-major window order.
inline Tensor maxpool2x2(const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument("maxpool2x2: input must be [n,c,h,w]");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (h % 2 != 0 || w % 2 != 0) {
    throw std::invalid_argument("maxpool2x2: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                                " must be even");
  }
  const int oh = h / 2, ow = w / 2;
  const std::int64_t out_n = static_cast<std::int64_t>(n) * c * oh * ow;
  std::vector<float> out(static_cast<std::size_t>(out_n));
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out_n));
  const auto& xd = x.data();
  std::int64_t o = 0;
  for (std::int64_t plane = 0; plane < static_cast<std::int64_t>(n) * c; ++plane) {
    const float* src = xd.data() + plane * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++o) {
        float best = -std::numeric_limits<float>::infinity();
        std::int64_t best_idx = -1;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::int64_t idx = (static_cast<std::int64_t>(oy) * 2 + dy) * w + ox * 2 + dx;
            if (src[idx] > best) {
              best = src[idx];
              best_idx = plane * h * w + idx;
            }
          }
        }
        out[static_cast<std::size_t>(o)] = best;
        argmax[static_cast<std::size_t>(o)] = best_idx;
      }
    }
  }
  auto xn = x.node();
  auto backward = [xn, argmax](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < argmax.size(); ++i) {
      xn->grad[static_cast<std::size_t>(argmax[i])] += self.grad[i];
    }
  };
  return vseg::detail::make_op_result({n, c, oh, ow}, std::move(out), {xn}, std::move(backward));
}

/// Nearest-neighbour 2x upsampling; each pixel becomes a 2x2 block.
inline Tensor upsample_nearest2x(const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument("upsample_nearest2x: input must be [n,c,h,w]");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const int oh = h * 2, ow = w * 2;
  std::vector<float> out(static_cast<std::size_t>(numel({n, c, oh, ow})));
  const auto& xd = x.data();
  for (std::int64_t plane = 0; plane < static_cast<std::int64_t>(n) * c; ++plane) {
    const float* src = xd.data() + plane * h * w;
    float* dst = out.data() + plane * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const float* src_row = src + static_cast<std::int64_t>(y / 2) * w;
      float* dst_row = dst + static_cast<std::int64_t>(y) * ow;
      for (int x2 = 0; x2 < ow; ++x2) dst_row[x2] = src_row[x2 / 2];
    }
  }
  auto xn = x.node();
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  auto backward = [xn, planes, h, w, oh, ow](TensorNode& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::int64_t plane = 0; plane < planes; ++plane) {
      const float* g = self.grad.data() + plane * oh * ow;
      float* dst = xn->grad.data() + plane * h * w;
      for (int y = 0; y < oh; ++y) {
        for (int x2 = 0; x2 < ow; ++x2) {
          dst[static_cast<std::int64_t>(y / 2) * w + x2 / 2] += g[static_cast<std::int64_t>(y) * ow + x2];
        }
      }
    }
  };
  return vseg::detail::make_op_result({n, c, oh, ow}, std::move(out), {xn}, std::move(backward));
}

/// Per-pixel softmax over the channel axis, stabilized by max subtraction.
/// The subtracted max is detached; softmax is shift-invariant so the gradient
/// is unaffected.
inline Tensor softmax_channels(const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument("softmax_channels: input must be [n,c,h,w]");
  if (x.shape()[1] < 2) throw std::invalid_argument("softmax_channels: needs at least 2 channels");
  Tensor m = max(x, {1}, true).detach();
  Tensor e = exp(sub(x, m));
  Tensor s = sum(e, {1}, true);
  return div(e, s);
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// Dense 2-D convolution layer.
struct Conv2d {
  Tensor weight;  // [oc, ic, kh, kw]
  Tensor bias;    // [oc]
  int stride = 1;
  Padding padding = Padding::Same;

  /// He-style fan-in scaled uniform init, zero bias.
  static Conv2d create(int in_ch, int out_ch, int kh, int kw, Rng& rng,
                       Padding padding = Padding::Same, int stride = 1) {
    const float limit = std::sqrt(6.0f / static_cast<float>(in_ch * kh * kw));
    Conv2d layer;
    layer.weight = Tensor::rand_uniform({out_ch, in_ch, kh, kw}, rng, -limit, limit, true);
    layer.bias = Tensor::zeros({out_ch}, true);
    layer.stride = stride;
    layer.padding = padding;
    return layer;
  }

  std::int64_t param_count() const { return weight.size() + bias.size(); }
  int out_channels() const { return weight.shape()[0]; }
  int in_channels() const { return weight.shape()[1]; }
};

inline Tensor conv2d_forward(const Tensor& x, const Conv2d& layer) {
  return conv2d(x, layer.weight, layer.bias, layer.stride, layer.padding);
}

/// Depthwise-separable convolution: per-channel spatial conv, then 1x1
/// pointwise mix with bias.
struct SeparableConv2d {
  Tensor depthwise;  // [ic, 1, kh, kw]
  Tensor pointwise;  // [oc, ic, 1, 1]
  Tensor bias;       // [oc]
  Padding padding = Padding::Same;

  static SeparableConv2d create(int in_ch, int out_ch, int kh, int kw, Rng& rng,
                                Padding padding = Padding::Same) {
    SeparableConv2d layer;
    const float dw_limit = std::sqrt(6.0f / static_cast<float>(kh * kw));
    const float pw_limit = std::sqrt(6.0f / static_cast<float>(in_ch));
    layer.depthwise = Tensor::rand_uniform({in_ch, 1, kh, kw}, rng, -dw_limit, dw_limit, true);
    layer.pointwise = Tensor::rand_uniform({out_ch, in_ch, 1, 1}, rng, -pw_limit, pw_limit, true);
    layer.bias = Tensor::zeros({out_ch}, true);
    layer.padding = padding;
    return layer;
  }

  std::int64_t param_count() const { return depthwise.size() + pointwise.size() + bias.size(); }
  int out_channels() const { return pointwise.shape()[0]; }
  int in_channels() const { return pointwise.shape()[1]; }
};

inline Tensor separable_conv2d_forward(const Tensor& x, const SeparableConv2d& layer) {
  Tensor mid = depthwise_conv2d(x, layer.depthwise, layer.padding);
  return conv2d(mid, layer.pointwise, layer.bias, 1, Padding::Same);
}

}  // namespace vseg::nn
