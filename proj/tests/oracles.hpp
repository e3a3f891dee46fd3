#pragma once

// Independent double-precision reference implementations used as test
// oracles. Everything here is written as plain nested loops, straight from
// the mathematical definitions, and must stay decoupled from the library's
// own compute paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace oracle {

struct DTensor {
  std::vector<int> shape;
  std::vector<double> v;

  static DTensor zeros(std::vector<int> shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return {std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0)};
  }
  double& at4(int a, int b, int c, int d) {
    return v[static_cast<std::size_t>(((static_cast<std::int64_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }
  double at4(int a, int b, int c, int d) const {
    return v[static_cast<std::size_t>(((static_cast<std::int64_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }
};

inline std::vector<double> widen(const std::vector<float>& x) {
  return std::vector<double>(x.begin(), x.end());
}

inline double sum(const std::vector<double>& x) {
  double s = 0.0;
  for (double e : x) s += e;
  return s;
}

// --- convolution family ----------------------------------------------------

struct Pad {
  int top = 0, left = 0, oh = 0, ow = 0;
};

inline Pad pad_for(int h, int w, int kh, int kw, int stride, bool same) {
  Pad p;
  if (same) {
    p.oh = (h + stride - 1) / stride;
    p.ow = (w + stride - 1) / stride;
    p.top = std::max(0, (p.oh - 1) * stride + kh - h) / 2;
    p.left = std::max(0, (p.ow - 1) * stride + kw - w) / 2;
  } else {
    p.oh = (h - kh) / stride + 1;
    p.ow = (w - kw) / stride + 1;
  }
  return p;
}

inline DTensor conv2d(const DTensor& x, const DTensor& w, const std::vector<double>* bias,
                      int stride, bool same) {
  const int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const int oc = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const Pad p = pad_for(h, wd, kh, kw, stride, same);
  DTensor out = DTensor::zeros({n, oc, p.oh, p.ow});
  for (int img = 0; img < n; ++img)
    for (int o = 0; o < oc; ++o)
      for (int oy = 0; oy < p.oh; ++oy)
        for (int ox = 0; ox < p.ow; ++ox) {
          double acc = bias ? (*bias)[static_cast<std::size_t>(o)] : 0.0;
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int sy = oy * stride - p.top + ky;
                const int sx = ox * stride - p.left + kx;
                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                acc += x.at4(img, ci, sy, sx) * w.at4(o, ci, ky, kx);
              }
          out.at4(img, o, oy, ox) = acc;
        }
  return out;
}

inline DTensor depthwise_conv2d(const DTensor& x, const DTensor& w, bool same) {
  const int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const int kh = w.shape[2], kw = w.shape[3];
  const Pad p = pad_for(h, wd, kh, kw, 1, same);
  DTensor out = DTensor::zeros({n, c, p.oh, p.ow});
  for (int img = 0; img < n; ++img)
    for (int ci = 0; ci < c; ++ci)
      for (int oy = 0; oy < p.oh; ++oy)
        for (int ox = 0; ox < p.ow; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int sy = oy - p.top + ky;
              const int sx = ox - p.left + kx;
              if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
              acc += x.at4(img, ci, sy, sx) * w.at4(ci, 0, ky, kx);
            }
          out.at4(img, ci, oy, ox) = acc;
        }
  return out;
}

inline DTensor maxpool2x2(const DTensor& x) {
  const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  DTensor out = DTensor::zeros({n, c, h / 2, w / 2});
  for (int img = 0; img < n; ++img)
    for (int ci = 0; ci < c; ++ci)
      for (int oy = 0; oy < h / 2; ++oy)
        for (int ox = 0; ox < w / 2; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) best = std::max(best, x.at4(img, ci, oy * 2 + dy, ox * 2 + dx));
          out.at4(img, ci, oy, ox) = best;
        }
  return out;
}

inline DTensor upsample_nearest2x(const DTensor& x) {
  const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  DTensor out = DTensor::zeros({n, c, h * 2, w * 2});
  for (int img = 0; img < n; ++img)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h * 2; ++y)
        for (int xx = 0; xx < w * 2; ++xx) out.at4(img, ci, y, xx) = x.at4(img, ci, y / 2, xx / 2);
  return out;
}

inline DTensor softmax_channels(const DTensor& x) {
  const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  DTensor out = DTensor::zeros(x.shape);
  for (int img = 0; img < n; ++img)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double m = -std::numeric_limits<double>::infinity();
        for (int ci = 0; ci < c; ++ci) m = std::max(m, x.at4(img, ci, y, xx));
        double z = 0.0;
        for (int ci = 0; ci < c; ++ci) z += std::exp(x.at4(img, ci, y, xx) - m);
        for (int ci = 0; ci < c; ++ci) out.at4(img, ci, y, xx) = std::exp(x.at4(img, ci, y, xx) - m) / z;
      }
  return out;
}

// --- losses -----------------------------------------------------------------

/// Mean over pixels of -w[t] * log softmax(logits)[t], evaluated pixel by pixel.
inline double weighted_cross_entropy(const DTensor& logits, const std::vector<int>& targets,
                                     const std::vector<double>& weights) {
  const int n = logits.shape[0], c = logits.shape[1], h = logits.shape[2], w = logits.shape[3];
  double total = 0.0;
  std::int64_t pix = 0;
  for (int img = 0; img < n; ++img)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx, ++pix) {
        const int t = targets[static_cast<std::size_t>(pix)];
        double m = -std::numeric_limits<double>::infinity();
        for (int ci = 0; ci < c; ++ci) m = std::max(m, logits.at4(img, ci, y, xx));
        double z = 0.0;
        for (int ci = 0; ci < c; ++ci) z += std::exp(logits.at4(img, ci, y, xx) - m);
        const double logp = logits.at4(img, t, y, xx) - m - std::log(z);
        total += -weights[static_cast<std::size_t>(t)] * logp;
      }
  return total / static_cast<double>(pix);
}

/// Direct double-loop evaluation of the fuzzy c-means objective:
/// centroids from current memberships, then sum of u^q * ||y - v||^2.
/// When `recompute_centroids` is false, `fixed_centroids` ([n][k][f]) is used
/// instead; that variant backs the detached-centroid gradient oracle.
inline double fcm_objective(const DTensor& memberships, const DTensor& features, double q,
                            bool mean_reduction, bool recompute_centroids = true,
                            const std::vector<std::vector<std::vector<double>>>* fixed_centroids = nullptr,
                            std::vector<std::vector<std::vector<double>>>* centroids_out = nullptr) {
  const int n = memberships.shape[0], k = memberships.shape[1];
  const int h = memberships.shape[2], w = memberships.shape[3];
  const int f = features.shape[1];
  double total = 0.0;
  std::vector<std::vector<std::vector<double>>> cents(
      static_cast<std::size_t>(n),
      std::vector<std::vector<double>>(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(f), 0.0)));
  for (int img = 0; img < n; ++img) {
    for (int ci = 0; ci < k; ++ci) {
      if (recompute_centroids) {
        double denom = 0.0;
        std::vector<double> num(static_cast<std::size_t>(f), 0.0);
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            const double uq = std::pow(memberships.at4(img, ci, y, xx), q);
            denom += uq;
            for (int fi = 0; fi < f; ++fi) num[static_cast<std::size_t>(fi)] += uq * features.at4(img, fi, y, xx);
          }
        for (int fi = 0; fi < f; ++fi)
          cents[static_cast<std::size_t>(img)][static_cast<std::size_t>(ci)][static_cast<std::size_t>(fi)] =
              num[static_cast<std::size_t>(fi)] / denom;
      } else {
        cents[static_cast<std::size_t>(img)][static_cast<std::size_t>(ci)] =
            (*fixed_centroids)[static_cast<std::size_t>(img)][static_cast<std::size_t>(ci)];
      }
    }
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int ci = 0; ci < k; ++ci) {
          const double uq = std::pow(memberships.at4(img, ci, y, xx), q);
          double dist = 0.0;
          for (int fi = 0; fi < f; ++fi) {
            const double diff = features.at4(img, fi, y, xx) -
                                cents[static_cast<std::size_t>(img)][static_cast<std::size_t>(ci)][static_cast<std::size_t>(fi)];
            dist += diff * diff;
          }
          total += uq * dist;
        }
  }
  if (centroids_out) *centroids_out = cents;
  if (mean_reduction) total /= static_cast<double>(static_cast<std::int64_t>(n) * h * w);
  return total;
}

/// Brute-force K-means within-cluster sum of squares for a hard assignment.
inline double kmeans_wcss(const DTensor& features, const std::vector<int>& assignment, int k) {
  const int n = features.shape[0], f = features.shape[1], h = features.shape[2], w = features.shape[3];
  double total = 0.0;
  for (int img = 0; img < n; ++img) {
    std::vector<std::vector<double>> cents(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(f), 0.0));
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    std::int64_t pix = static_cast<std::int64_t>(img) * h * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const int a = assignment[static_cast<std::size_t>(pix + y * w + xx)];
        counts[static_cast<std::size_t>(a)] += 1.0;
        for (int fi = 0; fi < f; ++fi) cents[static_cast<std::size_t>(a)][static_cast<std::size_t>(fi)] += features.at4(img, fi, y, xx);
      }
    for (int ci = 0; ci < k; ++ci)
      for (int fi = 0; fi < f; ++fi)
        if (counts[static_cast<std::size_t>(ci)] > 0.0) cents[static_cast<std::size_t>(ci)][static_cast<std::size_t>(fi)] /= counts[static_cast<std::size_t>(ci)];
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const int a = assignment[static_cast<std::size_t>(pix + y * w + xx)];
        double dist = 0.0;
        for (int fi = 0; fi < f; ++fi) {
          const double diff = features.at4(img, fi, y, xx) - cents[static_cast<std::size_t>(a)][static_cast<std::size_t>(fi)];
          dist += diff * diff;
        }
        total += dist;
      }
  }
  return total;
}

// --- finite-difference gradient checking ------------------------------------

/// Central finite differences in f64 against analytic f32 gradients.
/// Error metric, pinned for the whole suite: per input tensor,
///   max_i |analytic_i - fd_i| / (max_i |fd_i| + 1e-12),
/// i.e. worst absolute deviation relative to the gradient scale. Returns the
/// worst value over all checked tensors.
template <typename F>
double grad_check(F&& eval_f64, std::vector<std::vector<double>> inputs,
                  const std::vector<const std::vector<float>*>& analytic, double h = 1e-3) {
  if (inputs.size() != analytic.size()) throw std::invalid_argument("grad_check: input/grad count mismatch");
  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (!analytic[t]) continue;  // input not tracked
    std::vector<double> fd(inputs[t].size());
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      const double keep = inputs[t][i];
      inputs[t][i] = keep + h;
      const double fp = eval_f64(inputs);
      inputs[t][i] = keep - h;
      const double fm = eval_f64(inputs);
      inputs[t][i] = keep;
      fd[i] = (fp - fm) / (2.0 * h);
    }
    double scale = 0.0;
    for (double g : fd) scale = std::max(scale, std::fabs(g));
    double err = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      err = std::max(err, std::fabs(static_cast<double>((*analytic[t])[i]) - fd[i]));
    }
    worst = std::max(worst, err / (scale + 1e-12));
  }
  return worst;
}

}  // namespace oracle
