#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vseg/image.hpp"
#include "vseg/nn.hpp"
#include "vseg/tensor.hpp"

namespace vseg::loss {

/// Per-class loss weights, mean-normalized to 1.
struct ClassWeights {
  std::vector<float> weights;

  static ClassWeights uniform(int num_classes) {
    return {std::vector<float>(static_cast<std::size_t>(num_classes), 1.0f)};
  }
  int num_classes() const { return static_cast<int>(weights.size()); }
};

/// w_k proportional to total_pixels / count_k, rescaled to mean 1. Every
/// class must occur at least once.
inline ClassWeights class_weights_from_masks(const std::vector<data::LabelMask>& masks, int num_classes) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  std::int64_t total = 0;
  for (const auto& m : masks) {
    for (auto v : m.labels) {
      if (v >= num_classes) {
        throw std::invalid_argument("class_weights_from_masks: label " + std::to_string(v) +
                                    " outside [0," + std::to_string(num_classes) + ")");
      }
      ++counts[v];
      ++total;
    }
  }
  std::vector<double> raw(static_cast<std::size_t>(num_classes));
  double sum = 0.0;
  for (int k = 0; k < num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw std::invalid_argument("class_weights_from_masks: class " + std::to_string(k) +
                                  " has no pixels in the training set");
    }
    raw[static_cast<std::size_t>(k)] = static_cast<double>(total) / static_cast<double>(counts[static_cast<std::size_t>(k)]);
    sum += raw[static_cast<std::size_t>(k)];
  }
  ClassWeights out;
  out.weights.resize(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    out.weights[static_cast<std::size_t>(k)] = static_cast<float>(raw[static_cast<std::size_t>(k)] * num_classes / sum);
  }
  return out;
}

/// Mean over pixels of -w[t] * log softmax(logits)[t]. Targets are row-major
/// per-pixel labels of length n*h*w.
inline Tensor weighted_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                                     const ClassWeights& w) {
  if (logits.rank() != 4) throw std::invalid_argument("weighted_cross_entropy: logits must be [n,c,h,w]");
  const int n = logits.shape()[0], c = logits.shape()[1];
  const int h = logits.shape()[2], wd = logits.shape()[3];
  if (w.num_classes() != c) {
    throw std::invalid_argument("weighted_cross_entropy: " + std::to_string(w.num_classes()) +
                                " class weights for " + std::to_string(c) + " channels");
  }
  const std::int64_t pixels = static_cast<std::int64_t>(n) * h * wd;
  if (static_cast<std::int64_t>(targets.size()) != pixels) {
    throw std::invalid_argument("weighted_cross_entropy: expected " + std::to_string(pixels) +
                                " target labels, got " + std::to_string(targets.size()));
  }

  // constant selector: w[t] at the target channel, 0 elsewhere
  std::vector<float> sel(static_cast<std::size_t>(numel(logits.shape())), 0.0f);
  const std::int64_t plane = static_cast<std::int64_t>(h) * wd;
  for (std::int64_t img = 0; img < n; ++img) {
    for (std::int64_t p = 0; p < plane; ++p) {
      const int t = targets[static_cast<std::size_t>(img * plane + p)];
      if (t < 0 || t >= c) {
        throw std::invalid_argument("weighted_cross_entropy: target label " + std::to_string(t) +
                                    " at pixel " + std::to_string(img * plane + p) + " outside [0," +
                                    std::to_string(c) + ")");
      }
      sel[static_cast<std::size_t>((img * c + t) * plane + p)] = w.weights[static_cast<std::size_t>(t)];
    }
  }

  Tensor shifted = sub(logits, max(logits, {1}, true).detach());
  Tensor logp = sub(shifted, log(sum(exp(shifted), {1}, true)));
  Tensor picked = mul(logp, Tensor::from_data(logits.shape(), std::move(sel)));
  return mul(sum(picked), -1.0f / static_cast<float>(pixels));
}

// ---------------------------------------------------------------------------
// Fuzzy c-means objective
// ---------------------------------------------------------------------------

enum class CentroidGrad { Detached, Flow };
enum class FcmFeature { Rgb, Intensity };

struct FcmConfig {
  int clusters = 3;
  float fuzzifier = 2.0f;  // q
  CentroidGrad centroid_grad = CentroidGrad::Detached;
  FcmFeature feature = FcmFeature::Rgb;
};

enum class FcmReduction { Mean, Sum };

/// sum_j sum_k u_jk^q * ||y_j - v_k||^2 with centroids v_k recomputed in
/// closed form from the current memberships, per image. Mean reduction
/// divides by the pixel count; Sum matches the raw objective. Gradients flow
/// into the memberships; under CentroidGrad::Detached the centroids are
/// treated as constants of the backward pass, under Flow the centroid
/// dependence on the memberships is chained through. Features are always
/// treated as constants.
inline Tensor fcm_loss(const Tensor& memberships, const Tensor& features, const FcmConfig& cfg,
                       FcmReduction reduction = FcmReduction::Mean) {
  if (memberships.rank() != 4 || features.rank() != 4) {
    throw std::invalid_argument("fcm_loss: memberships and features must be [n,*,h,w]");
  }
  if (cfg.fuzzifier < 1.0f) {
    throw std::invalid_argument("fcm_loss: fuzzifier q must be >= 1, got " + std::to_string(cfg.fuzzifier));
  }
  const int n = memberships.shape()[0], k = memberships.shape()[1];
  const int h = memberships.shape()[2], w = memberships.shape()[3];
  const int f = features.shape()[1];
  if (k != cfg.clusters) {
    throw std::invalid_argument("fcm_loss: memberships have " + std::to_string(k) + " channels, config says " +
                                std::to_string(cfg.clusters) + " clusters");
  }
  if (features.shape()[0] != n || features.shape()[2] != h || features.shape()[3] != w) {
    throw std::invalid_argument("fcm_loss: feature shape " + shape_str(features.shape()) +
                                " does not match memberships " + shape_str(memberships.shape()));
  }
  if (features.requires_grad()) {
    throw std::invalid_argument("fcm_loss: features are constants; pass a detached tensor");
  }
  for (float v : features.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("fcm_loss: non-finite feature value");
  }

  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const auto& u = memberships.data();
  const auto& y = features.data();
  const double q = cfg.fuzzifier;

  auto u_at = [&](std::int64_t img, int ki, std::int64_t p) {
    return static_cast<double>(u[static_cast<std::size_t>((img * k + ki) * plane + p)]);
  };
  auto y_at = [&](std::int64_t img, int fi, std::int64_t p) {
    return static_cast<double>(y[static_cast<std::size_t>((img * f + fi) * plane + p)]);
  };

  for (std::int64_t img = 0; img < n; ++img) {
    for (std::int64_t p = 0; p < plane; ++p) {
      double s = 0.0;
      for (int ki = 0; ki < k; ++ki) s += u_at(img, ki, p);
      if (std::fabs(s - 1.0) > 1e-4) {
        throw std::invalid_argument("fcm_loss: memberships at image " + std::to_string(img) + " pixel " +
                                    std::to_string(p) + " sum to " + std::to_string(s) + ", expected 1");
      }
    }
  }

  // centroids and the objective, accumulated in f64
  std::vector<double> cents(static_cast<std::size_t>(n) * k * f, 0.0);
  std::vector<double> mass(static_cast<std::size_t>(n) * k, 0.0);
  double total = 0.0;
  for (std::int64_t img = 0; img < n; ++img) {
    for (int ki = 0; ki < k; ++ki) {
      double s = 0.0;
      std::vector<double> m(static_cast<std::size_t>(f), 0.0);
      for (std::int64_t p = 0; p < plane; ++p) {
        const double uq = std::pow(u_at(img, ki, p), q);
        s += uq;
        for (int fi = 0; fi < f; ++fi) m[static_cast<std::size_t>(fi)] += uq * y_at(img, fi, p);
      }
      mass[static_cast<std::size_t>(img * k + ki)] = s;
      for (int fi = 0; fi < f; ++fi) {
        cents[static_cast<std::size_t>((img * k + ki) * f + fi)] = m[static_cast<std::size_t>(fi)] / s;
      }
    }
    for (std::int64_t p = 0; p < plane; ++p) {
      for (int ki = 0; ki < k; ++ki) {
        const double uq = std::pow(u_at(img, ki, p), q);
        double dist = 0.0;
        for (int fi = 0; fi < f; ++fi) {
          const double diff = y_at(img, fi, p) - cents[static_cast<std::size_t>((img * k + ki) * f + fi)];
          dist += diff * diff;
        }
        total += uq * dist;
      }
    }
  }
  const double norm = reduction == FcmReduction::Mean ? 1.0 / static_cast<double>(n * plane) : 1.0;
  total *= norm;

  auto un = memberships.node();
  auto yn = features.node();
  const auto mode = cfg.centroid_grad;
  auto backward = [un, yn, cents, mass, q, norm, mode, n, k, f, plane](TensorNode& self) {
    if (!un->requires_grad) return;
    un->ensure_grad();
    const double g0 = static_cast<double>(self.grad[0]) * norm;
    auto uv = [&](std::int64_t img, int ki, std::int64_t p) {
      return static_cast<double>(un->data[static_cast<std::size_t>((img * k + ki) * plane + p)]);
    };
    auto yv = [&](std::int64_t img, int fi, std::int64_t p) {
      return static_cast<double>(yn->data[static_cast<std::size_t>((img * f + fi) * plane + p)]);
    };
    std::vector<double> djdv;  // Flow only: dJ/dv per (k,f) of the current image
    for (std::int64_t img = 0; img < n; ++img) {
      if (mode == CentroidGrad::Flow) {
        djdv.assign(static_cast<std::size_t>(k) * f, 0.0);
        for (std::int64_t p = 0; p < plane; ++p) {
          for (int ki = 0; ki < k; ++ki) {
            const double uq = std::pow(uv(img, ki, p), q);
            for (int fi = 0; fi < f; ++fi) {
              const double v = cents[static_cast<std::size_t>((img * k + ki) * f + fi)];
              djdv[static_cast<std::size_t>(ki * f + fi)] += uq * 2.0 * (v - yv(img, fi, p));
            }
          }
        }
      }
      for (std::int64_t p = 0; p < plane; ++p) {
        for (int ki = 0; ki < k; ++ki) {
          const double uval = uv(img, ki, p);
          const double uqm1 = q * std::pow(uval, q - 1.0);
          double dist = 0.0;
          for (int fi = 0; fi < f; ++fi) {
            const double diff = yv(img, fi, p) - cents[static_cast<std::size_t>((img * k + ki) * f + fi)];
            dist += diff * diff;
          }
          double du = uqm1 * dist;
          if (mode == CentroidGrad::Flow) {
            const double s = mass[static_cast<std::size_t>(img * k + ki)];
            double chain = 0.0;
            for (int fi = 0; fi < f; ++fi) {
              const double v = cents[static_cast<std::size_t>((img * k + ki) * f + fi)];
              chain += djdv[static_cast<std::size_t>(ki * f + fi)] * (yv(img, fi, p) - v);
            }
            du += uqm1 / s * chain;
          }
          un->grad[static_cast<std::size_t>((img * k + ki) * plane + p)] += static_cast<float>(g0 * du);
        }
      }
    }
  };
  return detail::make_op_result({}, {static_cast<float>(total)}, {un, yn}, std::move(backward));
}

}  // namespace vseg::loss
