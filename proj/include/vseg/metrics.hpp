#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vseg/image.hpp"

namespace vseg::metrics {

struct IouValue {
  double value = 0.0;
  bool defined = false;  // false when the union is empty
};

/// Rows are ground truth, columns are prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes)
      : k_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
    if (num_classes < 1) throw std::invalid_argument("ConfusionMatrix: num_classes must be >= 1");
  }

  int num_classes() const { return k_; }
  std::int64_t at(int gt, int pred) const {
    return counts_[static_cast<std::size_t>(gt) * k_ + pred];
  }

  void accumulate(const data::LabelMask& pred, const data::LabelMask& gt) {
    if (pred.height != gt.height || pred.width != gt.width) {
      throw std::invalid_argument("ConfusionMatrix::accumulate: mask extents differ");
    }
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
      const int g = gt.labels[i], p = pred.labels[i];
      if (g >= k_ || p >= k_) {
        throw std::invalid_argument("ConfusionMatrix::accumulate: label " + std::to_string(std::max(g, p)) +
                                    " outside [0," + std::to_string(k_) + ")");
      }
      ++counts_[static_cast<std::size_t>(g) * k_ + p];
    }
  }

  /// Elementwise sum; shards merged this way equal sequential accumulation.
  ConfusionMatrix& merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw std::invalid_argument("ConfusionMatrix::merge: class count differs");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
  }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  double pixel_accuracy() const {
    const std::int64_t t = total();
    if (t == 0) throw std::runtime_error("pixel_accuracy: empty confusion matrix");
    std::int64_t diag = 0;
    for (int k = 0; k < k_; ++k) diag += at(k, k);
    return static_cast<double>(diag) / static_cast<double>(t);
  }

  /// IoU_k = tp / (gt_k + pred_k - tp); classes with an empty union are
  /// reported undefined and excluded from mean_iou.
  std::vector<IouValue> iou_per_class() const {
    std::vector<IouValue> out(static_cast<std::size_t>(k_));
    for (int k = 0; k < k_; ++k) {
      std::int64_t row = 0, col = 0;
      for (int j = 0; j < k_; ++j) {
        row += at(k, j);
        col += at(j, k);
      }
      const std::int64_t tp = at(k, k);
      const std::int64_t uni = row + col - tp;
      if (uni > 0) out[static_cast<std::size_t>(k)] = {static_cast<double>(tp) / static_cast<double>(uni), true};
    }
    return out;
  }

  double mean_iou() const {
    const auto ious = iou_per_class();
    double sum = 0.0;
    int defined = 0;
    for (const auto& i : ious) {
      if (i.defined) {
        sum += i.value;
        ++defined;
      }
    }
    if (defined == 0) throw std::runtime_error("mean_iou: no class has a non-empty union");
    return sum / defined;
  }

 private:
  int k_;
  std::vector<std::int64_t> counts_;
};

// ---------------------------------------------------------------------------
// Cluster-to-class matching for unsupervised outputs
// ---------------------------------------------------------------------------

/// counts[cluster * num_classes + gt_class] pixel histogram.
inline std::vector<std::int64_t> cluster_class_counts(const data::LabelMask& pred_clusters,
                                                      const data::LabelMask& gt, int clusters,
                                                      int num_classes) {
  if (pred_clusters.height != gt.height || pred_clusters.width != gt.width) {
    throw std::invalid_argument("cluster_class_counts: mask extents differ");
  }
  std::vector<std::int64_t> counts(static_cast<std::size_t>(clusters) * num_classes, 0);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int c = pred_clusters.labels[i], g = gt.labels[i];
    if (c >= clusters) {
      throw std::invalid_argument("cluster_class_counts: cluster id " + std::to_string(c) + " outside [0," +
                                  std::to_string(clusters) + ")");
    }
    if (g >= num_classes) {
      throw std::invalid_argument("cluster_class_counts: gt label " + std::to_string(g) + " outside [0," +
                                  std::to_string(num_classes) + ")");
    }
    ++counts[static_cast<std::size_t>(c) * num_classes + g];
  }
  return counts;
}

/// Exhaustive search over injective class->cluster assignments (each class
/// claims a distinct representative cluster, surplus clusters map to their
/// plurality class), maximizing total matched pixels. Candidates are visited
/// in ascending cluster-id order and only strict improvements are kept, so
/// ties resolve to the lowest cluster ids. Returns the cluster->class map.
inline std::vector<int> match_clusters_from_counts(const std::vector<std::int64_t>& counts, int clusters,
                                                   int num_classes) {
  if (clusters < num_classes) {
    throw std::invalid_argument("match_clusters: need at least " + std::to_string(num_classes) +
                                " clusters, got " + std::to_string(clusters));
  }
  auto plurality = [&](int cluster) {
    int best_class = 0;
    std::int64_t best = -1;
    for (int g = 0; g < num_classes; ++g) {
      const std::int64_t c = counts[static_cast<std::size_t>(cluster) * num_classes + g];
      if (c > best) {
        best = c;
        best_class = g;
      }
    }
    return best_class;
  };

  std::vector<int> chosen(static_cast<std::size_t>(num_classes), -1);  // class -> cluster
  std::vector<bool> used(static_cast<std::size_t>(clusters), false);
  std::vector<int> best_map;
  std::int64_t best_score = -1;

  auto score_and_map = [&]() {
    std::vector<int> map(static_cast<std::size_t>(clusters));
    std::vector<bool> claimed(static_cast<std::size_t>(clusters), false);
    for (int g = 0; g < num_classes; ++g) {
      map[static_cast<std::size_t>(chosen[static_cast<std::size_t>(g)])] = g;
      claimed[static_cast<std::size_t>(chosen[static_cast<std::size_t>(g)])] = true;
    }
    for (int c = 0; c < clusters; ++c) {
      if (!claimed[static_cast<std::size_t>(c)]) map[static_cast<std::size_t>(c)] = plurality(c);
    }
    std::int64_t score = 0;
    for (int c = 0; c < clusters; ++c) {
      score += counts[static_cast<std::size_t>(c) * num_classes + map[static_cast<std::size_t>(c)]];
    }
    if (score > best_score) {
      best_score = score;
      best_map = std::move(map);
    }
  };

  std::function<void(int)> search = [&](int g) {
    if (g == num_classes) {
      score_and_map();
      return;
    }
    for (int c = 0; c < clusters; ++c) {
      if (used[static_cast<std::size_t>(c)]) continue;
      used[static_cast<std::size_t>(c)] = true;
      chosen[static_cast<std::size_t>(g)] = c;
      search(g + 1);
      used[static_cast<std::size_t>(c)] = false;
    }
  };
  search(0);
  return best_map;
}

inline std::vector<int> match_clusters_to_classes(const data::LabelMask& pred_clusters,
                                                  const data::LabelMask& gt, int clusters,
                                                  int num_classes) {
  return match_clusters_from_counts(cluster_class_counts(pred_clusters, gt, clusters, num_classes),
                                    clusters, num_classes);
}

inline data::LabelMask apply_cluster_mapping(const data::LabelMask& pred, const std::vector<int>& mapping) {
  data::LabelMask out = pred;
  for (auto& v : out.labels) {
    if (v >= mapping.size()) {
      throw std::invalid_argument("apply_cluster_mapping: cluster id " + std::to_string(v) + " unmapped");
    }
    v = static_cast<std::uint8_t>(mapping[v]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline std::vector<std::string> trimap_class_names() { return {"background", "blade", "veins"}; }

inline std::vector<std::string> class_names_for(int num_classes) {
  if (num_classes == 3) return trimap_class_names();
  std::vector<std::string> names;
  for (int k = 0; k < num_classes; ++k) names.push_back("class" + std::to_string(k));
  return names;
}

inline std::string format_float(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

/// Machine-readable key=value report: pa, iou.<class>, mean_iou.
inline std::string report_kv(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
  const auto ious = cm.iou_per_class();
  std::ostringstream os;
  os << "pa = " << format_float(cm.pixel_accuracy()) << '\n';
  for (int k = 0; k < cm.num_classes(); ++k) {
    os << "iou." << names[static_cast<std::size_t>(k)] << " = ";
    if (ious[static_cast<std::size_t>(k)].defined) {
      os << format_float(ious[static_cast<std::size_t>(k)].value);
    } else {
      os << "undefined";
    }
    os << '\n';
  }
  os << "mean_iou = " << format_float(cm.mean_iou()) << '\n';
  return os.str();
}

/// Human-readable table.
inline std::string format_report(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
  const auto ious = cm.iou_per_class();
  std::ostringstream os;
  os << "class           iou\n";
  for (int k = 0; k < cm.num_classes(); ++k) {
    std::string val = ious[static_cast<std::size_t>(k)].defined
                          ? format_float(ious[static_cast<std::size_t>(k)].value)
                          : std::string("n/a");
    os << names[static_cast<std::size_t>(k)];
    for (std::size_t pad = names[static_cast<std::size_t>(k)].size(); pad < 16; ++pad) os << ' ';
    os << val << '\n';
  }
  os << "pixel accuracy  " << format_float(cm.pixel_accuracy()) << '\n';
  os << "mean iou        " << format_float(cm.mean_iou()) << '\n';
  return os.str();
}

}  // namespace vseg::metrics
