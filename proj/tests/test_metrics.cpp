#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <vector>

#include "vseg/kv.hpp"
#include "vseg/metrics.hpp"
#include "vseg/rng.hpp"

namespace metrics = vseg::metrics;
namespace data = vseg::data;

namespace {

data::LabelMask random_mask(vseg::Rng& rng, int h, int w, int num_classes) {
  auto m = data::LabelMask::create(h, w);
  for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng.uniform_int(0, num_classes - 1));
  return m;
}

data::LabelMask mask_of(int h, int w, const std::vector<std::uint8_t>& labels) {
  auto m = data::LabelMask::create(h, w);
  m.labels = labels;
  return m;
}

}  // namespace

TEST_CASE("accumulate fills the matrix") {
  vseg::Rng rng(2);
  auto gt = random_mask(rng, 4, 4, 3);
  metrics::ConfusionMatrix cm(3);
  cm.accumulate(gt, gt);
  CHECK(cm.total() == 16);
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p)
      if (g != p) CHECK(cm.at(g, p) == 0);

  metrics::ConfusionMatrix single(3);
  single.accumulate(mask_of(1, 1, {2}), mask_of(1, 1, {1}));
  CHECK(single.at(1, 2) == 1);
  CHECK(single.total() == 1);
}

TEST_CASE("accumulate matches double-loop counting on random pairs") {
  vseg::Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    auto gt = random_mask(rng, 8, 8, 3);
    auto pred = random_mask(rng, 8, 8, 3);
    metrics::ConfusionMatrix cm(3);
    cm.accumulate(pred, gt);
    std::int64_t brute[3][3] = {};
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) ++brute[gt.at(y, x)][pred.at(y, x)];
    for (int g = 0; g < 3; ++g)
      for (int p = 0; p < 3; ++p) CHECK(cm.at(g, p) == brute[g][p]);
  }
}

TEST_CASE("accumulate validation") {
  metrics::ConfusionMatrix cm(3);
  CHECK_THROWS_AS(cm.accumulate(mask_of(1, 2, {0, 1}), mask_of(2, 1, {0, 1})), std::invalid_argument);
  CHECK_THROWS_AS(cm.accumulate(mask_of(1, 1, {5}), mask_of(1, 1, {0})), std::invalid_argument);
}

TEST_CASE("pixel accuracy") {
  vseg::Rng rng(5);
  auto gt = random_mask(rng, 4, 4, 3);
  metrics::ConfusionMatrix cm(3);
  cm.accumulate(gt, gt);
  CHECK(cm.pixel_accuracy() == 1.0);

  // 12 of 16 correct
  auto pred = gt;
  for (int i = 0; i < 4; ++i) pred.labels[static_cast<std::size_t>(i)] = (gt.labels[static_cast<std::size_t>(i)] + 1) % 3;
  metrics::ConfusionMatrix cm2(3);
  cm2.accumulate(pred, gt);
  CHECK(cm2.pixel_accuracy() == 0.75);

  metrics::ConfusionMatrix empty(3);
  CHECK_THROWS_AS(empty.pixel_accuracy(), std::runtime_error);
}

TEST_CASE("per-class IoU") {
  vseg::Rng rng(7);
  auto gt = random_mask(rng, 4, 4, 3);
  metrics::ConfusionMatrix perfect(3);
  perfect.accumulate(gt, gt);
  for (const auto& iou : perfect.iou_per_class()) {
    if (iou.defined) CHECK(iou.value == 1.0);
  }

  // gt blade = 4 px; prediction covers 2 of them plus 2 others -> 2/6
  std::vector<std::uint8_t> g(16, 0), p(16, 0);
  g[0] = g[1] = g[2] = g[3] = 1;
  p[0] = p[1] = 1;
  p[8] = p[9] = 1;
  metrics::ConfusionMatrix cm(3);
  cm.accumulate(mask_of(4, 4, p), mask_of(4, 4, g));
  const auto ious = cm.iou_per_class();
  REQUIRE(ious[1].defined);
  CHECK(ious[1].value == Catch::Approx(2.0 / 6.0));

  // class 2 absent from both: undefined and excluded from the mean
  CHECK_FALSE(ious[2].defined);
  CHECK(cm.mean_iou() == Catch::Approx((ious[0].value + ious[1].value) / 2.0));

  // class present in gt but never predicted: defined 0.0
  std::vector<std::uint8_t> g2(16, 0);
  g2[5] = 2;
  metrics::ConfusionMatrix cm2(3);
  cm2.accumulate(mask_of(4, 4, std::vector<std::uint8_t>(16, 0)), mask_of(4, 4, g2));
  const auto ious2 = cm2.iou_per_class();
  REQUIRE(ious2[2].defined);
  CHECK(ious2[2].value == 0.0);
}

TEST_CASE("IoU is bounded by precision and recall") {
  vseg::Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    auto gt = random_mask(rng, 8, 8, 3);
    auto pred = random_mask(rng, 8, 8, 3);
    metrics::ConfusionMatrix cm(3);
    cm.accumulate(pred, gt);
    const auto ious = cm.iou_per_class();
    for (int k = 0; k < 3; ++k) {
      std::int64_t row = 0, col = 0;
      for (int j = 0; j < 3; ++j) {
        row += cm.at(k, j);
        col += cm.at(j, k);
      }
      if (!ious[static_cast<std::size_t>(k)].defined) continue;
      if (row > 0) CHECK(ious[static_cast<std::size_t>(k)].value <= static_cast<double>(cm.at(k, k)) / row + 1e-12);
      if (col > 0) CHECK(ious[static_cast<std::size_t>(k)].value <= static_cast<double>(cm.at(k, k)) / col + 1e-12);
    }
  }
}

TEST_CASE("PA and MeanIoU invariant under consistent relabeling") {
  vseg::Rng rng(13);
  const std::vector<int> perm = {2, 0, 1};
  for (int rep = 0; rep < 10; ++rep) {
    auto gt = random_mask(rng, 8, 8, 3);
    auto pred = random_mask(rng, 8, 8, 3);
    metrics::ConfusionMatrix cm(3);
    cm.accumulate(pred, gt);

    auto relabel = [&](const data::LabelMask& m) {
      auto out = m;
      for (auto& v : out.labels) v = static_cast<std::uint8_t>(perm[v]);
      return out;
    };
    metrics::ConfusionMatrix cm2(3);
    cm2.accumulate(relabel(pred), relabel(gt));
    CHECK(cm.pixel_accuracy() == Catch::Approx(cm2.pixel_accuracy()));
    CHECK(cm.mean_iou() == Catch::Approx(cm2.mean_iou()));
  }
}

TEST_CASE("parallel shard merge equals sequential accumulation") {
  vseg::Rng rng(17);
  std::vector<std::pair<data::LabelMask, data::LabelMask>> pairs;
  for (int i = 0; i < 6; ++i) pairs.emplace_back(random_mask(rng, 8, 8, 3), random_mask(rng, 8, 8, 3));

  metrics::ConfusionMatrix seq(3);
  for (const auto& [pred, gt] : pairs) seq.accumulate(pred, gt);

  metrics::ConfusionMatrix a(3), b(3);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    (i % 2 ? a : b).accumulate(pairs[i].first, pairs[i].second);
  }
  a.merge(b);
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p) CHECK(a.at(g, p) == seq.at(g, p));
}

TEST_CASE("cluster matching: aligned and swapped cases") {
  vseg::Rng rng(19);
  auto gt = random_mask(rng, 8, 8, 3);
  auto aligned = metrics::match_clusters_to_classes(gt, gt, 3, 3);
  CHECK(aligned == std::vector<int>{0, 1, 2});

  auto swapped = gt;
  for (auto& v : swapped.labels) v = v == 0 ? 1 : v == 1 ? 0 : 2;
  auto mapping = metrics::match_clusters_to_classes(swapped, gt, 3, 3);
  CHECK(mapping == std::vector<int>{1, 0, 2});
  auto mapped = metrics::apply_cluster_mapping(swapped, mapping);
  metrics::ConfusionMatrix cm(3);
  cm.accumulate(mapped, gt);
  CHECK(cm.pixel_accuracy() == 1.0);
}

TEST_CASE("cluster matching matches an independent exhaustive search") {
  vseg::Rng rng(23);
  const int clusters = 5, num_classes = 3;
  for (int rep = 0; rep < 10; ++rep) {
    auto gt = random_mask(rng, 8, 8, num_classes);
    auto pred = random_mask(rng, 8, 8, clusters);
    const auto counts = metrics::cluster_class_counts(pred, gt, clusters, num_classes);
    const auto mapping = metrics::match_clusters_from_counts(counts, clusters, num_classes);

    // independent search: three nested loops over distinct representatives
    std::int64_t best = -1;
    for (int c0 = 0; c0 < clusters; ++c0)
      for (int c1 = 0; c1 < clusters; ++c1)
        for (int c2 = 0; c2 < clusters; ++c2) {
          if (c0 == c1 || c0 == c2 || c1 == c2) continue;
          std::int64_t score = 0;
          for (int c = 0; c < clusters; ++c) {
            int cls;
            if (c == c0) cls = 0;
            else if (c == c1) cls = 1;
            else if (c == c2) cls = 2;
            else {
              cls = 0;
              for (int g = 1; g < num_classes; ++g)
                if (counts[static_cast<std::size_t>(c) * num_classes + g] >
                    counts[static_cast<std::size_t>(c) * num_classes + cls])
                  cls = g;
            }
            score += counts[static_cast<std::size_t>(c) * num_classes + cls];
          }
          best = std::max(best, score);
        }

    std::int64_t got = 0;
    for (int c = 0; c < clusters; ++c) got += counts[static_cast<std::size_t>(c) * num_classes + mapping[static_cast<std::size_t>(c)]];
    CHECK(got == best);
  }
}

TEST_CASE("cluster matching never loses to the truncated identity mapping") {
  vseg::Rng rng(29);
  for (int rep = 0; rep < 10; ++rep) {
    const int clusters = 4, num_classes = 3;
    auto gt = random_mask(rng, 8, 8, num_classes);
    auto pred = random_mask(rng, 8, 8, clusters);
    auto mapping = metrics::match_clusters_to_classes(pred, gt, clusters, num_classes);

    auto pa_of = [&](const std::vector<int>& map) {
      metrics::ConfusionMatrix cm(num_classes);
      cm.accumulate(metrics::apply_cluster_mapping(pred, map), gt);
      return cm.pixel_accuracy();
    };
    std::vector<int> identity = {0, 1, 2, 2};  // truncated to valid classes
    CHECK(pa_of(mapping) >= pa_of(identity));
  }
}

TEST_CASE("cluster matching requires enough clusters") {
  auto m = mask_of(1, 2, {0, 1});
  CHECK_THROWS_AS(metrics::match_clusters_to_classes(m, m, 2, 3), std::invalid_argument);
}

TEST_CASE("reports are parseable key=value text") {
  vseg::Rng rng(31);
  auto gt = random_mask(rng, 8, 8, 3);
  auto pred = random_mask(rng, 8, 8, 3);
  metrics::ConfusionMatrix cm(3);
  cm.accumulate(pred, gt);

  const auto text = metrics::report_kv(cm, metrics::trimap_class_names());
  const auto entries = vseg::kv::parse(text);
  std::map<std::string, std::string> kv;
  for (const auto& e : entries) kv[e.key] = e.value;
  REQUIRE(kv.count("pa") == 1);
  REQUIRE(kv.count("iou.background") == 1);
  REQUIRE(kv.count("iou.blade") == 1);
  REQUIRE(kv.count("iou.veins") == 1);
  REQUIRE(kv.count("mean_iou") == 1);
  CHECK(std::stod(kv["pa"]) == Catch::Approx(cm.pixel_accuracy()).margin(1e-6));
  CHECK(std::stod(kv["mean_iou"]) == Catch::Approx(cm.mean_iou()).margin(1e-6));

  const auto table = metrics::format_report(cm, metrics::trimap_class_names());
  CHECK(table.find("pixel accuracy") != std::string::npos);
}
