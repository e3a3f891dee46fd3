#pragma once

#include <algorithm>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "vseg/image.hpp"
#include "vseg/rng.hpp"

namespace vseg::data {

/// One image/trimap pair on disk. trimap_path is empty when absent.
struct DatasetItem {
  std::string name;  // file stem, e.g. "leaf_003" or "leaf_003_aug1"
  std::string image_path;
  std::string trimap_path;
};

struct Dataset {
  std::string root;
  std::vector<DatasetItem> items;  // sorted by name
};

/// Source stem of a possibly augmented item: "x_aug<k>" maps back to "x".
inline std::string source_stem(const std::string& name) {
  const auto pos = name.rfind("_aug");
  if (pos == std::string::npos) return name;
  if (pos + 4 >= name.size()) return name;
  for (std::size_t i = pos + 4; i < name.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return name;
  }
  return name.substr(0, pos);
}

/// Loads the `images/<name>.png` + `trimaps/<name>.png` directory layout.
/// Names are matched exactly; ordering is by name for determinism.
inline Dataset load_dataset_dir(const std::string& root, bool require_trimaps) {
  namespace fs = std::filesystem;
  const fs::path images = fs::path(root) / "images";
  const fs::path trimaps = fs::path(root) / "trimaps";
  if (!fs::is_directory(images)) {
    throw std::runtime_error("dataset " + root + ": missing images/ directory");
  }
  if (require_trimaps && !fs::is_directory(trimaps)) {
    throw std::runtime_error("dataset " + root + ": missing trimaps/ directory");
  }
  Dataset ds;
  ds.root = root;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    DatasetItem item;
    item.name = entry.path().stem().string();
    item.image_path = entry.path().string();
    const fs::path tm = trimaps / (item.name + ".png");
    if (fs::exists(tm)) {
      item.trimap_path = tm.string();
    } else if (require_trimaps) {
      throw std::runtime_error("dataset " + root + ": no trimap for " + item.name);
    }
    ds.items.push_back(std::move(item));
  }
  std::sort(ds.items.begin(), ds.items.end(),
            [](const DatasetItem& a, const DatasetItem& b) { return a.name < b.name; });
  if (ds.items.empty()) throw std::runtime_error("dataset " + root + ": no images found");
  return ds;
}

struct SplitSpec {
  int train = 0;
  int valid = 0;
  int test = 0;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<DatasetItem> train, valid, test;
};

/// Seed-deterministic split by *source image*: all augmented derivatives of a
/// source land in the same part, so counts refer to sources.
inline Split split_dataset(const Dataset& ds, const SplitSpec& spec) {
  if (spec.train < 0 || spec.valid < 0 || spec.test < 0) {
    throw std::invalid_argument("split: negative count");
  }
  std::vector<std::string> sources;
  for (const auto& item : ds.items) {
    const std::string src = source_stem(item.name);
    if (std::find(sources.begin(), sources.end(), src) == sources.end()) sources.push_back(src);
  }
  std::sort(sources.begin(), sources.end());
  const int total = spec.train + spec.valid + spec.test;
  if (total > static_cast<int>(sources.size())) {
    throw std::invalid_argument("split: requested " + std::to_string(total) + " sources, dataset has " +
                                std::to_string(sources.size()));
  }
  Rng rng(spec.seed);
  rng.shuffle(sources);

  auto part_of = [&](const std::string& src) -> int {
    const auto it = std::find(sources.begin(), sources.end(), src);
    const int pos = static_cast<int>(it - sources.begin());
    if (pos < spec.train) return 0;
    if (pos < spec.train + spec.valid) return 1;
    if (pos < total) return 2;
    return 3;  // unused remainder
  };
  Split out;
  for (const auto& item : ds.items) {
    switch (part_of(source_stem(item.name))) {
      case 0: out.train.push_back(item); break;
      case 1: out.valid.push_back(item); break;
      case 2: out.test.push_back(item); break;
      default: break;
    }
  }
  return out;
}

}  // namespace vseg::data
