#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "vseg/arch.hpp"

using vseg::Tensor;
namespace arch = vseg::arch;
namespace nn = vseg::nn;

namespace {

Tensor random_input(vseg::Rng& rng, int n, int c, int h, int w) {
  return Tensor::rand_uniform({n, c, h, w}, rng, 0.0f, 1.0f);
}

const arch::SummaryRow& row_named(const std::vector<arch::SummaryRow>& rows, const std::string& name) {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  FAIL("no summary row named " + name);
  throw std::logic_error("unreachable");
}

}  // namespace

TEST_CASE("scratch U-Net output shape mirrors the input") {
  arch::UNetSpec spec;
  spec.in_channels = 3;
  spec.height = spec.width = 64;
  spec.encoder_filters = {8, 16};
  spec.num_classes = 3;
  auto model = arch::build_unet(spec, 1);

  vseg::Rng rng(2);
  auto y = model.forward(random_input(rng, 1, 3, 64, 64));
  CHECK(y.shape() == vseg::Shape{1, 3, 64, 64});

  // fully convolutional: doubling input height doubles output height
  auto y2 = model.forward(random_input(rng, 1, 3, 128, 64));
  CHECK(y2.shape() == vseg::Shape{1, 3, 128, 64});
}

TEST_CASE("paper-scale spec builds and keeps spatial extent") {
  arch::UNetSpec spec;
  spec.in_channels = 3;
  spec.height = 544;
  spec.width = 800;
  spec.encoder_filters = {32, 64, 128, 256, 512};
  spec.num_classes = 3;
  auto model = arch::build_unet(spec, 7);
  const auto rows = arch::summary_rows(model);
  CHECK(rows.front().height == 544);
  CHECK(rows.front().width == 800);
  CHECK(rows.back().height == 544);
  CHECK(rows.back().width == 800);
  CHECK(rows.back().channels == 3);
}

TEST_CASE("forward is finite and backward reaches every parameter") {
  arch::UNetSpec spec;
  spec.height = spec.width = 16;
  spec.encoder_filters = {8, 16};
  for (auto merge : {arch::SkipMerge::Add, arch::SkipMerge::Concat}) {
    spec.skip_merge = merge;
    auto model = arch::build_unet(spec, 3);
    vseg::Rng rng(4);
    auto y = model.forward(random_input(rng, 2, 3, 16, 16));
    for (float v : y.data()) REQUIRE(std::isfinite(v));
    vseg::backward(vseg::sum(y));
    for (auto& [name, p] : model.parameters()) {
      INFO(name);
      REQUIRE(p.has_grad());
      for (float g : p.grad()) REQUIRE(std::isfinite(g));
    }
  }
}

TEST_CASE("add vs concat: same output shape, different parameter count") {
  arch::UNetSpec spec;
  spec.height = spec.width = 16;
  spec.encoder_filters = {8, 16};
  spec.skip_merge = arch::SkipMerge::Add;
  auto m_add = arch::build_unet(spec, 5);
  spec.skip_merge = arch::SkipMerge::Concat;
  auto m_cat = arch::build_unet(spec, 5);
  CHECK(m_add.param_count() != m_cat.param_count());

  vseg::Rng rng(6);
  auto x = random_input(rng, 1, 3, 16, 16);
  CHECK(m_add.forward(x).shape() == m_cat.forward(x).shape());
}

TEST_CASE("spec validation") {
  arch::UNetSpec spec;
  spec.height = 63;
  spec.width = 64;
  spec.encoder_filters = {8, 16};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.height = 64;
  spec.encoder_filters = {16, 16};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.encoder_filters = {8, 16};
  spec.num_classes = 1;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("xception variant: fewer parameters than the dense scratch net") {
  arch::UNetSpec spec;
  spec.height = 64;
  spec.width = 64;
  spec.encoder_filters = {32, 64, 128};
  spec.block = arch::BlockKind::SeparableDouble;
  auto xcep = arch::build_xception_unet(spec, 11);

  arch::UNetSpec dense_spec = spec;
  dense_spec.block = arch::BlockKind::DenseDouble;
  auto dense = arch::build_unet(dense_spec, 11);

  CHECK(xcep.param_count() < dense.param_count());
}

TEST_CASE("xception variant: zeroed residual projections reduce to the plain stack") {
  arch::UNetSpec spec;
  spec.height = spec.width = 16;
  spec.encoder_filters = {8, 16};
  spec.block = arch::BlockKind::SeparableDouble;
  auto model = arch::build_xception_unet(spec, 13);
  for (auto& [name, p] : model.parameters()) {
    if (name.find(".res.") != std::string::npos) std::fill(p.data().begin(), p.data().end(), 0.0f);
  }

  vseg::Rng rng(14);
  auto x = random_input(rng, 1, 3, 16, 16);
  auto y = model.forward(x);

  // the same layers run without the residual adds
  auto t = vseg::relu(nn::separable_conv2d_forward(x, model.seps[0]));
  t = vseg::relu(nn::separable_conv2d_forward(t, model.seps[1]));
  t = nn::maxpool2x2(t);
  t = vseg::relu(nn::separable_conv2d_forward(t, model.seps[2]));
  t = vseg::relu(nn::separable_conv2d_forward(t, model.seps[3]));
  t = nn::upsample_nearest2x(t);
  t = vseg::relu(nn::separable_conv2d_forward(t, model.seps[4]));
  t = vseg::relu(nn::separable_conv2d_forward(t, model.seps[5]));
  REQUIRE(model.convs.size() == 4);  // three projections + head
  t = nn::conv2d_forward(t, model.convs.back());

  REQUIRE(y.shape() == t.shape());
  for (std::size_t i = 0; i < y.data().size(); ++i) REQUIRE(y.data()[i] == t.data()[i]);
}

TEST_CASE("xception variant: gradient reaches the first layer") {
  arch::UNetSpec spec;
  spec.height = spec.width = 16;
  spec.encoder_filters = {8, 16};
  spec.block = arch::BlockKind::SeparableDouble;
  auto model = arch::build_xception_unet(spec, 17);
  vseg::Rng rng(18);
  vseg::backward(vseg::sum(model.forward(random_input(rng, 1, 3, 16, 16))));
  double norm = 0.0;
  for (float g : model.seps[0].depthwise.grad()) norm += static_cast<double>(g) * g;
  CHECK(norm > 0.0);
}

TEST_CASE("summarize: single 1x1 conv model") {
  vseg::Rng rng(19);
  arch::Model m;
  m.spec.in_channels = 4;
  m.spec.height = m.spec.width = 8;
  m.spec.encoder_filters = {4};  // one level; no pooling
  m.spec.num_classes = 5;
  m.nodes.push_back({arch::Model::Op::Input, -1, -1, -1, false, "input"});
  m.convs.push_back(nn::Conv2d::create(4, 5, 1, 1, rng));
  m.nodes.push_back({arch::Model::Op::Conv, 0, -1, 0, false, "head"});

  const auto rows = arch::summary_rows(m);
  int layer_rows = 0;
  std::int64_t total = 0;
  for (const auto& r : rows) {
    if (r.params > 0) ++layer_rows;
    total += r.params;
  }
  CHECK(layer_rows == 1);
  CHECK(total == 4 * 5 + 5);
  CHECK(total == m.param_count());
}

TEST_CASE("summarize: [8,16] schedule matches hand-derived shapes") {
  arch::UNetSpec spec;
  spec.height = spec.width = 64;
  spec.encoder_filters = {8, 16};
  auto model = arch::build_unet(spec, 23);
  const auto rows = arch::summary_rows(model);

  auto expect = [&](const std::string& name, int c, int h, int w) {
    const auto& r = row_named(rows, name);
    INFO(name);
    CHECK(r.channels == c);
    CHECK(r.height == h);
    CHECK(r.width == w);
  };
  expect("enc1.conv1", 8, 64, 64);
  expect("enc1.conv2", 8, 64, 64);
  expect("enc1.pool", 8, 32, 32);
  expect("enc2.conv1", 16, 32, 32);
  expect("enc2.conv2", 16, 32, 32);
  expect("dec1.up", 16, 64, 64);
  expect("dec1.proj", 8, 64, 64);
  expect("dec1.merge", 8, 64, 64);
  expect("dec1.conv1", 8, 64, 64);
  expect("dec1.conv2", 8, 64, 64);
  expect("head", 3, 64, 64);

  // totals line equals the sum of rows
  std::int64_t total = 0;
  for (const auto& r : rows) total += r.params;
  CHECK(total == model.param_count());
  const std::string text = arch::summarize(model);
  CHECK(text.find("total params: " + std::to_string(total)) != std::string::npos);
}
