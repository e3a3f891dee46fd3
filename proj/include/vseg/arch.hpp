#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vseg/nn.hpp"

namespace vseg::arch {

enum class BlockKind { DenseDouble, SeparableDouble };
enum class SkipMerge { Add, Concat };

/// Declarative description of an encoder-decoder network.
struct UNetSpec {
  int in_channels = 3;
  int height = 64;
  int width = 64;
  std::vector<int> encoder_filters{16, 32, 64};
  BlockKind block = BlockKind::DenseDouble;
  SkipMerge skip_merge = SkipMerge::Add;
  int num_classes = 3;

  int levels() const { return static_cast<int>(encoder_filters.size()); }

  void validate() const {
    if (num_classes < 2) throw std::invalid_argument("UNetSpec: num_classes must be >= 2");
    if (in_channels < 1) throw std::invalid_argument("UNetSpec: in_channels must be >= 1");
    if (encoder_filters.empty()) throw std::invalid_argument("UNetSpec: encoder_filters is empty");
    for (std::size_t i = 1; i < encoder_filters.size(); ++i) {
      if (encoder_filters[i] <= encoder_filters[i - 1]) {
        throw std::invalid_argument("UNetSpec: encoder_filters must be strictly increasing");
      }
    }
    const int div = 1 << (levels() - 1);
    if (height <= 0 || width <= 0 || height % div != 0 || width % div != 0) {
      throw std::invalid_argument("UNetSpec: spatial extent " + std::to_string(height) + "x" +
                                  std::to_string(width) + " must be divisible by " + std::to_string(div));
    }
  }
};

/// A built network: an ordered op list whose in0/in1 indices form the wiring
/// table (skips included), plus the owned layers.
struct Model {
  enum class Op { Input, Conv, SepConv, MaxPool, Upsample, Add, Concat };
  struct Node {
    Op op;
    int in0 = -1, in1 = -1;  // indices of producer nodes
    int layer = -1;          // index into convs or seps
    bool relu = false;
    std::string name;
  };

  UNetSpec spec;
  std::vector<Node> nodes;
  std::vector<nn::Conv2d> convs;
  std::vector<nn::SeparableConv2d> seps;

  Tensor forward(const Tensor& x) const {
    if (x.rank() != 4 || x.shape()[1] != spec.in_channels) {
      throw std::invalid_argument("Model::forward: expected [n," + std::to_string(spec.in_channels) +
                                  ",h,w], got " + shape_str(x.shape()));
    }
    const int div = 1 << (spec.levels() - 1);
    if (x.shape()[2] % div != 0 || x.shape()[3] % div != 0) {
      throw std::invalid_argument("Model::forward: spatial extent must be divisible by " + std::to_string(div));
    }
    std::vector<Tensor> vals(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const Node& nd = nodes[i];
      Tensor out;
      switch (nd.op) {
        case Op::Input: out = x; break;
        case Op::Conv: out = nn::conv2d_forward(vals[static_cast<std::size_t>(nd.in0)], convs[static_cast<std::size_t>(nd.layer)]); break;
        case Op::SepConv: out = nn::separable_conv2d_forward(vals[static_cast<std::size_t>(nd.in0)], seps[static_cast<std::size_t>(nd.layer)]); break;
        case Op::MaxPool: out = nn::maxpool2x2(vals[static_cast<std::size_t>(nd.in0)]); break;
        case Op::Upsample: out = nn::upsample_nearest2x(vals[static_cast<std::size_t>(nd.in0)]); break;
        case Op::Add: out = add(vals[static_cast<std::size_t>(nd.in0)], vals[static_cast<std::size_t>(nd.in1)]); break;
        case Op::Concat: out = concat({vals[static_cast<std::size_t>(nd.in0)], vals[static_cast<std::size_t>(nd.in1)]}, 1); break;
      }
      if (nd.relu) out = relu(out);
      vals[i] = std::move(out);
    }
    return vals.back();
  }

  std::vector<std::pair<std::string, Tensor>> parameters() const {
    std::vector<std::pair<std::string, Tensor>> params;
    for (const Node& nd : nodes) {
      if (nd.op == Op::Conv) {
        const auto& l = convs[static_cast<std::size_t>(nd.layer)];
        params.emplace_back(nd.name + ".weight", l.weight);
        params.emplace_back(nd.name + ".bias", l.bias);
      } else if (nd.op == Op::SepConv) {
        const auto& l = seps[static_cast<std::size_t>(nd.layer)];
        params.emplace_back(nd.name + ".depthwise", l.depthwise);
        params.emplace_back(nd.name + ".pointwise", l.pointwise);
        params.emplace_back(nd.name + ".bias", l.bias);
      }
    }
    return params;
  }

  std::int64_t param_count() const {
    std::int64_t total = 0;
    for (const auto& [name, t] : parameters()) total += t.size();
    return total;
  }
};

struct SummaryRow {
  std::string name;
  std::string op;
  int channels = 0, height = 0, width = 0;
  std::int64_t params = 0;
};

inline std::vector<SummaryRow> summary_rows(const Model& model) {
  struct Dims { int c, h, w; };
  std::vector<Dims> dims(model.nodes.size());
  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < model.nodes.size(); ++i) {
    const auto& nd = model.nodes[i];
    Dims d{};
    SummaryRow row;
    switch (nd.op) {
      case Model::Op::Input:
        d = {model.spec.in_channels, model.spec.height, model.spec.width};
        row.op = "input";
        break;
      case Model::Op::Conv: {
        const auto& in = dims[static_cast<std::size_t>(nd.in0)];
        const auto& l = model.convs[static_cast<std::size_t>(nd.layer)];
        d = {l.out_channels(), in.h, in.w};
        row.op = nd.relu ? "conv+relu" : "conv";
        row.params = l.param_count();
        break;
      }
      case Model::Op::SepConv: {
        const auto& in = dims[static_cast<std::size_t>(nd.in0)];
        const auto& l = model.seps[static_cast<std::size_t>(nd.layer)];
        d = {l.out_channels(), in.h, in.w};
        row.op = nd.relu ? "sepconv+relu" : "sepconv";
        row.params = l.param_count();
        break;
      }
      case Model::Op::MaxPool: {
        const auto& in = dims[static_cast<std::size_t>(nd.in0)];
        d = {in.c, in.h / 2, in.w / 2};
        row.op = "maxpool2x2";
        break;
      }
      case Model::Op::Upsample: {
        const auto& in = dims[static_cast<std::size_t>(nd.in0)];
        d = {in.c, in.h * 2, in.w * 2};
        row.op = "upsample2x";
        break;
      }
      case Model::Op::Add: {
        d = dims[static_cast<std::size_t>(nd.in0)];
        row.op = "add";
        break;
      }
      case Model::Op::Concat: {
        const auto& a = dims[static_cast<std::size_t>(nd.in0)];
        const auto& b = dims[static_cast<std::size_t>(nd.in1)];
        d = {a.c + b.c, a.h, a.w};
        row.op = "concat";
        break;
      }
    }
    dims[i] = d;
    row.name = nd.name;
    row.channels = d.c;
    row.height = d.h;
    row.width = d.w;
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Per-layer output shapes and parameter counts as a plain-text table.
inline std::string summarize(const Model& model) {
  const auto rows = summary_rows(model);
  std::ostringstream os;
  os << std::left << std::setw(16) << "layer" << std::setw(14) << "op" << std::setw(16) << "output"
     << std::setw(10) << "params" << '\n';
  std::int64_t total = 0;
  for (const auto& r : rows) {
    std::ostringstream shape;
    shape << '(' << r.channels << ", " << r.height << ", " << r.width << ')';
    os << std::left << std::setw(16) << r.name << std::setw(14) << r.op << std::setw(16) << shape.str()
       << std::setw(10) << r.params << '\n';
    total += r.params;
  }
  os << "total params: " << total << '\n';
  return os.str();
}

namespace detail {

inline int push_node(Model& m, Model::Node nd) {
  m.nodes.push_back(std::move(nd));
  return static_cast<int>(m.nodes.size()) - 1;
}

inline int push_conv(Model& m, Rng& rng, const std::string& name, int in, int in_ch, int out_ch,
                     int k, bool relu) {
  m.convs.push_back(nn::Conv2d::create(in_ch, out_ch, k, k, rng));
  Model::Node nd;
  nd.op = Model::Op::Conv;
  nd.in0 = in;
  nd.layer = static_cast<int>(m.convs.size()) - 1;
  nd.relu = relu;
  nd.name = name;
  return push_node(m, std::move(nd));
}

inline int push_sep(Model& m, Rng& rng, const std::string& name, int in, int in_ch, int out_ch,
                    bool relu) {
  m.seps.push_back(nn::SeparableConv2d::create(in_ch, out_ch, 3, 3, rng));
  Model::Node nd;
  nd.op = Model::Op::SepConv;
  nd.in0 = in;
  nd.layer = static_cast<int>(m.seps.size()) - 1;
  nd.relu = relu;
  nd.name = name;
  return push_node(m, std::move(nd));
}

inline int push_simple(Model& m, Model::Op op, const std::string& name, int in0, int in1 = -1) {
  Model::Node nd;
  nd.op = op;
  nd.in0 = in0;
  nd.in1 = in1;
  nd.name = name;
  return push_node(m, std::move(nd));
}

}  // namespace detail

/// Scratch U-Net: per level two convs + maxpool down, then upsample + skip
/// merge + two convs up, ending in a 1x1 logit conv. Skip merges follow
/// spec.skip_merge; "add" aligns channel widths with a 1x1 projection.
inline Model build_unet(const UNetSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (spec.block != BlockKind::DenseDouble) {
    throw std::invalid_argument("build_unet: spec.block must be dense_double");
  }
  Rng rng(seed);
  Model m;
  m.spec = spec;
  const auto& f = spec.encoder_filters;
  const int levels = spec.levels();

  int cur = detail::push_simple(m, Model::Op::Input, "input", -1);
  int ch = spec.in_channels;
  std::vector<int> skips(static_cast<std::size_t>(levels), -1);
  for (int i = 0; i < levels; ++i) {
    const std::string base = "enc" + std::to_string(i + 1);
    cur = detail::push_conv(m, rng, base + ".conv1", cur, ch, f[static_cast<std::size_t>(i)], 3, true);
    cur = detail::push_conv(m, rng, base + ".conv2", cur, f[static_cast<std::size_t>(i)], f[static_cast<std::size_t>(i)], 3, true);
    ch = f[static_cast<std::size_t>(i)];
    skips[static_cast<std::size_t>(i)] = cur;
    if (i < levels - 1) cur = detail::push_simple(m, Model::Op::MaxPool, base + ".pool", cur);
  }
  for (int i = levels - 2; i >= 0; --i) {
    const std::string base = "dec" + std::to_string(i + 1);
    cur = detail::push_simple(m, Model::Op::Upsample, base + ".up", cur);
    const int skip_ch = f[static_cast<std::size_t>(i)];
    if (spec.skip_merge == SkipMerge::Add) {
      cur = detail::push_conv(m, rng, base + ".proj", cur, ch, skip_ch, 1, false);
      cur = detail::push_simple(m, Model::Op::Add, base + ".merge", cur, skips[static_cast<std::size_t>(i)]);
      ch = skip_ch;
    } else {
      cur = detail::push_simple(m, Model::Op::Concat, base + ".merge", cur, skips[static_cast<std::size_t>(i)]);
      ch = ch + skip_ch;
    }
    cur = detail::push_conv(m, rng, base + ".conv1", cur, ch, skip_ch, 3, true);
    cur = detail::push_conv(m, rng, base + ".conv2", cur, skip_ch, skip_ch, 3, true);
    ch = skip_ch;
  }
  detail::push_conv(m, rng, "head", cur, ch, spec.num_classes, 1, false);
  return m;
}

/// Xception-style variant: double separable-conv blocks whose input bypasses
/// the block through a 1x1 projection and is added to its output, chaining
/// block to block instead of the encoder-to-decoder merges of the scratch
/// U-Net.
inline Model build_xception_unet(const UNetSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (spec.block != BlockKind::SeparableDouble) {
    throw std::invalid_argument("build_xception_unet: spec.block must be separable_double");
  }
  Rng rng(seed);
  Model m;
  m.spec = spec;
  const auto& f = spec.encoder_filters;
  const int levels = spec.levels();

  int cur = detail::push_simple(m, Model::Op::Input, "input", -1);
  int ch = spec.in_channels;
  auto residual_block = [&](const std::string& base, int out_ch) {
    const int block_in = cur;
    const int in_ch = ch;
    cur = detail::push_sep(m, rng, base + ".sep1", cur, in_ch, out_ch, true);
    cur = detail::push_sep(m, rng, base + ".sep2", cur, out_ch, out_ch, true);
    const int res = detail::push_conv(m, rng, base + ".res", block_in, in_ch, out_ch, 1, false);
    cur = detail::push_simple(m, Model::Op::Add, base + ".add", cur, res);
    ch = out_ch;
  };
  for (int i = 0; i < levels; ++i) {
    const std::string base = "enc" + std::to_string(i + 1);
    residual_block(base, f[static_cast<std::size_t>(i)]);
    if (i < levels - 1) cur = detail::push_simple(m, Model::Op::MaxPool, base + ".pool", cur);
  }
  for (int i = levels - 2; i >= 0; --i) {
    const std::string base = "dec" + std::to_string(i + 1);
    cur = detail::push_simple(m, Model::Op::Upsample, base + ".up", cur);
    residual_block(base, f[static_cast<std::size_t>(i)]);
  }
  detail::push_conv(m, rng, "head", cur, ch, spec.num_classes, 1, false);
  return m;
}

inline Model build_model(const UNetSpec& spec, std::uint64_t seed) {
  return spec.block == BlockKind::DenseDouble ? build_unet(spec, seed) : build_xception_unet(spec, seed);
}

}  // namespace vseg::arch
