#pragma once

// Randomized small graphs and masks for oracle and property checks.

#include <cstdint>
#include <string>
#include <vector>

#include "prunelens/arch.hpp"
#include "prunelens/random.hpp"
#include "prunelens/tensors.hpp"
#include "prunelens/zoo.hpp"

namespace prunelens::support {

inline const std::vector<double>& instance_sparsities() {
  static const std::vector<double> s = {0.3, 0.7, 0.9, 0.99};
  return s;
}

struct Instance {
  ArchGraph arch;
  MaskSet mask;
  WeightSet weights;  // all nonzero
  double sparsity;
  std::string family;
};

class Draw {
public:
  explicit Draw(std::uint64_t seed, std::uint32_t sub) : s_(seed, StreamPurpose::kTest, 0, sub) {}
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(s_.next_below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  bool coin(double p) { return s_.next_unit() < p; }
  CounterStream& stream() { return s_; }

private:
  CounterStream s_;
};

inline ArchGraph random_mlp(Draw& d) {
  ArchBuilder b("mlp");
  std::string x = b.input_units(d.between(1, 64));
  const auto depth = d.between(1, 5);
  for (std::int64_t k = 0; k < depth; ++k) {
    x = b.dense("fc" + std::to_string(k), x, d.between(1, 64));
  }
  return b.finish(x);
}

// Up to four convolutions, optional pooling, depthwise groups and residual
// adds, then a small dense head.
inline ArchGraph random_convnet(Draw& d, bool residual) {
  ArchBuilder b(residual ? "resnet" : "convnet");
  const auto side = d.between(4, 12);
  std::string x = b.input(d.between(1, 3), side, side);
  const auto convs = d.between(1, 4);
  for (std::int64_t k = 0; k < convs; ++k) {
    const Shape s = b.shape_of(x);
    const std::string id = "conv" + std::to_string(k);
    if (residual && k + 1 < convs && d.coin(0.6)) {
      const std::int64_t kernel = d.coin(0.5) ? 3 : 1;
      const std::string mid = b.conv(id, x, d.between(1, 8), kernel, 1, kernel / 2);
      ++k;
      const std::string back = b.conv("conv" + std::to_string(k), mid, s.channels, 3, 1, 1);
      x = b.add("add" + std::to_string(k), {back, x});
      continue;
    }
    if (d.coin(0.15) && s.channels > 1) {
      x = b.conv(id, x, s.channels, 3, 1, 1, s.channels);
      continue;
    }
    const std::int64_t kernel = std::min<std::int64_t>(s.height, d.coin(0.7) ? 3 : 1);
    const std::int64_t stride = s.height >= 6 && d.coin(0.3) ? 2 : 1;
    const std::int64_t padding = kernel == 3 && d.coin(0.6) ? 1 : 0;
    x = b.conv(id, x, d.between(1, 8), kernel, stride, padding);
    if (b.shape_of(x).height >= 4 && d.coin(0.3)) {
      x = b.pool("pool" + std::to_string(k), x, 2, 2, 0, d.coin(0.5) ? PoolMode::kMax : PoolMode::kAvg);
    }
  }
  x = b.flatten("flatten", x);
  if (d.coin(0.5)) x = b.dense("fc_hidden", x, d.between(1, 16));
  x = b.dense("fc_out", x, d.between(1, 10));
  return b.finish(x);
}

// Each parameter pruned independently with probability s.
inline MaskSet bernoulli_mask(const ArchGraph& arch, double s, Draw& d) {
  MaskSet m = full_mask(arch);
  for (auto& layer : m.layers) {
    for (auto& v : layer) v = d.stream().next_unit() < s ? 0 : 1;
  }
  return m;
}

inline WeightSet nonzero_weights(const ArchGraph& arch, Draw& d) {
  WeightSet w = filled_like<WeightSet>(arch, 0.0);
  for (auto& layer : w.layers) {
    for (auto& v : layer) {
      const double u = d.stream().next_normal();
      v = u == 0.0 ? 1.0 : u;
    }
  }
  return w;
}

inline Instance make_instance(std::uint64_t index) {
  Draw d(0x5eed0000u + index, static_cast<std::uint32_t>(index));
  const int family = static_cast<int>(index % 3);
  ArchGraph arch = family == 0 ? random_mlp(d) : random_convnet(d, family == 2);
  const double s = instance_sparsities()[(index / 3) % instance_sparsities().size()];
  MaskSet mask = bernoulli_mask(arch, s, d);
  WeightSet weights = nonzero_weights(arch, d);
  const char* names[] = {"mlp", "conv", "residual"};
  return {std::move(arch), std::move(mask), std::move(weights), s, names[family]};
}

// A pair of masks with unpruned(inner) a subset of unpruned(outer).
inline std::pair<MaskSet, MaskSet> nested_pair(const ArchGraph& arch, std::uint64_t seed) {
  Draw d(seed, 77);
  const double s1 = instance_sparsities()[seed % 4];
  MaskSet outer = bernoulli_mask(arch, s1, d);
  MaskSet inner = outer;
  const double extra = 0.05 + 0.9 * d.stream().next_unit();
  for (auto& layer : inner.layers) {
    for (auto& v : layer) {
      if (v && d.stream().next_unit() < extra) v = 0;
    }
  }
  return {std::move(outer), std::move(inner)};
}

} // namespace prunelens::support
