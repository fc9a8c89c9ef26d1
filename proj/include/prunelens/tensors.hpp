#pragma once

// Per-layer tensor sets (masks, weights, scores) and direct-sparsity bookkeeping.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "prunelens/arch.hpp"
#include "prunelens/error.hpp"
#include "prunelens/random.hpp"

namespace prunelens {

// One flat array per prunable layer, indexed row-major over the weight tensor.
template <typename T, typename Tag>
struct LayerTensors {
  using value_type = T;
  std::vector<std::vector<T>> layers;

  std::size_t num_layers() const { return layers.size(); }
  std::vector<T>& operator[](std::size_t l) { return layers[l]; }
  const std::vector<T>& operator[](std::size_t l) const { return layers[l]; }
  friend bool operator==(const LayerTensors&, const LayerTensors&) = default;
};

struct MaskTag {};
struct WeightTag {};
struct ScoreTag {};

using MaskSet = LayerTensors<std::uint8_t, MaskTag>;
using WeightSet = LayerTensors<double, WeightTag>;
using ScoreSet = LayerTensors<double, ScoreTag>;

template <typename Set>
Set filled_like(const ArchGraph& arch, typename Set::value_type value) {
  Set set;
  set.layers.reserve(arch.num_layers());
  for (std::uint64_t n : arch.param_counts()) {
    set.layers.emplace_back(static_cast<std::size_t>(n), value);
  }
  return set;
}

inline MaskSet full_mask(const ArchGraph& arch) { return filled_like<MaskSet>(arch, 1); }
inline MaskSet empty_mask(const ArchGraph& arch) { return filled_like<MaskSet>(arch, 0); }

template <typename T, typename Tag>
void check_shapes(const ArchGraph& arch, const LayerTensors<T, Tag>& set, const char* what) {
  if (set.layers.size() != arch.num_layers()) {
    throw ShapeError(std::string(what) + " has " + std::to_string(set.layers.size()) +
                     " layers, architecture '" + arch.name() + "' has " +
                     std::to_string(arch.num_layers()));
  }
  for (std::size_t l = 0; l < set.layers.size(); ++l) {
    if (set.layers[l].size() != arch.param_counts()[l]) {
      throw ShapeError(std::string(what) + " layer '" + arch.layer_id(l) + "' has " +
                       std::to_string(set.layers[l].size()) + " entries, expected " +
                       std::to_string(arch.param_counts()[l]));
    }
  }
}

inline void validate_mask(const ArchGraph& arch, const MaskSet& mask) {
  check_shapes(arch, mask, "mask");
  for (std::size_t l = 0; l < mask.layers.size(); ++l) {
    for (std::uint8_t v : mask.layers[l]) {
      if (v > 1) throw FormatError("mask layer '" + arch.layer_id(l) + "' has a value not in {0,1}");
    }
  }
}

inline void validate_scores(const ArchGraph& arch, const ScoreSet& scores) {
  check_shapes(arch, scores, "scores");
  for (std::size_t l = 0; l < scores.layers.size(); ++l) {
    for (double v : scores.layers[l]) {
      if (!std::isfinite(v) || v < 0.0) {
        throw FormatError("scores layer '" + arch.layer_id(l) +
                          "' has a negative or non-finite value");
      }
    }
  }
}

inline std::uint64_t count_unpruned(const std::vector<std::uint8_t>& layer) {
  std::uint64_t kept = 0;
  for (std::uint8_t v : layer) kept += v;
  return kept;
}

// Exact pruned/total counts; the sparsity is their ratio.
struct SparsityCount {
  std::uint64_t pruned = 0;
  std::uint64_t total = 0;

  double sparsity() const { return total == 0 ? 0.0 : static_cast<double>(pruned) / total; }
  double compression() const {
    const std::uint64_t kept = total - pruned;
    return kept == 0 ? std::numeric_limits<double>::infinity()
                     : static_cast<double>(total) / static_cast<double>(kept);
  }
  friend bool operator==(const SparsityCount&, const SparsityCount&) = default;
};

inline SparsityCount direct_sparsity_count(const MaskSet& mask) {
  SparsityCount c;
  for (const auto& layer : mask.layers) {
    c.total += layer.size();
    c.pruned += layer.size() - count_unpruned(layer);
  }
  return c;
}

inline double direct_sparsity(const MaskSet& mask) { return direct_sparsity_count(mask).sparsity(); }

inline std::vector<std::uint64_t> pruned_per_layer(const MaskSet& mask) {
  std::vector<std::uint64_t> pruned;
  pruned.reserve(mask.layers.size());
  for (const auto& layer : mask.layers) pruned.push_back(layer.size() - count_unpruned(layer));
  return pruned;
}

// Kaiming normal with fan averaging: std = sqrt(2 / ((fan_in + fan_out) / 2)).
inline double kaiming_fan_avg_std(const Fans& fans) {
  return std::sqrt(2.0 / ((fans.fan_in + fans.fan_out) / 2.0));
}

// Layer l is filled in flat index order from the stream (seed, kInitWeights, l).
inline WeightSet init_weights(const ArchGraph& arch, std::uint64_t seed) {
  WeightSet weights;
  weights.layers.resize(arch.num_layers());
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const double stddev = kaiming_fan_avg_std(layer_fans(arch, l));
    CounterStream stream(seed, StreamPurpose::kInitWeights, static_cast<std::uint32_t>(l));
    auto& layer = weights.layers[l];
    layer.resize(static_cast<std::size_t>(arch.param_counts()[l]));
    for (double& w : layer) w = stddev * stream.next_normal();
  }
  return weights;
}

} // namespace prunelens
