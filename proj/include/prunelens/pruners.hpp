#pragma once

// Mask producers: random pruning under per-layer counts, global and layerwise
// score thresholds, iterative re-scored pruning, and within-layer reshuffling.
//
// Every ranking uses one total order: higher score first, then lower layer
// index, then lower flat index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "prunelens/arch.hpp"
#include "prunelens/error.hpp"
#include "prunelens/lsq.hpp"
#include "prunelens/random.hpp"
#include "prunelens/synflow.hpp"
#include "prunelens/tensors.hpp"

namespace prunelens {

inline MaskSet random_prune(const ArchGraph& arch, const PrunedCounts& counts, std::uint64_t seed) {
  if (counts.pruned.size() != arch.num_layers()) {
    throw ShapeError("pruned counts do not match the number of layers");
  }
  MaskSet mask = full_mask(arch);
  std::vector<std::uint32_t> pool;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const std::uint64_t n = arch.param_counts()[l];
    if (counts.pruned[l] > n) {
      throw ShapeError("layer '" + arch.layer_id(l) + "': cannot prune " +
                       std::to_string(counts.pruned[l]) + " of " + std::to_string(n));
    }
    pool.resize(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), std::uint32_t{0});
    CounterStream stream(seed, StreamPurpose::kRandomPrune, static_cast<std::uint32_t>(l));
    for (std::uint32_t idx : sample_prefix(std::span(pool), counts.pruned[l], stream)) {
      mask[l][idx] = 0;
    }
  }
  return mask;
}

// Uniformly re-draws each layer's mask keeping its unpruned count.
inline MaskSet shuffle_mask(const ArchGraph& arch, const MaskSet& mask, std::uint64_t seed) {
  check_shapes(arch, mask, "mask");
  MaskSet out = full_mask(arch);
  std::vector<std::uint32_t> pool;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const std::uint64_t n = arch.param_counts()[l];
    pool.resize(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), std::uint32_t{0});
    CounterStream stream(seed, StreamPurpose::kShuffle, static_cast<std::uint32_t>(l));
    for (std::uint32_t idx : sample_prefix(std::span(pool), n - count_unpruned(mask[l]), stream)) {
      out[l][idx] = 0;
    }
  }
  return out;
}

// Per-parameter ranking keys; larger ranks first. -inf is reserved for
// parameters that must stay pruned.
struct RankTag {};
using RankKeys = LayerTensors<double, RankTag>;

inline constexpr double kPrunedKey = -std::numeric_limits<double>::infinity();

template <typename Tag>
RankKeys rank_keys(const LayerTensors<double, Tag>& values) {
  RankKeys keys;
  keys.layers = values.layers;
  return keys;
}

// Keys for re-scoring under an existing mask: pruned entries sink to -inf,
// unpruned entries keep their score. Log scores of -inf (zero score) on
// unpruned entries become the lowest finite double so they still outrank
// pruned ones.
template <typename Tag>
RankKeys masked_rank_keys(const LayerTensors<double, Tag>& values, const MaskSet& mask) {
  RankKeys keys;
  keys.layers.resize(values.num_layers());
  for (std::size_t l = 0; l < values.num_layers(); ++l) {
    auto& k = keys[l];
    k.resize(values[l].size());
    for (std::size_t i = 0; i < k.size(); ++i) {
      if (!mask[l][i]) {
        k[i] = kPrunedKey;
      } else {
        k[i] = values[l][i] == kPrunedKey ? std::numeric_limits<double>::lowest() : values[l][i];
      }
    }
  }
  return keys;
}

namespace detail {

struct FlatKeys {
  std::vector<double> values;
  std::vector<std::uint64_t> offsets;  // layer l starts at offsets[l]
};

inline FlatKeys flatten_keys(const RankKeys& keys) {
  FlatKeys flat;
  flat.offsets.reserve(keys.num_layers() + 1);
  std::uint64_t total = 0;
  for (const auto& layer : keys.layers) {
    flat.offsets.push_back(total);
    total += layer.size();
  }
  flat.offsets.push_back(total);
  if (total > 0xFFFFFFFFull) throw Error("too many parameters for a global ranking");
  flat.values.reserve(static_cast<std::size_t>(total));
  for (const auto& layer : keys.layers) {
    for (double v : layer) {
      if (std::isnan(v)) throw NumericError("NaN ranking key");
      flat.values.push_back(v);
    }
  }
  return flat;
}

inline auto rank_before(const std::vector<double>& values) {
  return [&values](std::uint32_t a, std::uint32_t b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  };
}

inline MaskSet mask_from_kept(const FlatKeys& flat, std::span<const std::uint32_t> kept) {
  MaskSet mask;
  mask.layers.resize(flat.offsets.size() - 1);
  for (std::size_t l = 0; l + 1 < flat.offsets.size(); ++l) {
    mask.layers[l].assign(static_cast<std::size_t>(flat.offsets[l + 1] - flat.offsets[l]), 0);
  }
  for (std::uint32_t g : kept) {
    const auto it = std::upper_bound(flat.offsets.begin(), flat.offsets.end(), g);
    const auto l = static_cast<std::size_t>(it - flat.offsets.begin() - 1);
    mask.layers[l][g - flat.offsets[l]] = 1;
  }
  return mask;
}

} // namespace detail

// Full global ordering, for callers that need masks at many keep-counts.
class GlobalRanking {
public:
  explicit GlobalRanking(const RankKeys& keys) : flat_(detail::flatten_keys(keys)) {
    order_.resize(flat_.values.size());
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    std::sort(order_.begin(), order_.end(), detail::rank_before(flat_.values));
  }

  std::uint64_t size() const { return order_.size(); }

  // Mask keeping the `keep` highest-ranked parameters. Masks are nested in keep.
  MaskSet mask_for_keep(std::uint64_t keep) const {
    keep = std::min<std::uint64_t>(keep, order_.size());
    return detail::mask_from_kept(flat_, std::span(order_).first(static_cast<std::size_t>(keep)));
  }

private:
  detail::FlatKeys flat_;
  std::vector<std::uint32_t> order_;
};

inline MaskSet threshold_prune_global(const RankKeys& keys, std::uint64_t keep) {
  detail::FlatKeys flat = detail::flatten_keys(keys);
  const std::uint64_t total = flat.values.size();
  if (keep > total) {
    throw InputError("keep=" + std::to_string(keep) + " exceeds " + std::to_string(total) +
                     " parameters");
  }
  std::vector<std::uint32_t> ids(static_cast<std::size_t>(total));
  std::iota(ids.begin(), ids.end(), std::uint32_t{0});
  if (keep > 0 && keep < total) {
    std::nth_element(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                     detail::rank_before(flat.values));
  }
  return detail::mask_from_kept(flat, std::span(ids).first(static_cast<std::size_t>(keep)));
}

inline MaskSet threshold_prune_global(const ScoreSet& scores, std::uint64_t keep) {
  return threshold_prune_global(rank_keys(scores), keep);
}

// Within each layer, keeps the |W_l| - k_l highest scores.
template <typename Tag>
MaskSet layerwise_prune(const LayerTensors<double, Tag>& scores, const PrunedCounts& counts) {
  if (counts.pruned.size() != scores.num_layers()) {
    throw ShapeError("pruned counts do not match the number of layers");
  }
  MaskSet mask;
  mask.layers.resize(scores.num_layers());
  std::vector<std::uint32_t> ids;
  for (std::size_t l = 0; l < scores.num_layers(); ++l) {
    const auto& values = scores[l];
    const std::size_t n = values.size();
    if (counts.pruned[l] > n) throw ShapeError("pruned count exceeds layer size");
    const auto keep = static_cast<std::size_t>(n - counts.pruned[l]);
    ids.resize(n);
    std::iota(ids.begin(), ids.end(), std::uint32_t{0});
    if (keep > 0 && keep < n) {
      std::nth_element(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                       detail::rank_before(values));
    }
    mask[l].assign(n, 0);
    for (std::size_t i = 0; i < keep; ++i) mask[l][ids[i]] = 1;
  }
  return mask;
}

inline ScoreSet magnitude_scores(const WeightSet& weights, const MaskSet& mask) {
  ScoreSet scores;
  scores.layers.resize(weights.num_layers());
  for (std::size_t l = 0; l < weights.num_layers(); ++l) {
    scores[l].resize(weights[l].size());
    for (std::size_t i = 0; i < weights[l].size(); ++i) {
      scores[l][i] = mask[l][i] ? std::abs(weights[l][i]) : 0.0;
    }
  }
  return scores;
}

// LAMP: within a layer, order surviving weights by w^2 ascending and score each
// by w^2 over the sum of w^2 at its rank and above. Equal magnitudes rank the
// higher flat index lower, matching the magnitude tie-break.
inline ScoreSet lamp_scores(const WeightSet& weights, const MaskSet& mask) {
  ScoreSet scores;
  scores.layers.resize(weights.num_layers());
  std::vector<std::uint32_t> ids;
  for (std::size_t l = 0; l < weights.num_layers(); ++l) {
    const auto& w = weights[l];
    scores[l].assign(w.size(), 0.0);
    ids.clear();
    for (std::uint32_t i = 0; i < w.size(); ++i) {
      if (mask[l][i]) ids.push_back(i);
    }
    std::sort(ids.begin(), ids.end(), [&](std::uint32_t a, std::uint32_t b) {
      const double wa = w[a] * w[a];
      const double wb = w[b] * w[b];
      return wa < wb || (wa == wb && a > b);
    });
    double suffix = 0.0;
    for (std::size_t r = ids.size(); r-- > 0;) {
      const double sq = w[ids[r]] * w[ids[r]];
      suffix += sq;
      scores[l][ids[r]] = suffix > 0.0 ? sq / suffix : 0.0;
    }
  }
  return scores;
}

inline ScoreSet random_scores(const ArchGraph& arch, const MaskSet& mask, std::uint64_t seed,
                              std::uint32_t round = 0) {
  ScoreSet scores = filled_like<ScoreSet>(arch, 0.0);
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    CounterStream stream(seed, StreamPurpose::kRandomScores, static_cast<std::uint32_t>(l), round);
    for (std::size_t i = 0; i < scores[l].size(); ++i) {
      const double u = stream.next_open_unit();
      if (mask[l][i]) scores[l][i] = u;
    }
  }
  return scores;
}

enum class ProviderKind { kSynflow, kMagnitude, kLamp, kRandom, kIngested };

inline std::string provider_name(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kSynflow: return "synflow";
    case ProviderKind::kMagnitude: return "magnitude";
    case ProviderKind::kLamp: return "lamp";
    case ProviderKind::kRandom: return "random";
    case ProviderKind::kIngested: return "ingested";
  }
  return "unknown";
}

inline ProviderKind parse_provider(const std::string& name) {
  if (name == "synflow") return ProviderKind::kSynflow;
  if (name == "magnitude") return ProviderKind::kMagnitude;
  if (name == "lamp") return ProviderKind::kLamp;
  if (name == "random") return ProviderKind::kRandom;
  if (name == "ingested") return ProviderKind::kIngested;
  throw InputError("unknown score provider '" + name + "'");
}

struct ScoreProvider {
  ProviderKind kind = ProviderKind::kSynflow;
  std::uint64_t seed = 0;          // random provider
  std::optional<ScoreSet> ingested;

  bool recomputable() const { return kind != ProviderKind::kIngested; }

  // Ranking keys for the current mask. SynFlow ranks by log path norm.
  RankKeys keys(const ArchGraph& arch, const WeightSet& weights, const MaskSet& mask,
                std::uint32_t round = 0) const {
    switch (kind) {
      case ProviderKind::kSynflow:
        return masked_rank_keys(synflow_log_scores(arch, weights, mask), mask);
      case ProviderKind::kMagnitude:
        return masked_rank_keys(magnitude_scores(weights, mask), mask);
      case ProviderKind::kLamp:
        return masked_rank_keys(lamp_scores(weights, mask), mask);
      case ProviderKind::kRandom:
        return masked_rank_keys(random_scores(arch, mask, seed, round), mask);
      case ProviderKind::kIngested:
        if (!ingested) throw InputError("ingested provider has no scores");
        validate_scores(arch, *ingested);
        return masked_rank_keys(*ingested, mask);
    }
    throw InputError("unknown score provider");
  }

  ScoreSet scores(const ArchGraph& arch, const WeightSet& weights, const MaskSet& mask,
                  std::uint32_t round = 0) const {
    switch (kind) {
      case ProviderKind::kSynflow: return synflow_scores(arch, weights, mask);
      case ProviderKind::kMagnitude: return magnitude_scores(weights, mask);
      case ProviderKind::kLamp: return lamp_scores(weights, mask);
      case ProviderKind::kRandom: return random_scores(arch, mask, seed, round);
      case ProviderKind::kIngested:
        if (!ingested) throw InputError("ingested provider has no scores");
        return *ingested;
    }
    throw InputError("unknown score provider");
  }
};

enum class ScheduleMode { kExponential, kLinear };

struct IterSchedule {
  int iterations = 100;
  ScheduleMode mode = ScheduleMode::kExponential;
  double sparsity = 0.0;

  // Parameters kept after round k (1-based) out of `total`.
  std::uint64_t keep_after(int k, std::uint64_t total) const {
    if (k >= iterations) return total - target_pruned_count(sparsity, total);
    const double fraction = static_cast<double>(k) / iterations;
    const double density = mode == ScheduleMode::kExponential
                               ? std::pow(1.0 - sparsity, fraction)
                               : 1.0 - sparsity * fraction;
    return total - target_pruned_count(1.0 - density, total);
  }
};

// Called after each round with (round, mask).
using IterationObserver = std::function<void(int, const MaskSet&)>;

inline MaskSet iterative_prune(const ArchGraph& arch, const WeightSet& weights,
                               const ScoreProvider& provider, const IterSchedule& schedule,
                               const IterationObserver& observer = {}) {
  if (!provider.recomputable()) {
    throw InputError("provider '" + provider_name(provider.kind) +
                     "' cannot be re-scored; iterative pruning needs synflow, magnitude, lamp "
                     "or random");
  }
  if (schedule.iterations < 1) throw InputError("iterations must be positive");
  if (schedule.sparsity < 0.0 || schedule.sparsity > 1.0) {
    throw InputError("target sparsity must lie in [0, 1]");
  }
  const std::uint64_t total = arch.total_params();
  MaskSet mask = full_mask(arch);
  for (int k = 1; k <= schedule.iterations; ++k) {
    const RankKeys keys = provider.keys(arch, weights, mask, static_cast<std::uint32_t>(k));
    mask = threshold_prune_global(keys, schedule.keep_after(k, total));
    if (observer) observer(k, mask);
  }
  return mask;
}

} // namespace prunelens
