#pragma once

// One named way of turning (arch, weights, target, seed) into a mask. Shared by
// the prune command and sweep cells.

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "prunelens/arch.hpp"
#include "prunelens/effprune.hpp"
#include "prunelens/error.hpp"
#include "prunelens/lsq.hpp"
#include "prunelens/pruners.hpp"
#include "prunelens/tensors.hpp"

namespace prunelens {

struct MethodSpec {
  std::string label;              // defaults to a name built from the fields below
  std::string method = "random";  // random | synflow | magnitude | lamp | ingested
  std::string lsq = "uniform";    // quotas for random and layerwise pruning
  bool layerwise = false;         // score methods: prune per layer under lsq quotas
  bool effective = false;         // target is an effective sparsity
  bool shuffle = false;           // reshuffle surviving edges within layers afterwards
  int iterations = 0;             // 0 picks the default
  ScheduleMode schedule = ScheduleMode::kExponential;
  PoolUpdate pool_update = PoolUpdate::kEmbedded;  // effective random pruning only
  std::optional<ScoreSet> ingested;

  bool uses_lsq() const { return method == "random" || layerwise; }

  int resolved_iterations() const {
    if (iterations > 0) return iterations;
    return method == "ingested" || method == "random" || effective || layerwise ? 1 : 100;
  }

  std::string name() const {
    if (!label.empty()) return label;
    std::string n = effective ? "eff-" + method : method;
    if (uses_lsq()) n += "-" + lsq;
    if (effective && method == "random" && pool_update == PoolUpdate::kPrinted) n += "-printed";
    if (shuffle) n += "-shuffled";
    return n;
  }
};

inline MethodSpec method_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("method entry must be an object");
  MethodSpec m;
  m.label = j.value("label", "");
  m.method = j.value("method", "random");
  m.lsq = j.value("lsq", "uniform");
  m.layerwise = j.value("layerwise", false);
  m.effective = j.value("effective", false);
  m.shuffle = j.value("shuffle", false);
  m.iterations = j.value("iterations", 0);
  const std::string schedule = j.value("schedule", "exponential");
  if (schedule == "exponential") {
    m.schedule = ScheduleMode::kExponential;
  } else if (schedule == "linear") {
    m.schedule = ScheduleMode::kLinear;
  } else {
    throw ParseError("unknown schedule '" + schedule + "'");
  }
  m.pool_update = parse_pool_update(j.value("pool_update", "embedded"));
  if (m.method == "ingested") throw InputError("ingested scores cannot be swept");
  parse_provider(m.method == "random" ? "random" : m.method);
  return m;
}

struct PruneOutcome {
  MaskSet mask;
  std::optional<EffPruneResult> search;  // set for effective targets
};

inline PruneOutcome produce_mask(const ArchGraph& arch, const WeightSet& weights,
                                 const MethodSpec& spec, double s, std::uint64_t seed) {
  if (!(s >= 0.0 && s <= 1.0)) throw InputError("sparsity must lie in [0, 1]");
  PruneOutcome out;
  const auto& sizes = arch.param_counts();
  const int n = spec.resolved_iterations();

  if (spec.method == "random") {
    const Allocator alloc = make_allocator(spec.lsq, arch);
    if (spec.effective) {
      out.search = effective_random_prune(arch, alloc, s, seed, spec.lsq, spec.pool_update);
      out.mask = out.search->mask;
    } else {
      out.mask = random_prune(arch, integerize(alloc(s), sizes), seed);
    }
  } else {
    ScoreProvider provider;
    provider.kind = parse_provider(spec.method);
    provider.seed = seed;
    provider.ingested = spec.ingested;
    if ((spec.effective || spec.layerwise || !provider.recomputable()) && n > 1) {
      throw InputError("method '" + spec.name() + "' is single-shot; iterations must be 1");
    }
    const MaskSet full = full_mask(arch);
    if (spec.effective) {
      out.search = effective_threshold_prune(arch, provider.keys(arch, weights, full), s);
      out.mask = out.search->mask;
    } else if (spec.layerwise) {
      const PrunedCounts counts = integerize(make_allocator(spec.lsq, arch)(s), sizes);
      out.mask = layerwise_prune(provider.keys(arch, weights, full), counts);
    } else if (n > 1) {
      out.mask = iterative_prune(arch, weights, provider, IterSchedule{n, spec.schedule, s});
    } else {
      const std::uint64_t total = arch.total_params();
      out.mask = threshold_prune_global(provider.keys(arch, weights, full),
                                        total - target_pruned_count(s, total));
    }
  }
  if (spec.shuffle) out.mask = shuffle_mask(arch, out.mask, seed);
  return out;
}

} // namespace prunelens
