#pragma once

// Pruning to a target effective sparsity.
//
// effective_threshold_prune searches over keep-counts of one global ranking;
// masks for smaller keep-counts are nested in larger ones, so effective
// sparsity is monotone in the keep-count and plain bisection applies.
//
// effective_random_prune is the embedded-subnetwork bisection for random
// pruning under layerwise quotas: a dense bound (unpruned sets U) and a
// candidate pool P per layer, with each probe pruning a random T from U & P.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunelens/arch.hpp"
#include "prunelens/connectivity.hpp"
#include "prunelens/error.hpp"
#include "prunelens/lsq.hpp"
#include "prunelens/pruners.hpp"
#include "prunelens/random.hpp"
#include "prunelens/tensors.hpp"

namespace prunelens {

enum class Branch { kDense, kSparse, kDeficit };

inline std::string branch_name(Branch b) {
  switch (b) {
    case Branch::kDense: return "dense";
    case Branch::kSparse: return "sparse";
    case Branch::kDeficit: return "deficit";
  }
  return "unknown";
}

struct TraceStep {
  std::uint64_t m = 0;
  Branch branch = Branch::kDense;
  double effective = 0.0;  // of the probe mask; NaN when no mask was built
  std::uint64_t width = 0; // j - i after the step
  bool redistributed = false;
};

struct EffPruneResult {
  MaskSet mask;
  ConnectivityReport report;
  double target = 0.0;
  std::uint64_t pruned = 0;  // direct pruned count of the returned mask
  int iterations = 0;        // effective-sparsity evaluations
  bool unreachable = false;
  std::vector<TraceStep> trace;

  double achieved_effective() const { return report.effective_sparsity(); }
  double achieved_direct() const { return report.direct_sparsity(); }
};

inline void check_target(double target) {
  if (!(target >= 0.0 && target < 1.0)) {
    throw InputError("target effective sparsity must lie in [0, 1), got " + std::to_string(target));
  }
}

// Densest mask of the ranking whose effective sparsity reaches `target`.
// If only the fully disconnected masks reach it, the sparsest connected mask
// is returned with `unreachable` set.
inline EffPruneResult effective_threshold_prune(const ArchGraph& arch, const RankKeys& keys,
                                                double target) {
  check_target(target);
  check_shapes(arch, keys, "ranking keys");
  const GlobalRanking ranking(keys);
  const std::uint64_t total = ranking.size();

  EffPruneResult out;
  out.target = target;
  // Invariant: eff(keep = lo) >= target, eff(keep = hi) < target, with
  // keep = total + 1 standing in for "nothing is dense enough".
  std::uint64_t lo = 0;
  std::uint64_t hi = total + 1;
  std::optional<ConnectivityReport> lo_report, hi_report;
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    ConnectivityReport r = effective_report(arch, ranking.mask_for_keep(mid));
    ++out.iterations;
    const bool reached = r.effective_sparsity() >= target;
    const double eff = r.effective_sparsity();
    if (reached) {
      lo = mid;
      lo_report = std::move(r);
    } else {
      hi = mid;
      hi_report = std::move(r);
    }
    out.trace.push_back({total - mid, reached ? Branch::kSparse : Branch::kDense, eff, hi - lo, false});
  }
  // Reports for keep = 0 are known without evaluation: nothing is active.
  const auto report_for = [&](std::uint64_t keep, std::optional<ConnectivityReport>& cached) {
    out.mask = ranking.mask_for_keep(keep);
    out.report = cached ? std::move(*cached) : report_from_activity(arch, out.mask, out.mask);
  };
  std::uint64_t keep = lo;
  report_for(keep, lo_report);
  if (out.report.disconnected()) {
    out.unreachable = true;
    if (hi <= total) {
      keep = hi;
      report_for(keep, hi_report);
    }
  }
  out.pruned = total - keep;
  return out;
}

namespace detail {

// Moves `diff` units into (diff > 0) or out of (diff < 0) `t`, spreading them
// in proportion to each layer's room by largest remainder, lower index first
// on ties. Returns false if the rooms cannot absorb it.
inline bool spread_adjustment(std::vector<std::uint64_t>& t, const std::vector<std::uint64_t>& cap,
                              std::int64_t diff) {
  if (diff == 0) return true;
  const std::size_t L = t.size();
  std::vector<std::uint64_t> room(L);
  std::uint64_t total_room = 0;
  for (std::size_t l = 0; l < L; ++l) {
    room[l] = diff > 0 ? cap[l] - t[l] : t[l];
    total_room += room[l];
  }
  const auto need = static_cast<std::uint64_t>(diff > 0 ? diff : -diff);
  if (need > total_room) return false;
  std::vector<std::uint64_t> give(L);
  std::vector<double> rem(L);
  std::uint64_t given = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const double ideal = static_cast<double>(need) * static_cast<double>(room[l]) /
                         static_cast<double>(total_room);
    give[l] = std::min(static_cast<std::uint64_t>(ideal), room[l]);
    rem[l] = ideal - static_cast<double>(give[l]);
    given += give[l];
  }
  std::vector<std::size_t> order(L);
  for (std::size_t l = 0; l < L; ++l) order[l] = l;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  while (given < need) {
    for (std::size_t l : order) {
      if (given == need) break;
      if (give[l] < room[l]) {
        ++give[l];
        ++given;
      }
    }
  }
  for (std::size_t l = 0; l < L; ++l) {
    t[l] = diff > 0 ? t[l] + give[l] : t[l] - give[l];
  }
  return true;
}

} // namespace detail

// Sparse-branch update of the candidate pool P.
//   kEmbedded: P becomes the pruned set of the new sparse bound, so U & P = T
//              and the sparse bound stays inside the dense one.
//   kPrinted:  P loses T, which keeps T out of every later sample.
enum class PoolUpdate { kEmbedded, kPrinted };

inline PoolUpdate parse_pool_update(const std::string& name) {
  if (name == "embedded") return PoolUpdate::kEmbedded;
  if (name == "printed") return PoolUpdate::kPrinted;
  throw InputError("unknown pool update '" + name + "' (expected embedded or printed)");
}

inline EffPruneResult effective_random_prune(const ArchGraph& arch, const Allocator& quotas,
                                             double target, std::uint64_t seed,
                                             const std::string& allocator_name = "lsq",
                                             PoolUpdate update = PoolUpdate::kEmbedded) {
  check_target(target);
  const auto& sizes = arch.param_counts();
  const std::size_t L = sizes.size();
  const std::uint64_t total = arch.total_params();

  const LsqComplianceReport compliance = check_lsq(allocator_name, quotas, sizes, default_lsq_grid());
  for (const auto& p : compliance.points) {
    if (!p.monotone_ok) {
      throw InputError("allocator '" + allocator_name + "' is not layerwise monotone near s=" +
                       std::to_string(p.target));
    }
  }

  // U: unpruned set of the dense bound. P: candidate pool.
  std::vector<std::vector<std::uint8_t>> in_u(L), in_p(L);
  std::vector<std::uint64_t> u_size(L);
  for (std::size_t l = 0; l < L; ++l) {
    in_u[l].assign(static_cast<std::size_t>(sizes[l]), 1);
    in_p[l].assign(static_cast<std::size_t>(sizes[l]), 1);
    u_size[l] = sizes[l];
  }

  EffPruneResult out;
  out.target = target;
  MaskSet dense_bound = full_mask(arch);
  bool sparse_bound_disconnected = true;  // the initial sparse bound is the empty mask
  std::uint64_t i = 0;
  std::uint64_t j = total;
  std::uint32_t step = 0;
  std::vector<std::vector<std::uint32_t>> chosen(L);
  std::vector<std::uint32_t> pool;

  while (j - i > 1) {
    const std::uint64_t m = (i + j) / 2;
    QuotaVector q = quotas(static_cast<double>(m) / static_cast<double>(total));
    q.target = static_cast<double>(m) / static_cast<double>(total);
    const PrunedCounts goal = integerize(q, sizes);

    // |T_l| from integer deltas, bounded by what U & P can supply.
    std::vector<std::uint64_t> t(L), cap(L);
    std::int64_t assigned = 0;
    for (std::size_t l = 0; l < L; ++l) {
      cap[l] = 0;
      for (std::size_t k = 0; k < in_u[l].size(); ++k) cap[l] += in_u[l][k] & in_p[l][k];
      const std::uint64_t current = sizes[l] - u_size[l];
      const std::uint64_t want = goal.pruned[l] > current ? goal.pruned[l] - current : 0;
      t[l] = std::min(want, cap[l]);
      assigned += static_cast<std::int64_t>(t[l]);
    }
    const std::int64_t diff = static_cast<std::int64_t>(m - i) - assigned;
    TraceStep ts;
    ts.m = m;
    ts.redistributed = diff != 0;
    if (!detail::spread_adjustment(t, cap, diff)) {
      j = m;
      ts.branch = Branch::kDeficit;
      ts.effective = std::numeric_limits<double>::quiet_NaN();
      ts.width = j - i;
      out.trace.push_back(ts);
      ++step;
      continue;
    }

    MaskSet probe = dense_bound;
    for (std::size_t l = 0; l < L; ++l) {
      pool.clear();
      for (std::uint32_t k = 0; k < in_u[l].size(); ++k) {
        if (in_u[l][k] & in_p[l][k]) pool.push_back(k);
      }
      CounterStream stream(seed, StreamPurpose::kEffectiveRandom, static_cast<std::uint32_t>(l), step);
      const auto picked = sample_prefix(std::span(pool), static_cast<std::size_t>(t[l]), stream);
      chosen[l].assign(picked.begin(), picked.end());
      for (std::uint32_t k : chosen[l]) probe[l][k] = 0;
    }
    const ConnectivityReport r = effective_report(arch, probe);
    ++out.iterations;
    ts.effective = r.effective_sparsity();
    if (r.effective_sparsity() < target) {
      for (std::size_t l = 0; l < L; ++l) {
        for (std::uint32_t k : chosen[l]) in_u[l][k] = 0;
        u_size[l] -= chosen[l].size();
      }
      dense_bound = std::move(probe);
      i = m;
      ts.branch = Branch::kDense;
    } else {
      for (std::size_t l = 0; l < L; ++l) {
        if (update == PoolUpdate::kEmbedded) {
          for (std::size_t k = 0; k < in_p[l].size(); ++k) in_p[l][k] &= static_cast<std::uint8_t>(!in_u[l][k]);
          for (std::uint32_t k : chosen[l]) in_p[l][k] = 1;
        } else {
          for (std::uint32_t k : chosen[l]) in_p[l][k] = 0;
        }
      }
      sparse_bound_disconnected = r.disconnected();
      j = m;
      ts.branch = Branch::kSparse;
    }
    ts.width = j - i;
    out.trace.push_back(ts);
    ++step;
  }

  out.mask = std::move(dense_bound);
  out.report = effective_report(arch, out.mask);
  out.pruned = i;
  out.unreachable = sparse_bound_disconnected || out.report.disconnected();
  return out;
}

inline nlohmann::json eff_prune_sidecar(const EffPruneResult& r) {
  nlohmann::json trace = nlohmann::json::array();
  for (const TraceStep& s : r.trace) {
    nlohmann::json step = {{"m", s.m}, {"branch", branch_name(s.branch)}, {"width", s.width},
                           {"redistributed", s.redistributed}};
    step["eff"] = std::isnan(s.effective) ? nlohmann::json(nullptr) : nlohmann::json(s.effective);
    trace.push_back(std::move(step));
  }
  return {{"target", r.target},
          {"achieved_effective", r.achieved_effective()},
          {"achieved_direct", r.achieved_direct()},
          {"pruned", r.pruned},
          {"iterations", r.iterations},
          {"unreachable_flag", r.unreachable},
          {"trace", std::move(trace)}};
}

} // namespace prunelens
