#pragma once

// Layerwise sparsity quotas: map a global target sparsity s to per-layer
// sparsities s_l with sum_l s_l |W_l| = s sum_l |W_l| (total sparsity) and
// s_l < 1 whenever s < 1 (layer integrity).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "prunelens/arch.hpp"
#include "prunelens/error.hpp"
#include "prunelens/tensors.hpp"

namespace prunelens {

struct QuotaVector {
  std::vector<double> sparsity;  // per prunable layer
  double target = 0.0;
  std::string allocator;
  double force = std::numeric_limits<double>::quiet_NaN();  // IGQ only
  // Allocators that guarantee layer integrity keep at least one parameter per
  // layer when integerized below s = 1.
  bool keeps_layers = false;
};

struct PrunedCounts {
  std::vector<std::uint64_t> pruned;  // per prunable layer

  std::uint64_t total() const {
    return std::accumulate(pruned.begin(), pruned.end(), std::uint64_t{0});
  }
  friend bool operator==(const PrunedCounts&, const PrunedCounts&) = default;
};

inline std::uint64_t sum_sizes(const std::vector<std::uint64_t>& sizes) {
  return std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0});
}

// round-half-away-from-zero of s * total, clamped to [0, total].
inline std::uint64_t target_pruned_count(double s, std::uint64_t total) {
  const double x = std::round(s * static_cast<double>(total));
  if (x <= 0.0) return 0;
  if (x >= static_cast<double>(total)) return total;
  return static_cast<std::uint64_t>(x);
}

// Largest-remainder rounding of s_l |W_l| to integers summing to
// round(target * sum |W_l|). Ties go to the lower layer index.
inline PrunedCounts integerize(const QuotaVector& q, const std::vector<std::uint64_t>& sizes) {
  const std::size_t L = sizes.size();
  if (q.sparsity.size() != L) {
    throw ShapeError("quota vector has " + std::to_string(q.sparsity.size()) +
                     " layers, expected " + std::to_string(L));
  }
  const std::uint64_t total = sum_sizes(sizes);
  const std::uint64_t goal = target_pruned_count(q.target, total);
  const bool keep_one = q.keeps_layers && q.target < 1.0;

  PrunedCounts out;
  out.pruned.resize(L);
  std::vector<std::uint64_t> cap(L);
  std::vector<double> remainder(L);
  std::uint64_t assigned = 0;
  for (std::size_t l = 0; l < L; ++l) {
    cap[l] = (keep_one && sizes[l] > 0) ? sizes[l] - 1 : sizes[l];
    const double ideal =
        std::clamp(q.sparsity[l], 0.0, 1.0) * static_cast<double>(sizes[l]);
    const double whole = std::floor(ideal);
    out.pruned[l] = std::min(static_cast<std::uint64_t>(whole), cap[l]);
    remainder[l] = ideal - whole;
    assigned += out.pruned[l];
  }

  std::vector<std::size_t> order(L);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (assigned < goal) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    std::uint64_t deficit = goal - assigned;
    bool progress = true;
    while (deficit > 0 && progress) {
      progress = false;
      for (std::size_t l : order) {
        if (deficit == 0) break;
        if (out.pruned[l] < cap[l]) {
          ++out.pruned[l];
          --deficit;
          progress = true;
        }
      }
    }
  } else if (assigned > goal) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] < remainder[b]; });
    std::uint64_t excess = assigned - goal;
    bool progress = true;
    while (excess > 0 && progress) {
      progress = false;
      for (std::size_t l : order) {
        if (excess == 0) break;
        if (out.pruned[l] > 0) {
          --out.pruned[l];
          --excess;
          progress = true;
        }
      }
    }
  }
  return out;
}

// Ideal Gas Quotas: per-layer compression F |W_l| + 1, i.e.
// s_l = 1 - 1 / (F |W_l| + 1), with the force F found by bisection.
inline double igq_total_pruned(double force, const std::vector<std::uint64_t>& sizes) {
  double total = 0.0;
  for (std::uint64_t n : sizes) {
    const double size = static_cast<double>(n);
    total += size * (1.0 - 1.0 / (force * size + 1.0));
  }
  return total;
}

inline QuotaVector igq_from_force(double force, double target,
                                  const std::vector<std::uint64_t>& sizes) {
  QuotaVector q;
  q.allocator = "igq";
  q.target = target;
  q.force = force;
  q.keeps_layers = true;
  q.sparsity.reserve(sizes.size());
  for (std::uint64_t n : sizes) {
    q.sparsity.push_back(1.0 - 1.0 / (force * static_cast<double>(n) + 1.0));
  }
  return q;
}

inline QuotaVector igq(double s, const std::vector<std::uint64_t>& sizes) {
  if (s <= 0.0) return igq_from_force(0.0, 0.0, sizes);
  if (s >= 1.0) {
    QuotaVector q = igq_from_force(std::numeric_limits<double>::infinity(), 1.0, sizes);
    std::fill(q.sparsity.begin(), q.sparsity.end(), 1.0);
    return q;
  }
  const double goal = s * static_cast<double>(sum_sizes(sizes));
  double lo = 0.0;
  double hi = 1.0;
  while (igq_total_pruned(hi, sizes) < goal) {
    lo = hi;
    hi *= 2.0;
  }
  // Bisect until the bracket cannot shrink further in double precision; the
  // integerized total is then fixed and within one parameter of the goal.
  for (int iter = 0; iter < 4096; ++iter) {
    const double mid = lo + (hi - lo) / 2.0;
    if (mid <= lo || mid >= hi) break;
    if (igq_total_pruned(mid, sizes) < goal) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double force = lo + (hi - lo) / 2.0;
  return igq_from_force(force, s, sizes);
}

inline QuotaVector uniform(double s, const std::vector<std::uint64_t>& sizes) {
  QuotaVector q;
  q.allocator = "uniform";
  q.target = s;
  q.keeps_layers = true;
  q.sparsity.assign(sizes.size(), s);
  return q;
}

inline std::size_t first_conv_layer(const ArchGraph& arch) {
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    if (arch.node(arch.layer_node(l)).kind == LayerKind::kConv2d) return l;
  }
  throw InputError("uniform_plus needs a convolutional layer; '" + arch.name() + "' has none");
}

inline std::size_t last_dense_layer(const ArchGraph& arch) {
  for (std::size_t l = arch.num_layers(); l-- > 0;) {
    if (arch.node(arch.layer_node(l)).kind == LayerKind::kDense) return l;
  }
  throw InputError("uniform_plus needs a dense layer; '" + arch.name() + "' has none");
}

// Uniform+: first conv layer kept dense, last dense layer capped at 80%
// sparsity, every other layer at one shared rate.
inline QuotaVector uniform_plus(double s, const ArchGraph& arch) {
  constexpr double kLastCap = 0.8;
  const std::size_t first = first_conv_layer(arch);
  const std::size_t last = last_dense_layer(arch);
  const auto& sizes = arch.param_counts();
  const double goal = s * static_cast<double>(arch.total_params());
  double rest = 0.0;
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    if (l != first && l != last) rest += static_cast<double>(sizes[l]);
  }
  const double last_size = static_cast<double>(sizes[last]);

  QuotaVector q;
  q.allocator = "uniform_plus";
  q.target = s;
  q.sparsity.assign(sizes.size(), 0.0);
  double shared = goal / (rest + last_size);
  double last_rate = shared;
  if (shared > kLastCap) {
    last_rate = kLastCap;
    shared = rest > 0.0 ? (goal - kLastCap * last_size) / rest
                        : std::numeric_limits<double>::infinity();
  }
  if (shared > 1.0) {
    std::ostringstream msg;
    msg << "uniform_plus cannot reach sparsity " << s << " on '" << arch.name()
        << "': remaining layers would need rate " << shared;
    throw InfeasibleError(msg.str());
  }
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    if (l == first) continue;
    q.sparsity[l] = l == last ? last_rate : shared;
  }
  return q;
}

enum class DensityMode { kStrict, kRedistribute };

// Densities d_l = c * factor_l meeting the total-density constraint. Strict
// mode rejects d_l > 1; redistribute clamps such layers to 1 and re-solves c
// over the rest until nothing exceeds 1.
inline QuotaVector proportional_density(double s, const std::vector<std::uint64_t>& sizes,
                                        const std::vector<double>& factor, DensityMode mode,
                                        const std::string& name,
                                        const std::vector<std::string>& layer_ids) {
  const std::size_t L = sizes.size();
  const double total = static_cast<double>(sum_sizes(sizes));
  const double budget = (1.0 - s) * total;
  std::vector<char> clamped(L, 0);
  double c = 0.0;
  while (true) {
    double fixed = 0.0;
    double weighted = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      if (clamped[l]) {
        fixed += static_cast<double>(sizes[l]);
      } else {
        weighted += factor[l] * static_cast<double>(sizes[l]);
      }
    }
    c = weighted > 0.0 ? (budget - fixed) / weighted : 0.0;
    std::vector<std::size_t> over;
    for (std::size_t l = 0; l < L; ++l) {
      if (!clamped[l] && c * factor[l] > 1.0) over.push_back(l);
    }
    if (over.empty()) break;
    if (mode == DensityMode::kStrict) {
      std::ostringstream msg;
      msg << name << " infeasible at sparsity " << s << ": density exceeds 1 in";
      for (std::size_t l : over) msg << " " << layer_ids[l] << " (" << c * factor[l] << ")";
      throw InfeasibleError(msg.str());
    }
    for (std::size_t l : over) clamped[l] = 1;
    if (std::all_of(clamped.begin(), clamped.end(), [](char v) { return v != 0; })) break;
  }
  QuotaVector q;
  q.allocator = mode == DensityMode::kStrict ? name : name + "_redistribute";
  q.target = s;
  q.sparsity.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const double density = clamped[l] ? 1.0 : c * factor[l];
    q.sparsity[l] = std::clamp(1.0 - density, 0.0, 1.0);
  }
  return q;
}

// Erdos-Renyi-Kernel factor: sum of weight-tensor dims over their product,
// (kh + kw + n_in + n_out) / (kh kw n_in n_out) for conv and
// (n_in + n_out) / (n_in n_out) for dense layers.
inline double erk_factor(const std::vector<std::uint32_t>& dims) {
  double sum = 0.0;
  double product = 1.0;
  for (auto d : dims) {
    sum += d;
    product *= d;
  }
  return sum / product;
}

inline std::vector<std::string> layer_ids(const ArchGraph& arch) {
  std::vector<std::string> ids;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) ids.push_back(arch.layer_id(l));
  return ids;
}

inline QuotaVector erk(double s, const ArchGraph& arch, DensityMode mode = DensityMode::kStrict) {
  std::vector<double> factor;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) factor.push_back(erk_factor(arch.weight_dims(l)));
  return proportional_density(s, arch.param_counts(), factor, mode, "erk", layer_ids(arch));
}

// Smart-Ratios: density of layer l (1-based) proportional to (L-l+1)^2 + (L-l+1).
inline QuotaVector smart_ratios(double s, const ArchGraph& arch,
                                DensityMode mode = DensityMode::kStrict) {
  if (arch.has_add_nodes()) {
    throw InputError("smart_ratios requires a chain architecture; '" + arch.name() +
                     "' has add nodes");
  }
  const std::size_t L = arch.num_layers();
  if (s <= 0.0) {
    QuotaVector q;
    q.allocator = mode == DensityMode::kStrict ? "smart_ratios" : "smart_ratios_redistribute";
    q.target = 0.0;
    q.sparsity.assign(L, 0.0);
    return q;
  }
  std::vector<double> factor;
  for (std::size_t l = 1; l <= L; ++l) {
    const double r = static_cast<double>(L - l + 1);
    factor.push_back(r * r + r);
  }
  return proportional_density(s, arch.param_counts(), factor, mode, "smart_ratios",
                              layer_ids(arch));
}

inline QuotaVector quotas_from_mask(const MaskSet& mask) {
  QuotaVector q;
  q.allocator = "from_mask";
  q.target = direct_sparsity(mask);
  for (const auto& layer : mask.layers) {
    const auto n = static_cast<double>(layer.size());
    q.sparsity.push_back(n == 0 ? 0.0 : (n - static_cast<double>(count_unpruned(layer))) / n);
  }
  return q;
}

// An allocator bound to one architecture (held by value).
using Allocator = std::function<QuotaVector(double)>;

inline const std::vector<std::string>& allocator_names() {
  static const std::vector<std::string> names{
      "uniform", "uniform_plus", "erk", "erk_redistribute", "smart_ratios",
      "smart_ratios_redistribute", "igq"};
  return names;
}

inline Allocator make_allocator(const std::string& name, const ArchGraph& arch) {
  if (name == "uniform") return [sizes = arch.param_counts()](double s) { return uniform(s, sizes); };
  if (name == "igq") return [sizes = arch.param_counts()](double s) { return igq(s, sizes); };
  if (name == "uniform_plus") {
    first_conv_layer(arch);
    last_dense_layer(arch);
    return [arch](double s) { return uniform_plus(s, arch); };
  }
  if (name == "erk") return [arch](double s) { return erk(s, arch, DensityMode::kStrict); };
  if (name == "erk_redistribute") {
    return [arch](double s) { return erk(s, arch, DensityMode::kRedistribute); };
  }
  if (name == "smart_ratios" || name == "smart_ratios_redistribute") {
    const auto mode = name == "smart_ratios" ? DensityMode::kStrict : DensityMode::kRedistribute;
    if (arch.has_add_nodes()) {
      throw InputError("smart_ratios requires a chain architecture; '" + arch.name() +
                       "' has add nodes");
    }
    return [arch, mode](double s) { return smart_ratios(s, arch, mode); };
  }
  throw InputError("unknown layerwise allocator '" + name + "'");
}

struct LsqGridResult {
  double target = 0.0;
  bool feasible = true;
  double total_error = 0.0;  // |sum s_l |W_l| - s sum |W_l||, in parameters
  std::uint64_t integerized_total = 0;
  bool total_ok = true;
  bool integrity_ok = true;
  bool monotone_ok = true;
  std::string message;

  bool ok() const { return feasible && total_ok && integrity_ok && monotone_ok; }
};

struct LsqComplianceReport {
  std::string allocator;
  std::vector<LsqGridResult> points;

  std::size_t violations() const {
    return static_cast<std::size_t>(
        std::count_if(points.begin(), points.end(), [](const auto& p) { return !p.ok(); }));
  }
  bool compliant() const { return violations() == 0; }
};

// Checks total sparsity (within one parameter, before and after
// integerization), layer integrity (s_l < 1 and k_l < |W_l| for s < 1) and
// layerwise monotonicity between consecutive grid points.
inline LsqComplianceReport check_lsq(const std::string& name, const Allocator& allocator,
                                     const std::vector<std::uint64_t>& sizes,
                                     std::vector<double> grid) {
  constexpr double kMonotoneSlack = 1e-12;
  std::sort(grid.begin(), grid.end());
  LsqComplianceReport report;
  report.allocator = name;
  const std::uint64_t total = sum_sizes(sizes);
  std::optional<QuotaVector> previous;
  for (double s : grid) {
    LsqGridResult r;
    r.target = s;
    QuotaVector q;
    try {
      q = allocator(s);
    } catch (const InfeasibleError& e) {
      r.feasible = false;
      r.message = e.what();
      report.points.push_back(std::move(r));
      continue;
    }
    double sum = 0.0;
    for (std::size_t l = 0; l < sizes.size(); ++l) sum += q.sparsity[l] * static_cast<double>(sizes[l]);
    r.total_error = std::abs(sum - s * static_cast<double>(total));
    const PrunedCounts counts = integerize(q, sizes);
    r.integerized_total = counts.total();
    const double int_error =
        std::abs(static_cast<double>(r.integerized_total) - s * static_cast<double>(total));
    r.total_ok = r.total_error <= 1.0 && int_error <= 1.0;
    if (!r.total_ok) r.message += "total sparsity off by " + std::to_string(r.total_error) + "; ";
    if (s < 1.0) {
      for (std::size_t l = 0; l < sizes.size(); ++l) {
        if (q.sparsity[l] >= 1.0 || counts.pruned[l] >= sizes[l]) {
          r.integrity_ok = false;
          r.message += "layer " + std::to_string(l) + " fully pruned; ";
        }
      }
    }
    if (previous) {
      for (std::size_t l = 0; l < sizes.size(); ++l) {
        if (q.sparsity[l] + kMonotoneSlack < previous->sparsity[l]) {
          r.monotone_ok = false;
          r.message += "layer " + std::to_string(l) + " sparsity decreased; ";
        }
      }
    }
    previous = q;
    report.points.push_back(std::move(r));
  }
  return report;
}

// {0.00, 0.01, ..., 0.99, 0.999}
inline std::vector<double> default_lsq_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 99; ++i) grid.push_back(i / 100.0);
  grid.push_back(0.999);
  return grid;
}

} // namespace prunelens
