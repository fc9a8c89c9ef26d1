#pragma once

// Brute-force verification of effective_report: the masked network is expanded
// into an explicit unit-level edge list (one edge per parameter application
// site), then searched breadth-first from all input units and, on the reversed
// graph, from all output units. Shares no code with the sweep in
// connectivity.hpp beyond the architecture and report types.

#include <cstdint>
#include <deque>
#include <vector>

#include "prunelens/arch.hpp"
#include "prunelens/connectivity.hpp"
#include "prunelens/error.hpp"
#include "prunelens/tensors.hpp"

namespace prunelens {

inline constexpr std::uint64_t kDefaultOracleUnitBound = 100000;

namespace detail {

struct UnitEdge {
  std::uint32_t from;
  std::uint32_t to;
  std::int32_t layer;   // -1 for structural edges (pool, flatten, add, output)
  std::uint32_t param;  // flat index within the layer
};

inline std::vector<bool> bfs(std::size_t units, const std::vector<UnitEdge>& edges,
                             const std::vector<std::uint32_t>& seeds, bool reverse) {
  std::vector<std::vector<std::uint32_t>> adj(units);
  for (const UnitEdge& e : edges) {
    if (reverse) {
      adj[e.to].push_back(e.from);
    } else {
      adj[e.from].push_back(e.to);
    }
  }
  std::vector<bool> seen(units, false);
  std::deque<std::uint32_t> queue;
  for (auto s : seeds) {
    if (!seen[s]) {
      seen[s] = true;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (auto v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        queue.push_back(v);
      }
    }
  }
  return seen;
}

} // namespace detail

inline ConnectivityReport oracle_effective(const ArchGraph& arch, const MaskSet& mask,
                                           std::uint64_t max_units = kDefaultOracleUnitBound) {
  check_shapes(arch, mask, "mask");
  if (arch.total_units() > max_units) {
    throw Error("oracle size bound exceeded: " + std::to_string(arch.total_units()) + " units > " +
                std::to_string(max_units));
  }
  std::vector<std::uint32_t> base(arch.size());
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    base[i] = next;
    next += static_cast<std::uint32_t>(arch.shape(i).units());
  }
  const std::size_t units = next;

  std::vector<detail::UnitEdge> edges;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const LayerNode& node = arch.node(i);
    const Shape& os = arch.shape(i);
    switch (node.kind) {
      case LayerKind::kInput:
        break;
      case LayerKind::kDense: {
        const std::size_t src = arch.predecessors(i)[0];
        const auto layer = static_cast<std::int32_t>(arch.layer_of_node(i));
        const auto n_in = static_cast<std::uint32_t>(arch.shape(src).units());
        const auto n_out = static_cast<std::uint32_t>(os.units());
        for (std::uint32_t a = 0; a < n_in; ++a) {
          for (std::uint32_t b = 0; b < n_out; ++b) {
            const std::uint32_t param = b * n_in + a;
            if (mask[layer][param]) {
              edges.push_back({base[src] + a, base[i] + b, layer, param});
            }
          }
        }
        break;
      }
      case LayerKind::kConv2d: {
        const std::size_t src = arch.predecessors(i)[0];
        const Shape& is = arch.shape(src);
        const auto& c = node.conv();
        const auto layer = static_cast<std::int32_t>(arch.layer_of_node(i));
        const std::int64_t cin_g = c.in_channels / c.groups;
        const std::int64_t cout_g = c.out_channels / c.groups;
        for (std::int64_t y = 0; y < os.height; ++y) {
          for (std::int64_t x = 0; x < os.width; ++x) {
            for (std::int64_t co = 0; co < c.out_channels; ++co) {
              const auto dst = base[i] + static_cast<std::uint32_t>((co * os.height + y) * os.width + x);
              for (std::int64_t r = 0; r < c.kernel_h; ++r) {
                const std::int64_t sy = y * c.stride + r - c.padding;
                if (sy < 0 || sy >= is.height) continue;
                for (std::int64_t t = 0; t < c.kernel_w; ++t) {
                  const std::int64_t sx = x * c.stride + t - c.padding;
                  if (sx < 0 || sx >= is.width) continue;
                  for (std::int64_t k = 0; k < cin_g; ++k) {
                    const std::int64_t ci = (co / cout_g) * cin_g + k;
                    const auto param = static_cast<std::uint32_t>(
                        ((co * cin_g + k) * c.kernel_h + r) * c.kernel_w + t);
                    if (!mask[layer][param]) continue;
                    const auto from =
                        base[src] + static_cast<std::uint32_t>((ci * is.height + sy) * is.width + sx);
                    edges.push_back({from, dst, layer, param});
                  }
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::kPool2d: {
        const std::size_t src = arch.predecessors(i)[0];
        const Shape& is = arch.shape(src);
        const auto& p = node.pool();
        for (std::int64_t ch = 0; ch < os.channels; ++ch) {
          for (std::int64_t y = 0; y < os.height; ++y) {
            for (std::int64_t x = 0; x < os.width; ++x) {
              const auto dst = base[i] + static_cast<std::uint32_t>((ch * os.height + y) * os.width + x);
              for (std::int64_t sy = y * p.stride - p.padding; sy < y * p.stride - p.padding + p.window; ++sy) {
                for (std::int64_t sx = x * p.stride - p.padding; sx < x * p.stride - p.padding + p.window; ++sx) {
                  if (sy < 0 || sy >= is.height || sx < 0 || sx >= is.width) continue;
                  edges.push_back({base[src] + static_cast<std::uint32_t>((ch * is.height + sy) * is.width + sx),
                                   dst, -1, 0});
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::kFlatten:
      case LayerKind::kAdd:
      case LayerKind::kOutput:
        for (std::size_t src : arch.predecessors(i)) {
          for (std::uint32_t u = 0; u < static_cast<std::uint32_t>(os.units()); ++u) {
            edges.push_back({base[src] + u, base[i] + u, -1, 0});
          }
        }
        break;
    }
  }

  std::vector<std::uint32_t> sources;
  const std::size_t in_node = arch.input_index();
  for (std::uint32_t u = 0; u < arch.shape(in_node).units(); ++u) sources.push_back(base[in_node] + u);
  std::vector<std::uint32_t> sinks;
  const std::size_t out_node = arch.output_index();
  for (std::uint32_t u = 0; u < arch.shape(out_node).units(); ++u) sinks.push_back(base[out_node] + u);

  const auto from_input = detail::bfs(units, edges, sources, false);
  const auto to_output = detail::bfs(units, edges, sinks, true);

  MaskSet active = filled_like<MaskSet>(arch, 0);
  for (const detail::UnitEdge& e : edges) {
    if (e.layer >= 0 && from_input[e.from] && to_output[e.to]) {
      active[static_cast<std::size_t>(e.layer)][e.param] = 1;
    }
  }
  return report_from_activity(arch, mask, active);
}

} // namespace prunelens
