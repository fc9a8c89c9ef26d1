#pragma once

// Exact effective sparsity by unit-level reachability.
//
// fwd[u] is set when unit u is reachable from some input unit through
// unpruned parameters; bwd[u] when some output unit is reachable from u. A
// parameter is active iff it is unpruned and at least one of its application
// sites joins a fwd source unit to a bwd destination unit.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "prunelens/arch.hpp"
#include "prunelens/sites.hpp"
#include "prunelens/tensors.hpp"

namespace prunelens {

struct ReachState {
  std::vector<std::vector<std::uint8_t>> fwd;
  std::vector<std::vector<std::uint8_t>> bwd;
};

struct LayerActivity {
  std::string layer_id;
  std::uint64_t params = 0;
  std::uint64_t pruned = 0;
  std::uint64_t inactive_unpruned = 0;
  std::uint64_t active = 0;
  friend bool operator==(const LayerActivity&, const LayerActivity&) = default;
};

struct ConnectivityReport {
  std::vector<LayerActivity> layers;
  std::uint64_t total_params = 0;
  std::uint64_t total_pruned = 0;
  std::uint64_t total_inactive_unpruned = 0;
  std::uint64_t total_active = 0;

  SparsityCount direct() const { return {total_pruned, total_params}; }
  SparsityCount effective() const { return {total_params - total_active, total_params}; }
  double direct_sparsity() const { return direct().sparsity(); }
  double effective_sparsity() const { return effective().sparsity(); }
  double direct_compression() const { return direct().compression(); }
  double effective_compression() const { return effective().compression(); }
  bool disconnected() const { return total_active == 0; }

  friend bool operator==(const ConnectivityReport&, const ConnectivityReport&) = default;
};

namespace detail {

inline bool any_set(const std::uint8_t* p, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) {
    if (p[i]) return true;
  }
  return false;
}

inline bool all_set(const std::uint8_t* p, std::int64_t n) {
  std::uint8_t acc = 1;
  for (std::int64_t i = 0; i < n; ++i) acc &= p[i];
  return acc != 0;
}

inline void forward_node(const ArchGraph& arch, const MaskSet& mask, std::size_t i,
                         ReachState& st) {
  const LayerNode& node = arch.node(i);
  auto& out = st.fwd[i];
  const Shape& os = arch.shape(i);
  out.assign(static_cast<std::size_t>(os.units()), 0);
  if (node.kind == LayerKind::kInput) {
    out.assign(out.size(), 1);
    return;
  }
  const std::size_t src = arch.predecessors(i).front();
  const auto& in = st.fwd[src];
  const Shape& is = arch.shape(src);

  switch (node.kind) {
    case LayerKind::kDense: {
      const auto& m = mask[static_cast<std::size_t>(arch.layer_of_node(i))];
      const std::size_t n_in = in.size();
      for (std::size_t o = 0; o < out.size(); ++o) {
        const std::uint8_t* row = m.data() + o * n_in;
        for (std::size_t k = 0; k < n_in; ++k) {
          if (row[k] & in[k]) {
            out[o] = 1;
            break;
          }
        }
      }
      break;
    }
    case LayerKind::kConv2d: {
      const auto& c = node.conv();
      const auto& m = mask[static_cast<std::size_t>(arch.layer_of_node(i))];
      const std::int64_t in_per_group = c.in_channels / c.groups;
      const std::int64_t out_per_group = c.out_channels / c.groups;
      std::vector<char> channel_live(static_cast<std::size_t>(is.channels));
      for (std::int64_t ch = 0; ch < is.channels; ++ch) {
        channel_live[ch] = any_set(in.data() + ch * is.plane(), is.plane());
      }
      std::size_t w = 0;
      for (std::int64_t co = 0; co < c.out_channels; ++co) {
        std::uint8_t* dst = out.data() + co * os.plane();
        const std::int64_t group = co / out_per_group;
        const std::size_t per_channel = static_cast<std::size_t>(c.kernel_h * c.kernel_w);
        bool saturated = false;
        for (std::int64_t cl = 0; cl < in_per_group; ++cl, w += per_channel) {
          const std::int64_t ci = group * in_per_group + cl;
          if (saturated || !channel_live[ci]) continue;
          const std::uint8_t* plane = in.data() + ci * is.plane();
          bool touched = false;
          for (std::int64_t ky = 0; ky < c.kernel_h; ++ky) {
            for (std::int64_t kx = 0; kx < c.kernel_w; ++kx) {
              if (!m[w + static_cast<std::size_t>(ky * c.kernel_w + kx)]) continue;
              touched = true;
              const std::int64_t st = c.stride;
              for_each_row(is, os, ky, kx, st, c.padding,
                           [&](std::int64_t o, std::int64_t s, std::int64_t n) {
                             for (std::int64_t t = 0; t < n; ++t) dst[o + t] |= plane[s + st * t];
                             return false;
                           });
            }
          }
          if (touched) saturated = all_set(dst, os.plane());
        }
      }
      break;
    }
    case LayerKind::kPool2d: {
      const auto& p = node.pool();
      for (std::int64_t ch = 0; ch < os.channels; ++ch) {
        std::uint8_t* dst = out.data() + ch * os.plane();
        const std::uint8_t* plane = in.data() + ch * is.plane();
        for (std::int64_t ky = 0; ky < p.window; ++ky) {
          for (std::int64_t kx = 0; kx < p.window; ++kx) {
            const std::int64_t st = p.stride;
            for_each_row(is, os, ky, kx, st, p.padding, [&](std::int64_t o, std::int64_t s, std::int64_t n) {
              for (std::int64_t t = 0; t < n; ++t) dst[o + t] |= plane[s + st * t];
              return false;
            });
          }
        }
      }
      break;
    }
    case LayerKind::kAdd:
      for (std::size_t p : arch.predecessors(i)) {
        const auto& v = st.fwd[p];
        for (std::size_t u = 0; u < out.size(); ++u) out[u] |= v[u];
      }
      break;
    case LayerKind::kFlatten:
    case LayerKind::kOutput:
      out = in;
      break;
    case LayerKind::kInput:
      break;
  }
}

// Pushes bwd of node i into its predecessors.
inline void backward_node(const ArchGraph& arch, const MaskSet& mask, std::size_t i,
                          ReachState& st) {
  const LayerNode& node = arch.node(i);
  if (node.kind == LayerKind::kInput) return;
  const auto& out = st.bwd[i];
  const Shape& os = arch.shape(i);
  const std::size_t src = arch.predecessors(i).front();
  auto& in = st.bwd[src];
  const Shape& is = arch.shape(src);

  switch (node.kind) {
    case LayerKind::kDense: {
      const auto& m = mask[static_cast<std::size_t>(arch.layer_of_node(i))];
      const std::size_t n_in = in.size();
      for (std::size_t o = 0; o < out.size(); ++o) {
        if (!out[o]) continue;
        const std::uint8_t* row = m.data() + o * n_in;
        for (std::size_t k = 0; k < n_in; ++k) in[k] |= row[k];
      }
      break;
    }
    case LayerKind::kConv2d: {
      const auto& c = node.conv();
      const auto& m = mask[static_cast<std::size_t>(arch.layer_of_node(i))];
      const std::int64_t in_per_group = c.in_channels / c.groups;
      const std::int64_t out_per_group = c.out_channels / c.groups;
      const std::size_t per_channel = static_cast<std::size_t>(c.kernel_h * c.kernel_w);
      std::vector<char> in_full(static_cast<std::size_t>(is.channels));
      for (std::int64_t ci = 0; ci < is.channels; ++ci) {
        in_full[ci] = all_set(in.data() + ci * is.plane(), is.plane());
      }
      std::size_t w = 0;
      for (std::int64_t co = 0; co < c.out_channels; ++co) {
        const std::uint8_t* plane_out = out.data() + co * os.plane();
        const bool live = any_set(plane_out, os.plane());
        const std::int64_t group = co / out_per_group;
        for (std::int64_t cl = 0; cl < in_per_group; ++cl, w += per_channel) {
          const std::int64_t ci = group * in_per_group + cl;
          if (!live || in_full[ci]) continue;
          std::uint8_t* plane_in = in.data() + ci * is.plane();
          bool touched = false;
          for (std::int64_t ky = 0; ky < c.kernel_h; ++ky) {
            for (std::int64_t kx = 0; kx < c.kernel_w; ++kx) {
              if (!m[w + static_cast<std::size_t>(ky * c.kernel_w + kx)]) continue;
              touched = true;
              const std::int64_t st = c.stride;
              for_each_row(is, os, ky, kx, st, c.padding,
                           [&](std::int64_t o, std::int64_t s, std::int64_t n) {
                             for (std::int64_t t = 0; t < n; ++t) plane_in[s + st * t] |= plane_out[o + t];
                             return false;
                           });
            }
          }
          if (touched) in_full[ci] = all_set(plane_in, is.plane());
        }
      }
      break;
    }
    case LayerKind::kPool2d: {
      const auto& p = node.pool();
      for (std::int64_t ch = 0; ch < os.channels; ++ch) {
        const std::uint8_t* plane_out = out.data() + ch * os.plane();
        std::uint8_t* plane_in = in.data() + ch * is.plane();
        for (std::int64_t ky = 0; ky < p.window; ++ky) {
          for (std::int64_t kx = 0; kx < p.window; ++kx) {
            const std::int64_t st = p.stride;
            for_each_row(is, os, ky, kx, st, p.padding, [&](std::int64_t o, std::int64_t s, std::int64_t n) {
              for (std::int64_t t = 0; t < n; ++t) plane_in[s + st * t] |= plane_out[o + t];
              return false;
            });
          }
        }
      }
      break;
    }
    case LayerKind::kAdd:
      for (std::size_t p : arch.predecessors(i)) {
        auto& v = st.bwd[p];
        for (std::size_t u = 0; u < out.size(); ++u) v[u] |= out[u];
      }
      break;
    case LayerKind::kFlatten:
    case LayerKind::kOutput:
      for (std::size_t u = 0; u < out.size(); ++u) in[u] |= out[u];
      break;
    case LayerKind::kInput:
      break;
  }
}

} // namespace detail

inline ReachState reachability(const ArchGraph& arch, const MaskSet& mask) {
  check_shapes(arch, mask, "mask");
  ReachState st;
  const std::size_t n = arch.size();
  st.fwd.resize(n);
  st.bwd.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    detail::forward_node(arch, mask, i, st);
    st.bwd[i].assign(st.fwd[i].size(), 0);
  }
  st.bwd[arch.output_index()].assign(st.bwd[arch.output_index()].size(), 1);
  for (std::size_t i = n; i-- > 0;) {
    detail::backward_node(arch, mask, i, st);
  }
  return st;
}

// Per-parameter activity flags of every prunable layer.
inline MaskSet active_parameters(const ArchGraph& arch, const MaskSet& mask,
                                 const ReachState& st) {
  MaskSet active = filled_like<MaskSet>(arch, 0);
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const std::size_t i = arch.layer_node(l);
    const std::size_t src = arch.predecessors(i).front();
    const auto& fwd_in = st.fwd[src];
    const auto& bwd_out = st.bwd[i];
    const auto& m = mask[l];
    auto& a = active[l];
    const LayerNode& node = arch.node(i);
    if (node.kind == LayerKind::kDense) {
      const std::size_t n_in = fwd_in.size();
      for (std::size_t o = 0; o < bwd_out.size(); ++o) {
        if (!bwd_out[o]) continue;
        for (std::size_t k = 0; k < n_in; ++k) {
          a[o * n_in + k] = m[o * n_in + k] & fwd_in[k];
        }
      }
      continue;
    }
    const auto& c = node.conv();
    const Shape& is = arch.shape(src);
    const Shape& os = arch.shape(i);
    const std::int64_t in_per_group = c.in_channels / c.groups;
    const std::int64_t out_per_group = c.out_channels / c.groups;
    std::size_t w = 0;
    for (std::int64_t co = 0; co < c.out_channels; ++co) {
      const std::uint8_t* plane_out = bwd_out.data() + co * os.plane();
      const std::int64_t group = co / out_per_group;
      for (std::int64_t cl = 0; cl < in_per_group; ++cl) {
        const std::uint8_t* plane_in = fwd_in.data() + (group * in_per_group + cl) * is.plane();
        for (std::int64_t ky = 0; ky < c.kernel_h; ++ky) {
          for (std::int64_t kx = 0; kx < c.kernel_w; ++kx, ++w) {
            if (!m[w]) continue;
            const std::int64_t st = c.stride;
            a[w] = detail::for_each_row(is, os, ky, kx, st, c.padding,
                                        [&](std::int64_t o, std::int64_t s, std::int64_t n) {
                                          std::uint8_t hit = 0;
                                          for (std::int64_t t = 0; t < n; ++t) {
                                            hit |= plane_in[s + st * t] & plane_out[o + t];
                                          }
                                          return hit != 0;
                                        });
          }
        }
      }
    }
  }
  return active;
}

inline ConnectivityReport report_from_activity(const ArchGraph& arch, const MaskSet& mask,
                                               const MaskSet& active) {
  ConnectivityReport r;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    LayerActivity la;
    la.layer_id = arch.layer_id(l);
    la.params = arch.param_counts()[l];
    const std::uint64_t kept = count_unpruned(mask[l]);
    la.pruned = la.params - kept;
    la.active = count_unpruned(active[l]);
    la.inactive_unpruned = kept - la.active;
    r.total_params += la.params;
    r.total_pruned += la.pruned;
    r.total_inactive_unpruned += la.inactive_unpruned;
    r.total_active += la.active;
    r.layers.push_back(std::move(la));
  }
  return r;
}

inline ConnectivityReport effective_report(const ArchGraph& arch, const MaskSet& mask) {
  const ReachState st = reachability(arch, mask);
  return report_from_activity(arch, mask, active_parameters(arch, mask, st));
}

inline double effective_sparsity(const ArchGraph& arch, const MaskSet& mask) {
  return effective_report(arch, mask).effective_sparsity();
}

// Prunes every unpruned-but-inactive parameter.
inline MaskSet remove_inactive(const ArchGraph& arch, const MaskSet& mask) {
  return active_parameters(arch, mask, reachability(arch, mask));
}

} // namespace prunelens
