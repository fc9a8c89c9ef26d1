#pragma once

// SynFlow path-norm scores.
//
// The network is linearized: weights replaced by |w| * mask, activations,
// biases and normalization dropped, pooling replaced by an unscaled window sum
// and add nodes by a sum. With an all-ones input, R = sum of outputs and the
// score of parameter w is |dR/dw * w|, i.e. its l1 path norm. Scores are
// reported as logs. A score is zero (log = -inf) iff the parameter lies on no
// input-output path: the fast linear pass is checked against structural
// activity and replaced by a log-sum-exp pass whenever it underflows.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "prunelens/arch.hpp"
#include "prunelens/connectivity.hpp"
#include "prunelens/sites.hpp"
#include "prunelens/error.hpp"
#include "prunelens/tensors.hpp"

namespace prunelens {

struct LogScoreTag {};
// Natural-log scores; -inf encodes a zero score.
using LogScoreSet = LayerTensors<double, LogScoreTag>;

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Streaming log-sum-exp with a fixed accumulation order.
struct LogSum {
  double max = kNegInf;
  double scaled = 0.0;

  void add(double x) {
    if (x == kNegInf) return;
    if (x <= max) {
      scaled += std::exp(x - max);
    } else {
      scaled = scaled * std::exp(max - x) + 1.0;
      max = x;
    }
  }
  double value() const { return max == kNegInf ? kNegInf : max + std::log(scaled); }
};

inline double log_abs(double w) { return w == 0.0 ? kNegInf : std::log(std::abs(w)); }

template <typename F>
void conv_sites(const Shape& in, const Shape& out, const Conv2dSpec& c, F&& f) {
  // f(weight flat index, out unit, in unit)
  const std::int64_t in_per_group = c.in_channels / c.groups;
  const std::int64_t out_per_group = c.out_channels / c.groups;
  std::size_t w = 0;
  for (std::int64_t co = 0; co < c.out_channels; ++co) {
    const std::int64_t group = co / out_per_group;
    for (std::int64_t cl = 0; cl < in_per_group; ++cl) {
      const std::int64_t ci = group * in_per_group + cl;
      for (std::int64_t ky = 0; ky < c.kernel_h; ++ky) {
        for (std::int64_t kx = 0; kx < c.kernel_w; ++kx, ++w) {
          for (std::int64_t oy = 0; oy < out.height; ++oy) {
            const std::int64_t iy = oy * c.stride - c.padding + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (std::int64_t ox = 0; ox < out.width; ++ox) {
              const std::int64_t ix = ox * c.stride - c.padding + kx;
              if (ix < 0 || ix >= in.width) continue;
              f(w, (co * out.height + oy) * out.width + ox, (ci * in.height + iy) * in.width + ix);
            }
          }
        }
      }
    }
  }
}

template <typename F>
void pool_sites(const Shape& in, const Shape& out, const Pool2dSpec& p, F&& f) {
  for (std::int64_t ch = 0; ch < out.channels; ++ch) {
    for (std::int64_t oy = 0; oy < out.height; ++oy) {
      for (std::int64_t ox = 0; ox < out.width; ++ox) {
        for (std::int64_t ky = 0; ky < p.window; ++ky) {
          const std::int64_t iy = oy * p.stride - p.padding + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (std::int64_t kx = 0; kx < p.window; ++kx) {
            const std::int64_t ix = ox * p.stride - p.padding + kx;
            if (ix < 0 || ix >= in.width) continue;
            f((ch * out.height + oy) * out.width + ox, (ch * in.height + iy) * in.width + ix);
          }
        }
      }
    }
  }
}

inline double finish_checked(const LogSum& acc) {
  const double v = acc.value();
  if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
    throw NumericError("non-finite value in SynFlow pass");
  }
  return v;
}

} // namespace detail

namespace detail {

inline void check_weights_finite(const ArchGraph& arch, const WeightSet& weights) {
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    for (double v : weights[l]) {
      if (!std::isfinite(v)) throw NumericError("non-finite weight in layer '" + arch.layer_id(l) + "'");
    }
  }
}

// Log-sum-exp at every site: exact positivity at any dynamic range, slow.
inline LogScoreSet synflow_log_domain(const ArchGraph& arch, const WeightSet& weights,
                                      const MaskSet& mask) {
  LogScoreSet log_w;
  log_w.layers.resize(arch.num_layers());
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    auto& lw = log_w[l];
    lw.resize(weights[l].size());
    for (std::size_t k = 0; k < lw.size(); ++k) {
      if (!std::isfinite(weights[l][k])) {
        throw NumericError("non-finite weight in layer '" + arch.layer_id(l) + "'");
      }
      lw[k] = mask[l][k] ? detail::log_abs(weights[l][k]) : detail::kNegInf;
    }
  }

  const std::size_t n = arch.size();
  std::vector<std::vector<double>> act(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LayerNode& node = arch.node(i);
    const auto units = static_cast<std::size_t>(arch.shape(i).units());
    if (node.kind == LayerKind::kInput) {
      act[i].assign(units, 0.0);
      continue;
    }
    std::vector<LogSum> acc(units);
    const std::size_t src = arch.predecessors(i).front();
    const auto& a_in = act[src];
    switch (node.kind) {
      case LayerKind::kDense: {
        const auto& lw = log_w[static_cast<std::size_t>(arch.layer_of_node(i))];
        const std::size_t n_in = a_in.size();
        for (std::size_t o = 0; o < units; ++o) {
          for (std::size_t k = 0; k < n_in; ++k) acc[o].add(lw[o * n_in + k] + a_in[k]);
        }
        break;
      }
      case LayerKind::kConv2d: {
        const auto& lw = log_w[static_cast<std::size_t>(arch.layer_of_node(i))];
        detail::conv_sites(arch.shape(src), arch.shape(i), node.conv(),
                           [&](std::size_t w, std::int64_t o, std::int64_t s) {
                             if (lw[w] != detail::kNegInf) acc[o].add(lw[w] + a_in[s]);
                           });
        break;
      }
      case LayerKind::kPool2d:
        detail::pool_sites(arch.shape(src), arch.shape(i), node.pool(),
                           [&](std::int64_t o, std::int64_t s) { acc[o].add(a_in[s]); });
        break;
      case LayerKind::kAdd:
        for (std::size_t p : arch.predecessors(i)) {
          for (std::size_t u = 0; u < units; ++u) acc[u].add(act[p][u]);
        }
        break;
      default:
        for (std::size_t u = 0; u < units; ++u) acc[u].add(a_in[u]);
        break;
    }
    act[i].resize(units);
    for (std::size_t u = 0; u < units; ++u) act[i][u] = detail::finish_checked(acc[u]);
  }

  // Backward: grad[i] = log dR/d(activation of i), accumulated from consumers.
  std::vector<std::vector<LogSum>> grad_acc(n);
  for (std::size_t i = 0; i < n; ++i) grad_acc[i].resize(act[i].size());
  for (auto& g : grad_acc[arch.output_index()]) g.add(0.0);
  std::vector<std::vector<double>> grad(n);

  LogScoreSet scores;
  scores.layers.resize(arch.num_layers());
  for (std::size_t i = n; i-- > 0;) {
    const LayerNode& node = arch.node(i);
    auto& g = grad[i];
    g.resize(act[i].size());
    for (std::size_t u = 0; u < g.size(); ++u) g[u] = detail::finish_checked(grad_acc[i][u]);
    if (node.kind == LayerKind::kInput) continue;
    const std::size_t src = arch.predecessors(i).front();
    auto& g_in = grad_acc[src];
    switch (node.kind) {
      case LayerKind::kDense: {
        const std::size_t l = static_cast<std::size_t>(arch.layer_of_node(i));
        const auto& lw = log_w[l];
        const auto& a_in = act[src];
        auto& sc = scores[l];
        sc.assign(lw.size(), detail::kNegInf);
        const std::size_t n_in = a_in.size();
        for (std::size_t o = 0; o < g.size(); ++o) {
          for (std::size_t k = 0; k < n_in; ++k) {
            const double lwk = lw[o * n_in + k];
            if (lwk == detail::kNegInf) continue;
            g_in[k].add(lwk + g[o]);
            sc[o * n_in + k] = lwk + a_in[k] + g[o];
          }
        }
        break;
      }
      case LayerKind::kConv2d: {
        const std::size_t l = static_cast<std::size_t>(arch.layer_of_node(i));
        const auto& lw = log_w[l];
        const auto& a_in = act[src];
        std::vector<LogSum> site_sum(lw.size());
        detail::conv_sites(arch.shape(src), arch.shape(i), node.conv(),
                           [&](std::size_t w, std::int64_t o, std::int64_t s) {
                             if (lw[w] == detail::kNegInf) return;
                             g_in[s].add(lw[w] + g[o]);
                             site_sum[w].add(a_in[s] + g[o]);
                           });
        auto& sc = scores[l];
        sc.assign(lw.size(), detail::kNegInf);
        for (std::size_t w = 0; w < lw.size(); ++w) {
          if (lw[w] != detail::kNegInf) sc[w] = lw[w] + detail::finish_checked(site_sum[w]);
        }
        break;
      }
      case LayerKind::kPool2d:
        detail::pool_sites(arch.shape(src), arch.shape(i), node.pool(),
                           [&](std::int64_t o, std::int64_t s) { g_in[s].add(g[o]); });
        break;
      case LayerKind::kAdd:
        for (std::size_t p : arch.predecessors(i)) {
          for (std::size_t u = 0; u < g.size(); ++u) grad_acc[p][u].add(g[u]);
        }
        break;
      default:
        for (std::size_t u = 0; u < g.size(); ++u) g_in[u].add(g[u]);
        break;
    }
  }
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    for (double v : scores[l]) {
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw NumericError("non-finite SynFlow score in layer '" + arch.layer_id(l) + "'");
      }
    }
  }
  return scores;
}

// A tensor stored as v * 2^exp with max |v| in [0.5, 1).
struct Scaled {
  std::vector<double> v;
  int exp = 0;
};

inline void normalize(Scaled& x) {
  double hi = 0.0;
  for (double v : x.v) hi = std::max(hi, v);
  if (hi == 0.0 || !std::isfinite(hi)) return;
  int e = 0;
  std::frexp(hi, &e);
  const double f = std::ldexp(1.0, -e);
  for (double& v : x.v) v *= f;
  x.exp += e;
}

inline void accumulate(std::optional<Scaled>& acc, Scaled&& c) {
  if (!acc) {
    acc = std::move(c);
    return;
  }
  const int e = std::max(acc->exp, c.exp);
  const double fa = std::ldexp(1.0, acc->exp - e);
  const double fc = std::ldexp(1.0, c.exp - e);
  for (std::size_t u = 0; u < c.v.size(); ++u) acc->v[u] = acc->v[u] * fa + c.v[u] * fc;
  acc->exp = e;
}

inline std::vector<double> logs_of(const Scaled& x) {
  const double shift = x.exp * std::numbers::ln2;
  std::vector<double> out(x.v.size());
  for (std::size_t u = 0; u < out.size(); ++u) out[u] = x.v[u] > 0.0 ? std::log(x.v[u]) + shift : kNegInf;
  return out;
}

// Linear arithmetic with power-of-two rescaling after every node. Returns
// nothing if the result cannot be trusted: a non-finite value, or a score
// whose positivity disagrees with structural activity (underflow).
inline std::optional<LogScoreSet> synflow_linear(const ArchGraph& arch, const WeightSet& weights,
                                                 const MaskSet& mask) {
  const std::size_t n = arch.size();
  LayerTensors<double, LogScoreTag> abs_w;
  abs_w.layers.resize(arch.num_layers());
  MaskSet live = mask;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    abs_w[l].resize(weights[l].size());
    for (std::size_t k = 0; k < abs_w[l].size(); ++k) {
      abs_w[l][k] = mask[l][k] ? std::abs(weights[l][k]) : 0.0;
      live[l][k] = abs_w[l][k] != 0.0;
    }
  }

  auto conv_rows = [&](std::size_t i, auto&& visit) {
    // visit(weight index, out plane, in plane, ky, kx)
    const auto& c = arch.node(i).conv();
    const std::int64_t in_per_group = c.in_channels / c.groups;
    const std::int64_t out_per_group = c.out_channels / c.groups;
    std::size_t w = 0;
    for (std::int64_t co = 0; co < c.out_channels; ++co) {
      const std::int64_t group = co / out_per_group;
      for (std::int64_t cl = 0; cl < in_per_group; ++cl) {
        for (std::int64_t ky = 0; ky < c.kernel_h; ++ky) {
          for (std::int64_t kx = 0; kx < c.kernel_w; ++kx, ++w) visit(w, co, group * in_per_group + cl, ky, kx);
        }
      }
    }
  };

  std::vector<Scaled> act(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LayerNode& node = arch.node(i);
    const Shape& os = arch.shape(i);
    Scaled& out = act[i];
    out.v.assign(static_cast<std::size_t>(os.units()), 0.0);
    if (node.kind == LayerKind::kInput) {
      std::fill(out.v.begin(), out.v.end(), 1.0);
      continue;
    }
    const std::size_t src = arch.predecessors(i).front();
    const Scaled& in = act[src];
    const Shape& is = arch.shape(src);
    out.exp = in.exp;
    switch (node.kind) {
      case LayerKind::kDense: {
        const auto& w = abs_w[static_cast<std::size_t>(arch.layer_of_node(i))];
        const std::size_t n_in = in.v.size();
        for (std::size_t o = 0; o < out.v.size(); ++o) {
          const double* row = w.data() + o * n_in;
          double sum = 0.0;
          for (std::size_t k = 0; k < n_in; ++k) sum += row[k] * in.v[k];
          out.v[o] = sum;
        }
        break;
      }
      case LayerKind::kConv2d: {
        const auto& w = abs_w[static_cast<std::size_t>(arch.layer_of_node(i))];
        const auto& c = node.conv();
        const std::int64_t st = c.stride;
        conv_rows(i, [&](std::size_t k, std::int64_t co, std::int64_t ci, std::int64_t ky, std::int64_t kx) {
          const double wk = w[k];
          if (wk == 0.0) return;
          double* dst = out.v.data() + co * os.plane();
          const double* plane = in.v.data() + ci * is.plane();
          for_each_row(is, os, ky, kx, st, c.padding, [&](std::int64_t o, std::int64_t s, std::int64_t cnt) {
            for (std::int64_t t = 0; t < cnt; ++t) dst[o + t] += wk * plane[s + st * t];
            return false;
          });
        });
        break;
      }
      case LayerKind::kPool2d: {
        const auto& p = node.pool();
        const std::int64_t st = p.stride;
        for (std::int64_t ch = 0; ch < os.channels; ++ch) {
          double* dst = out.v.data() + ch * os.plane();
          const double* plane = in.v.data() + ch * is.plane();
          for (std::int64_t ky = 0; ky < p.window; ++ky) {
            for (std::int64_t kx = 0; kx < p.window; ++kx) {
              for_each_row(is, os, ky, kx, st, p.padding, [&](std::int64_t o, std::int64_t s, std::int64_t cnt) {
                for (std::int64_t t = 0; t < cnt; ++t) dst[o + t] += plane[s + st * t];
                return false;
              });
            }
          }
        }
        break;
      }
      case LayerKind::kAdd: {
        std::optional<Scaled> acc;
        for (std::size_t p : arch.predecessors(i)) accumulate(acc, Scaled(act[p]));
        out = std::move(*acc);
        break;
      }
      default:
        out.v = in.v;
        break;
    }
    normalize(out);
  }

  std::vector<std::optional<Scaled>> grad_acc(n);
  grad_acc[arch.output_index()] = Scaled{std::vector<double>(act[arch.output_index()].v.size(), 1.0), 0};
  LogScoreSet scores;
  scores.layers.resize(arch.num_layers());
  for (std::size_t i = n; i-- > 0;) {
    const LayerNode& node = arch.node(i);
    if (node.kind == LayerKind::kInput) continue;
    Scaled g = grad_acc[i] ? std::move(*grad_acc[i]) : Scaled{std::vector<double>(act[i].v.size(), 0.0), 0};
    grad_acc[i].reset();
    normalize(g);
    const Shape& os = arch.shape(i);
    const std::size_t src = arch.predecessors(i).front();
    const Shape& is = arch.shape(src);
    const Scaled& a_in = act[src];
    Scaled c{std::vector<double>(a_in.v.size(), 0.0), g.exp};
    switch (node.kind) {
      case LayerKind::kDense: {
        const std::size_t l = static_cast<std::size_t>(arch.layer_of_node(i));
        const auto& w = abs_w[l];
        const std::vector<double> log_a = logs_of(a_in);
        const std::vector<double> log_g = logs_of(g);
        auto& sc = scores[l];
        sc.assign(w.size(), kNegInf);
        const std::size_t n_in = a_in.v.size();
        for (std::size_t o = 0; o < g.v.size(); ++o) {
          const double go = g.v[o];
          const double* row = w.data() + o * n_in;
          for (std::size_t k = 0; k < n_in; ++k) {
            c.v[k] += row[k] * go;
            if (row[k] != 0.0) sc[o * n_in + k] = std::log(row[k]) + log_a[k] + log_g[o];
          }
        }
        break;
      }
      case LayerKind::kConv2d: {
        const std::size_t l = static_cast<std::size_t>(arch.layer_of_node(i));
        const auto& w = abs_w[l];
        const auto& cv = node.conv();
        const std::int64_t st = cv.stride;
        auto& sc = scores[l];
        sc.assign(w.size(), kNegInf);
        const double shift = (a_in.exp + g.exp) * std::numbers::ln2;
        conv_rows(i, [&](std::size_t k, std::int64_t co, std::int64_t ci, std::int64_t ky, std::int64_t kx) {
          const double wk = w[k];
          if (wk == 0.0) return;
          const double* gp = g.v.data() + co * os.plane();
          const double* ap = a_in.v.data() + ci * is.plane();
          double* cp = c.v.data() + ci * is.plane();
          double site = 0.0;
          for_each_row(is, os, ky, kx, st, cv.padding, [&](std::int64_t o, std::int64_t s, std::int64_t cnt) {
            for (std::int64_t t = 0; t < cnt; ++t) {
              cp[s + st * t] += wk * gp[o + t];
              site += ap[s + st * t] * gp[o + t];
            }
            return false;
          });
          if (site > 0.0) sc[k] = std::log(wk) + std::log(site) + shift;
        });
        break;
      }
      case LayerKind::kPool2d: {
        const auto& p = node.pool();
        const std::int64_t st = p.stride;
        for (std::int64_t ch = 0; ch < os.channels; ++ch) {
          const double* gp = g.v.data() + ch * os.plane();
          double* cp = c.v.data() + ch * is.plane();
          for (std::int64_t ky = 0; ky < p.window; ++ky) {
            for (std::int64_t kx = 0; kx < p.window; ++kx) {
              for_each_row(is, os, ky, kx, st, p.padding, [&](std::int64_t o, std::int64_t s, std::int64_t cnt) {
                for (std::int64_t t = 0; t < cnt; ++t) cp[s + st * t] += gp[o + t];
                return false;
              });
            }
          }
        }
        break;
      }
      case LayerKind::kAdd:
        for (std::size_t p : arch.predecessors(i)) accumulate(grad_acc[p], Scaled(g));
        continue;
      default:
        c.v = g.v;
        break;
    }
    accumulate(grad_acc[src], std::move(c));
  }

  const MaskSet active = active_parameters(arch, live, reachability(arch, live));
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    for (std::size_t k = 0; k < scores[l].size(); ++k) {
      const double v = scores[l][k];
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) return std::nullopt;
      if ((v != kNegInf) != (active[l][k] != 0)) return std::nullopt;
    }
  }
  return scores;
}

} // namespace detail

// log of each parameter's SynFlow score, -inf where the score is zero.
inline LogScoreSet synflow_log_scores(const ArchGraph& arch, const WeightSet& weights,
                                      const MaskSet& mask) {
  check_shapes(arch, weights, "weights");
  check_shapes(arch, mask, "mask");
  detail::check_weights_finite(arch, weights);
  if (auto fast = detail::synflow_linear(arch, weights, mask)) return std::move(*fast);
  return detail::synflow_log_domain(arch, weights, mask);
}

// Linear-domain scores. Layers whose log scores fit comfortably in a double
// are reported unscaled (layer_log_scale = 0); otherwise the layer is divided
// by its largest score and the log of that divisor is recorded.
struct SynflowScores {
  ScoreSet scores;
  std::vector<double> layer_log_scale;
};

inline SynflowScores synflow_scores_scaled(const ArchGraph& arch, const WeightSet& weights,
                                           const MaskSet& mask) {
  constexpr double kSafeLog = 650.0;
  const LogScoreSet logs = synflow_log_scores(arch, weights, mask);
  SynflowScores out;
  out.scores.layers.resize(logs.num_layers());
  out.layer_log_scale.assign(logs.num_layers(), 0.0);
  for (std::size_t l = 0; l < logs.num_layers(); ++l) {
    double hi = detail::kNegInf;
    double lo = std::numeric_limits<double>::infinity();
    for (double v : logs[l]) {
      if (v == detail::kNegInf) continue;
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
    if (hi != detail::kNegInf && (hi > kSafeLog || lo < -kSafeLog)) out.layer_log_scale[l] = hi;
    auto& sc = out.scores[l];
    sc.resize(logs[l].size());
    for (std::size_t k = 0; k < sc.size(); ++k) {
      sc[k] = logs[l][k] == detail::kNegInf ? 0.0 : std::exp(logs[l][k] - out.layer_log_scale[l]);
    }
  }
  return out;
}

inline ScoreSet synflow_scores(const ArchGraph& arch, const WeightSet& weights,
                               const MaskSet& mask) {
  return synflow_scores_scaled(arch, weights, mask).scores;
}

} // namespace prunelens
