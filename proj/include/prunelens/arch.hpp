#pragma once

// Layer DAGs with exact unit-level shapes.
//
// An ArchGraph is validated on construction and immutable afterwards. Nodes are
// stored in topological order; the prunable layers (dense and conv2d nodes) are
// indexed 0..L-1 in that order and carry weight tensors laid out row-major as
// (out, in) for dense and (out, in / groups, kernel_h, kernel_w) for conv2d.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "prunelens/error.hpp"

namespace prunelens {

enum class LayerKind { kInput, kDense, kConv2d, kPool2d, kFlatten, kAdd, kOutput };
enum class PoolMode { kMax, kAvg };

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kInput: return "input";
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kPool2d: return "pool2d";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kAdd: return "add";
    case LayerKind::kOutput: return "output";
  }
  return "unknown";
}

inline std::string_view to_string(PoolMode mode) { return mode == PoolMode::kMax ? "max" : "avg"; }

// Activation tensor shape. Flat tensors use height = width = 1.
struct Shape {
  std::int64_t channels = 0;
  std::int64_t height = 1;
  std::int64_t width = 1;

  std::int64_t units() const { return channels * height * width; }
  std::int64_t plane() const { return height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream out;
  out << s.channels << "x" << s.height << "x" << s.width;
  return out.str();
}

struct InputSpec {
  std::int64_t channels = 0;
  std::int64_t height = 1;
  std::int64_t width = 1;
  bool flat = false;  // declared as `units` rather than channels/height/width
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct DenseSpec {
  std::int64_t in_units = 0;
  std::int64_t out_units = 0;
  friend bool operator==(const DenseSpec&, const DenseSpec&) = default;
};

struct Conv2dSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t groups = 1;
  friend bool operator==(const Conv2dSpec&, const Conv2dSpec&) = default;
};

struct Pool2dSpec {
  std::int64_t window = 2;
  std::int64_t stride = 2;
  std::int64_t padding = 0;
  PoolMode mode = PoolMode::kMax;
  friend bool operator==(const Pool2dSpec&, const Pool2dSpec&) = default;
};

using LayerParams = std::variant<std::monostate, InputSpec, DenseSpec, Conv2dSpec, Pool2dSpec>;

struct LayerNode {
  std::string id;
  LayerKind kind = LayerKind::kInput;
  std::vector<std::string> inputs;
  LayerParams params;

  const InputSpec& input() const { return std::get<InputSpec>(params); }
  const DenseSpec& dense() const { return std::get<DenseSpec>(params); }
  const Conv2dSpec& conv() const { return std::get<Conv2dSpec>(params); }
  const Pool2dSpec& pool() const { return std::get<Pool2dSpec>(params); }

  friend bool operator==(const LayerNode&, const LayerNode&) = default;
};

// Output extent of a sliding window along one axis, or 0 if the window never fits.
inline std::int64_t window_extent(std::int64_t size, std::int64_t window, std::int64_t stride,
                                  std::int64_t padding) {
  const std::int64_t span = size + 2 * padding - window;
  return span < 0 ? 0 : span / stride + 1;
}

class ArchGraph {
public:
  ArchGraph() = default;

  // Validates `nodes` and builds the graph. Nodes may be listed in any order that
  // admits a topological sort; ties keep the listed order.
  ArchGraph(std::string name, std::vector<LayerNode> nodes) : name_(std::move(name)) {
    build(std::move(nodes));
  }

  const std::string& name() const { return name_; }
  const std::vector<LayerNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  const LayerNode& node(std::size_t i) const { return nodes_[i]; }
  const Shape& shape(std::size_t i) const { return shapes_[i]; }
  const std::vector<std::size_t>& predecessors(std::size_t i) const { return preds_[i]; }
  const std::vector<std::size_t>& consumers(std::size_t i) const { return consumers_[i]; }
  std::size_t input_index() const { return input_; }
  std::size_t output_index() const { return output_; }

  std::size_t index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) {
      throw ValidationError("unknown node id '" + std::string(id) + "'");
    }
    return it->second;
  }

  // Prunable layers (dense and conv2d), in topological order.
  std::size_t num_layers() const { return prunable_.size(); }
  std::size_t layer_node(std::size_t layer) const { return prunable_[layer]; }
  const std::string& layer_id(std::size_t layer) const { return nodes_[prunable_[layer]].id; }
  const std::vector<std::uint64_t>& param_counts() const { return param_counts_; }
  std::uint64_t total_params() const { return total_params_; }
  const std::vector<std::uint32_t>& weight_dims(std::size_t layer) const {
    return weight_dims_[layer];
  }

  // Returns the prunable-layer index of node `i`, or -1.
  std::ptrdiff_t layer_of_node(std::size_t i) const { return layer_of_node_[i]; }

  std::vector<std::uint64_t> unit_counts() const {
    std::vector<std::uint64_t> counts;
    counts.reserve(shapes_.size());
    for (const auto& s : shapes_) {
      counts.push_back(static_cast<std::uint64_t>(s.units()));
    }
    return counts;
  }

  std::uint64_t total_units() const {
    std::uint64_t total = 0;
    for (const auto& s : shapes_) {
      total += static_cast<std::uint64_t>(s.units());
    }
    return total;
  }

  bool has_add_nodes() const {
    return std::any_of(nodes_.begin(), nodes_.end(),
                       [](const LayerNode& n) { return n.kind == LayerKind::kAdd; });
  }

  friend bool operator==(const ArchGraph& a, const ArchGraph& b) {
    return a.name_ == b.name_ && a.nodes_ == b.nodes_;
  }

private:
  [[noreturn]] static void fail(const std::string& id, const std::string& what) {
    throw ValidationError("node '" + id + "': " + what);
  }

  void build(std::vector<LayerNode> listed) {
    if (listed.empty()) {
      throw ValidationError("architecture has no nodes");
    }
    std::unordered_map<std::string, std::size_t> listed_index;
    for (std::size_t i = 0; i < listed.size(); ++i) {
      if (listed[i].id.empty()) {
        throw ValidationError("node #" + std::to_string(i) + " has an empty id");
      }
      if (!listed_index.emplace(listed[i].id, i).second) {
        fail(listed[i].id, "duplicate id");
      }
    }
    sort_topologically(listed, listed_index);

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      index_.emplace(nodes_[i].id, i);
    }
    const std::size_t n = nodes_.size();
    preds_.assign(n, {});
    consumers_.assign(n, {});
    shapes_.assign(n, Shape{});
    layer_of_node_.assign(n, -1);

    bool have_input = false;
    bool have_output = false;
    for (std::size_t i = 0; i < n; ++i) {
      const LayerNode& node = nodes_[i];
      for (const auto& in : node.inputs) {
        const std::size_t p = index_.at(in);
        preds_[i].push_back(p);
        consumers_[p].push_back(i);
      }
      if (node.kind == LayerKind::kInput) {
        if (have_input) fail(node.id, "second input node");
        have_input = true;
        input_ = i;
      }
      if (node.kind == LayerKind::kOutput) {
        if (have_output) fail(node.id, "second output node");
        have_output = true;
        output_ = i;
      }
      shapes_[i] = infer_shape(i);
    }
    if (!have_input) throw ValidationError("architecture has no input node");
    if (!have_output) throw ValidationError("architecture has no output node");
    if (!consumers_[output_].empty()) fail(nodes_[output_].id, "output node has consumers");

    // Every node must lie on an input -> output path of the unmasked graph.
    std::vector<char> reaches_output(n, 0);
    reaches_output[output_] = 1;
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t c : consumers_[i]) {
        reaches_output[i] |= reaches_output[c];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!reaches_output[i]) fail(nodes_[i].id, "does not reach the output node");
    }

    for (std::size_t i = 0; i < n; ++i) {
      const LayerNode& node = nodes_[i];
      if (node.kind == LayerKind::kDense) {
        const auto& d = node.dense();
        add_layer(i, {static_cast<std::uint32_t>(d.out_units),
                      static_cast<std::uint32_t>(d.in_units)});
      } else if (node.kind == LayerKind::kConv2d) {
        const auto& c = node.conv();
        add_layer(i, {static_cast<std::uint32_t>(c.out_channels),
                      static_cast<std::uint32_t>(c.in_channels / c.groups),
                      static_cast<std::uint32_t>(c.kernel_h),
                      static_cast<std::uint32_t>(c.kernel_w)});
      }
    }
    if (total_params_ == 0) {
      throw ValidationError("architecture has no prunable parameters");
    }
  }

  void sort_topologically(std::vector<LayerNode>& listed,
                          const std::unordered_map<std::string, std::size_t>& listed_index) {
    const std::size_t n = listed.size();
    std::vector<std::size_t> pending(n, 0);
    std::vector<std::vector<std::size_t>> users(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& in : listed[i].inputs) {
        auto it = listed_index.find(in);
        if (it == listed_index.end()) {
          fail(listed[i].id, "dangling predecessor '" + in + "'");
        }
        if (it->second == i) fail(listed[i].id, "cycle: node lists itself as input");
        users[it->second].push_back(i);
        ++pending[i];
      }
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i) {
      if (pending[i] == 0) ready.push(i);
    }
    std::vector<std::size_t> order;
    order.reserve(n);
    while (!ready.empty()) {
      const std::size_t i = ready.top();
      ready.pop();
      order.push_back(i);
      for (std::size_t u : users[i]) {
        if (--pending[u] == 0) ready.push(u);
      }
    }
    if (order.size() != n) {
      for (std::size_t i = 0; i < n; ++i) {
        if (pending[i] != 0) fail(listed[i].id, "cycle detected");
      }
    }
    nodes_.reserve(n);
    for (std::size_t i : order) {
      nodes_.push_back(std::move(listed[i]));
    }
  }

  Shape infer_shape(std::size_t i) const {
    const LayerNode& node = nodes_[i];
    const auto& preds = preds_[i];
    auto require_params = [&](auto* tag) {
      using T = std::remove_pointer_t<decltype(tag)>;
      if (!std::holds_alternative<T>(node.params)) fail(node.id, "missing layer parameters");
    };
    auto require_single_input = [&] {
      if (preds.size() != 1) {
        fail(node.id, "expected exactly 1 input, got " + std::to_string(preds.size()));
      }
    };
    auto positive = [&](std::int64_t v, const char* field) {
      if (v <= 0) fail(node.id, std::string(field) + " must be positive");
    };

    switch (node.kind) {
      case LayerKind::kInput: {
        if (!preds.empty()) fail(node.id, "input node cannot have inputs");
        require_params(static_cast<InputSpec*>(nullptr));
        const auto& in = node.input();
        positive(in.channels, "channels");
        positive(in.height, "height");
        positive(in.width, "width");
        return {in.channels, in.height, in.width};
      }
      case LayerKind::kDense: {
        require_single_input();
        require_params(static_cast<DenseSpec*>(nullptr));
        const auto& d = node.dense();
        positive(d.in_units, "in_units");
        positive(d.out_units, "out_units");
        const Shape& src = shapes_[preds[0]];
        if (src.units() != d.in_units) {
          fail(node.id, "in_units=" + std::to_string(d.in_units) + " but predecessor '" +
                            nodes_[preds[0]].id + "' has " + std::to_string(src.units()) +
                            " units");
        }
        return {d.out_units, 1, 1};
      }
      case LayerKind::kConv2d: {
        require_single_input();
        require_params(static_cast<Conv2dSpec*>(nullptr));
        const auto& c = node.conv();
        positive(c.in_channels, "in_channels");
        positive(c.out_channels, "out_channels");
        positive(c.kernel_h, "kernel_h");
        positive(c.kernel_w, "kernel_w");
        positive(c.stride, "stride");
        positive(c.groups, "groups");
        if (c.padding < 0) fail(node.id, "padding must be non-negative");
        if (c.in_channels % c.groups != 0 || c.out_channels % c.groups != 0) {
          fail(node.id, "channels not divisible by groups");
        }
        const Shape& src = shapes_[preds[0]];
        if (src.channels != c.in_channels) {
          fail(node.id, "in_channels=" + std::to_string(c.in_channels) + " but predecessor '" +
                            nodes_[preds[0]].id + "' has shape " + to_string(src));
        }
        const auto h = window_extent(src.height, c.kernel_h, c.stride, c.padding);
        const auto w = window_extent(src.width, c.kernel_w, c.stride, c.padding);
        if (h <= 0 || w <= 0) fail(node.id, "kernel larger than padded input");
        return {c.out_channels, h, w};
      }
      case LayerKind::kPool2d: {
        require_single_input();
        require_params(static_cast<Pool2dSpec*>(nullptr));
        const auto& p = node.pool();
        positive(p.window, "window");
        positive(p.stride, "stride");
        if (p.padding < 0 || 2 * p.padding > p.window) {
          fail(node.id, "padding must be in [0, window/2]");
        }
        const Shape& src = shapes_[preds[0]];
        const auto h = window_extent(src.height, p.window, p.stride, p.padding);
        const auto w = window_extent(src.width, p.window, p.stride, p.padding);
        if (h <= 0 || w <= 0) fail(node.id, "window larger than padded input");
        return {src.channels, h, w};
      }
      case LayerKind::kFlatten: {
        require_single_input();
        return {shapes_[preds[0]].units(), 1, 1};
      }
      case LayerKind::kAdd: {
        if (preds.size() < 2) fail(node.id, "add node needs at least 2 inputs");
        const Shape& first = shapes_[preds[0]];
        for (std::size_t p : preds) {
          if (!(shapes_[p] == first)) {
            fail(node.id, "input shapes differ (" + to_string(first) + " vs " +
                              to_string(shapes_[p]) + " from '" + nodes_[p].id + "')");
          }
        }
        return first;
      }
      case LayerKind::kOutput: {
        require_single_input();
        return shapes_[preds[0]];
      }
    }
    fail(node.id, "unknown kind");
  }

  void add_layer(std::size_t node, std::vector<std::uint32_t> dims) {
    std::uint64_t count = 1;
    for (auto d : dims) count *= d;
    if (count > 0xFFFFFFFFull) fail(nodes_[node].id, "layer too large");
    layer_of_node_[node] = static_cast<std::ptrdiff_t>(prunable_.size());
    prunable_.push_back(node);
    param_counts_.push_back(count);
    weight_dims_.push_back(std::move(dims));
    total_params_ += count;
  }

  std::string name_;
  std::vector<LayerNode> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> preds_;
  std::vector<std::vector<std::size_t>> consumers_;
  std::vector<Shape> shapes_;
  std::vector<std::ptrdiff_t> layer_of_node_;
  std::vector<std::size_t> prunable_;
  std::vector<std::uint64_t> param_counts_;
  std::vector<std::vector<std::uint32_t>> weight_dims_;
  std::uint64_t total_params_ = 0;
  std::size_t input_ = 0;
  std::size_t output_ = 0;
};

// Fan-in and fan-out of a prunable layer's weight tensor, receptive field included.
struct Fans {
  double fan_in = 0;
  double fan_out = 0;
};

inline Fans layer_fans(const ArchGraph& arch, std::size_t layer) {
  const LayerNode& node = arch.node(arch.layer_node(layer));
  if (node.kind == LayerKind::kDense) {
    return {static_cast<double>(node.dense().in_units),
            static_cast<double>(node.dense().out_units)};
  }
  const auto& c = node.conv();
  const double field = static_cast<double>(c.kernel_h * c.kernel_w);
  return {static_cast<double>(c.in_channels / c.groups) * field,
          static_cast<double>(c.out_channels) * field};
}

} // namespace prunelens
