#pragma once

// JSON architecture documents:
//
//   {"name": "...", "nodes": [{"id": "fc1", "kind": "dense", "inputs": ["in"],
//                              "in_units": 784, "out_units": 300}, ...]}
//
// Kind-specific fields: input (channels, height, width | units), dense (in_units,
// out_units), conv2d (in_channels, out_channels, kernel_h, kernel_w, stride,
// padding, groups), pool2d (window, stride, padding, mode = "max" | "avg").

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "prunelens/arch.hpp"

namespace prunelens {

namespace detail {

inline LayerKind parse_kind(const std::string& id, const std::string& kind) {
  if (kind == "input") return LayerKind::kInput;
  if (kind == "dense") return LayerKind::kDense;
  if (kind == "conv2d") return LayerKind::kConv2d;
  if (kind == "pool2d") return LayerKind::kPool2d;
  if (kind == "flatten") return LayerKind::kFlatten;
  if (kind == "add") return LayerKind::kAdd;
  if (kind == "output") return LayerKind::kOutput;
  throw ParseError("node '" + id + "': unknown kind '" + kind + "'");
}

inline std::int64_t int_field(const nlohmann::json& obj, const std::string& id, const char* key,
                              std::optional<std::int64_t> fallback = std::nullopt) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (fallback) return *fallback;
    throw ParseError("node '" + id + "': missing integer field '" + key + "'");
  }
  if (!it->is_number_integer()) {
    throw ParseError("node '" + id + "': field '" + key + "' must be an integer");
  }
  return it->get<std::int64_t>();
}

inline LayerNode parse_node(const nlohmann::json& obj, std::size_t position) {
  if (!obj.is_object()) {
    throw ParseError("nodes[" + std::to_string(position) + "] is not an object");
  }
  auto id_it = obj.find("id");
  if (id_it == obj.end() || !id_it->is_string()) {
    throw ParseError("nodes[" + std::to_string(position) + "] has no string 'id'");
  }
  LayerNode node;
  node.id = id_it->get<std::string>();
  auto kind_it = obj.find("kind");
  if (kind_it == obj.end() || !kind_it->is_string()) {
    throw ParseError("node '" + node.id + "': missing string field 'kind'");
  }
  node.kind = parse_kind(node.id, kind_it->get<std::string>());
  if (auto in = obj.find("inputs"); in != obj.end()) {
    if (!in->is_array()) throw ParseError("node '" + node.id + "': 'inputs' must be an array");
    for (const auto& v : *in) {
      if (!v.is_string()) {
        throw ParseError("node '" + node.id + "': 'inputs' entries must be strings");
      }
      node.inputs.push_back(v.get<std::string>());
    }
  }

  switch (node.kind) {
    case LayerKind::kInput:
      if (obj.contains("units")) {
        node.params = InputSpec{int_field(obj, node.id, "units"), 1, 1, true};
      } else {
        node.params = InputSpec{int_field(obj, node.id, "channels"),
                                int_field(obj, node.id, "height"),
                                int_field(obj, node.id, "width"), false};
      }
      break;
    case LayerKind::kDense:
      node.params = DenseSpec{int_field(obj, node.id, "in_units"),
                              int_field(obj, node.id, "out_units")};
      break;
    case LayerKind::kConv2d: {
      Conv2dSpec c;
      c.in_channels = int_field(obj, node.id, "in_channels");
      c.out_channels = int_field(obj, node.id, "out_channels");
      c.kernel_h = int_field(obj, node.id, "kernel_h");
      c.kernel_w = int_field(obj, node.id, "kernel_w");
      c.stride = int_field(obj, node.id, "stride", 1);
      c.padding = int_field(obj, node.id, "padding", 0);
      c.groups = int_field(obj, node.id, "groups", 1);
      node.params = c;
      break;
    }
    case LayerKind::kPool2d: {
      Pool2dSpec p;
      p.window = int_field(obj, node.id, "window");
      p.stride = int_field(obj, node.id, "stride", p.window);
      p.padding = int_field(obj, node.id, "padding", 0);
      std::string mode = "max";
      if (auto m = obj.find("mode"); m != obj.end()) {
        if (!m->is_string()) throw ParseError("node '" + node.id + "': 'mode' must be a string");
        mode = m->get<std::string>();
      }
      if (mode == "max") {
        p.mode = PoolMode::kMax;
      } else if (mode == "avg") {
        p.mode = PoolMode::kAvg;
      } else {
        throw ParseError("node '" + node.id + "': unknown pool mode '" + mode + "'");
      }
      node.params = p;
      break;
    }
    default:
      break;
  }
  return node;
}

} // namespace detail

inline ArchGraph parse_arch_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("architecture document must be a JSON object");
  std::string name = "unnamed";
  if (auto it = doc.find("name"); it != doc.end()) {
    if (!it->is_string()) throw ParseError("'name' must be a string");
    name = it->get<std::string>();
  }
  auto nodes_it = doc.find("nodes");
  if (nodes_it == doc.end() || !nodes_it->is_array()) {
    throw ParseError("architecture document needs a 'nodes' array");
  }
  std::vector<LayerNode> nodes;
  nodes.reserve(nodes_it->size());
  for (std::size_t i = 0; i < nodes_it->size(); ++i) {
    nodes.push_back(detail::parse_node((*nodes_it)[i], i));
  }
  return ArchGraph(std::move(name), std::move(nodes));
}

inline ArchGraph parse_arch(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed architecture JSON: ") + e.what());
  }
  return parse_arch_json(doc);
}

inline ArchGraph load_arch_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open architecture file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_arch(buffer.str());
}

inline nlohmann::json arch_to_json(const ArchGraph& arch) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const LayerNode& node : arch.nodes()) {
    nlohmann::json obj;
    obj["id"] = node.id;
    obj["kind"] = std::string(to_string(node.kind));
    obj["inputs"] = node.inputs;
    switch (node.kind) {
      case LayerKind::kInput: {
        const auto& in = node.input();
        if (in.flat) {
          obj["units"] = in.channels;
        } else {
          obj["channels"] = in.channels;
          obj["height"] = in.height;
          obj["width"] = in.width;
        }
        break;
      }
      case LayerKind::kDense:
        obj["in_units"] = node.dense().in_units;
        obj["out_units"] = node.dense().out_units;
        break;
      case LayerKind::kConv2d: {
        const auto& c = node.conv();
        obj["in_channels"] = c.in_channels;
        obj["out_channels"] = c.out_channels;
        obj["kernel_h"] = c.kernel_h;
        obj["kernel_w"] = c.kernel_w;
        obj["stride"] = c.stride;
        obj["padding"] = c.padding;
        obj["groups"] = c.groups;
        break;
      }
      case LayerKind::kPool2d: {
        const auto& p = node.pool();
        obj["window"] = p.window;
        obj["stride"] = p.stride;
        obj["padding"] = p.padding;
        obj["mode"] = std::string(to_string(p.mode));
        break;
      }
      default:
        break;
    }
    nodes.push_back(std::move(obj));
  }
  return {{"name", arch.name()}, {"nodes", std::move(nodes)}};
}

inline std::string serialize_arch(const ArchGraph& arch) { return arch_to_json(arch).dump(1); }

} // namespace prunelens
