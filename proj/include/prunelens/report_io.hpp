#pragma once

// CSV and JSON renderings of connectivity reports and quota vectors.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunelens/arch.hpp"
#include "prunelens/connectivity.hpp"
#include "prunelens/lsq.hpp"

namespace prunelens {

// Fixed-precision number text shared by every CSV writer.
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string join_csv(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k) line += ',';
    line += csv_field(fields[k]);
  }
  return line + '\n';
}

inline nlohmann::json json_number(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json report_to_json(const ConnectivityReport& r) {
  nlohmann::json ids = nlohmann::json::array(), params = ids, pruned = ids, inactive = ids,
                 active = ids;
  for (const LayerActivity& la : r.layers) {
    ids.push_back(la.layer_id);
    params.push_back(la.params);
    pruned.push_back(la.pruned);
    inactive.push_back(la.inactive_unpruned);
    active.push_back(la.active);
  }
  return {{"total_params", r.total_params},
          {"total_pruned", r.total_pruned},
          {"total_inactive_unpruned", r.total_inactive_unpruned},
          {"total_active", r.total_active},
          {"direct_sparsity", r.direct_sparsity()},
          {"effective_sparsity", r.effective_sparsity()},
          {"direct_compression", json_number(r.direct_compression())},
          {"effective_compression", json_number(r.effective_compression())},
          {"disconnected", r.disconnected()},
          {"layers",
           {{"layer_id", ids},
            {"params", params},
            {"pruned", pruned},
            {"inactive_unpruned", inactive},
            {"active", active}}}};
}

inline const std::vector<std::string>& layer_csv_header() {
  static const std::vector<std::string> h = {"arch",   "method", "seed",
                                             "layer_index", "layer_id", "params",
                                             "pruned", "inactive_unpruned", "active"};
  return h;
}

inline std::string layer_csv_rows(const std::string& arch, const std::string& method,
                                  std::uint64_t seed, const ConnectivityReport& r) {
  std::string out;
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    const LayerActivity& la = r.layers[l];
    out += join_csv({arch, method, std::to_string(seed), std::to_string(l), la.layer_id,
                     std::to_string(la.params), std::to_string(la.pruned),
                     std::to_string(la.inactive_unpruned), std::to_string(la.active)});
  }
  return out;
}

inline const std::vector<std::string>& quotas_csv_header() {
  static const std::vector<std::string> h = {"target", "layer_index", "layer_id", "params",
                                             "sparsity", "compression", "status"};
  return h;
}

inline std::string quotas_csv_rows(const ArchGraph& arch, const QuotaVector& q) {
  std::string out;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const double s = q.sparsity[l];
    out += join_csv({csv_number(q.target), std::to_string(l), arch.layer_id(l),
                     std::to_string(arch.param_counts()[l]), csv_number(s),
                     csv_number(s >= 1.0 ? std::numeric_limits<double>::infinity() : 1.0 / (1.0 - s)),
                     "ok"});
  }
  return out;
}

inline std::string quotas_csv_infeasible(const ArchGraph& arch, double target) {
  std::string out;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    out += join_csv({csv_number(target), std::to_string(l), arch.layer_id(l),
                     std::to_string(arch.param_counts()[l]), "", "", "infeasible"});
  }
  return out;
}

} // namespace prunelens
