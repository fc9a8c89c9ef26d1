#pragma once

// Seeded (method, sparsity, seed) grids run over a bounded worker pool.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "prunelens/arch.hpp"
#include "prunelens/arch_json.hpp"
#include "prunelens/connectivity.hpp"
#include "prunelens/error.hpp"
#include "prunelens/methods.hpp"
#include "prunelens/report_io.hpp"
#include "prunelens/svg.hpp"
#include "prunelens/tensors.hpp"
#include "prunelens/zoo.hpp"

namespace prunelens {

struct SweepConfig {
  std::string arch;  // zoo name or path to an architecture file
  std::vector<MethodSpec> methods;
  std::vector<double> sparsities;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = ".";
  int threads = 0;  // 0: hardware concurrency
  bool per_layer = false;
  bool timing = true;
};

// s = 1 - 1/c for c log-spaced over [from, to].
inline std::vector<double> log_spaced_sparsities(double from_compression, double to_compression,
                                                 int points) {
  if (!(from_compression >= 1.0 && to_compression >= from_compression) || points < 1) {
    throw InputError("log-spaced range needs 1 <= from <= to and points >= 1");
  }
  std::vector<double> grid;
  const double a = std::log(from_compression);
  const double b = std::log(to_compression);
  for (int k = 0; k < points; ++k) {
    const double t = points == 1 ? 0.0 : static_cast<double>(k) / (points - 1);
    grid.push_back(1.0 - 1.0 / std::exp(a + t * (b - a)));
  }
  return grid;
}

inline SweepConfig sweep_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("sweep config must be a JSON object");
  SweepConfig c;
  try {
    c.arch = j.at("arch").get<std::string>();
    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_json(m));
    const auto& grid = j.at("sparsities");
    if (grid.is_array()) {
      c.sparsities = grid.get<std::vector<double>>();
    } else {
      const auto& range = grid.at("logspace");
      c.sparsities = log_spaced_sparsities(range.at("from_compression").get<double>(),
                                           range.at("to_compression").get<double>(),
                                           range.at("points").get<int>());
    }
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.output_dir = j.value("output_dir", ".");
    c.threads = j.value("threads", 0);
    c.per_layer = j.value("per_layer", false);
    c.timing = j.value("timing", true);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("sweep config: ") + e.what());
  }
  for (double s : c.sparsities) {
    if (!(s >= 0.0 && s < 1.0)) throw ValidationError("sweep sparsity outside [0, 1): " + csv_number(s));
  }
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
    throw ValidationError("sweep seeds must be distinct");
  }
  return c;
}

inline SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open sweep config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("sweep config '" + path + "': " + e.what());
  }
  return sweep_config_from_json(j);
}

// Zoo name, or a path to an architecture file.
inline ArchGraph resolve_arch(const std::string& name_or_path) {
  const auto& names = builtin_arch_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    return builtin_arch(name_or_path);
  }
  if (std::filesystem::exists(name_or_path)) return load_arch_file(name_or_path);
  throw InputError("'" + name_or_path + "' is neither a built-in architecture nor a file");
}

struct SweepRow {
  std::string arch;
  std::string method;
  std::string lsq;
  std::uint64_t seed = 0;
  double target = 0.0;
  ConnectivityReport report;
  double runtime_ms = 0.0;
  std::string timestamp;
  std::string error;
};

inline int worker_count(int requested, std::size_t cells) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("PRUNELENS_THREADS")) {
    const int limit = std::atoi(cap);
    if (limit > 0) n = std::min(n, limit);
  }
  n = std::max(n, 1);
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n), std::max<std::size_t>(cells, 1)));
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<SweepRow> run_sweep(const SweepConfig& config, const ArchGraph& arch) {
  struct Cell {
    std::size_t method;
    double target;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    for (double s : config.sparsities) {
      for (std::uint64_t seed : config.seeds) cells.push_back({m, s, seed});
    }
  }
  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      const Cell& cell = cells[k];
      const MethodSpec& spec = config.methods[cell.method];
      SweepRow& row = rows[k];
      row.arch = arch.name();
      row.method = spec.name();
      row.lsq = spec.uses_lsq() ? spec.lsq : "";
      row.seed = cell.seed;
      row.target = cell.target;
      const auto start = std::chrono::steady_clock::now();
      try {
        const WeightSet weights = init_weights(arch, cell.seed);
        row.report = effective_report(arch, produce_mask(arch, weights, spec, cell.target, cell.seed).mask);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      if (config.timing) {
        row.runtime_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        row.timestamp = utc_timestamp();
      }
    }
  };
  const int workers = worker_count(config.threads, cells.size());
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.target != b.target) return a.target < b.target;
    return a.seed < b.seed;
  });
  return rows;
}

inline const std::vector<std::string>& sweep_csv_header() {
  static const std::vector<std::string> h = {
      "arch", "method", "lsq", "seed", "target_sparsity", "direct_sparsity", "effective_sparsity",
      "direct_compression", "effective_compression", "disconnected", "runtime_ms", "timestamp",
      "error"};
  return h;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, bool timing) {
  std::string out = join_csv(sweep_csv_header());
  for (const SweepRow& r : rows) {
    const bool ok = r.error.empty();
    auto metric = [&](double v) { return ok ? csv_number(v) : std::string(); };
    out += join_csv({r.arch, r.method, r.lsq, std::to_string(r.seed), csv_number(r.target),
                     metric(r.report.direct_sparsity()), metric(r.report.effective_sparsity()),
                     metric(r.report.direct_compression()), metric(r.report.effective_compression()),
                     ok ? (r.report.disconnected() ? "true" : "false") : "",
                     timing ? csv_number(r.runtime_ms) : "", timing ? r.timestamp : "", r.error});
  }
  return out;
}

inline std::string sweep_layers_csv(const std::vector<SweepRow>& rows) {
  std::string out = join_csv(layer_csv_header());
  for (const SweepRow& r : rows) {
    if (r.error.empty()) out += layer_csv_rows(r.arch, r.method, r.seed, r.report);
  }
  return out;
}

// Effective against direct compression: mean line with a min/max band over seeds.
inline std::string sweep_svg(const std::vector<SweepRow>& rows, const std::string& arch) {
  svg::Chart chart;
  chart.title = "Effective vs direct compression (" + arch + ")";
  chart.x_label = "direct compression";
  chart.y_label = "effective compression";
  chart.diagonal = true;
  std::map<std::string, std::map<double, std::vector<const SweepRow*>>> groups;
  for (const SweepRow& r : rows) {
    if (r.error.empty() && !r.report.disconnected()) groups[r.method][r.target].push_back(&r);
  }
  for (const auto& [method, by_target] : groups) {
    svg::Series s;
    s.name = method;
    for (const auto& [target, cell_rows] : by_target) {
      double dx = 0.0, lo = std::numeric_limits<double>::infinity(), hi = 0.0, mean = 0.0;
      for (const SweepRow* r : cell_rows) {
        dx += r->report.direct_compression();
        mean += r->report.effective_compression();
        lo = std::min(lo, r->report.effective_compression());
        hi = std::max(hi, r->report.effective_compression());
      }
      const double n = static_cast<double>(cell_rows.size());
      s.line.push_back({dx / n, mean / n});
      s.lower.push_back({dx / n, lo});
      s.upper.push_back({dx / n, hi});
    }
    chart.series.push_back(std::move(s));
  }
  return svg::render(chart);
}

struct SweepOutputs {
  std::string csv;
  std::string layers_csv;
  std::string svg;
};

inline SweepOutputs sweep_outputs(const SweepConfig& config, const ArchGraph& arch,
                                  const std::vector<SweepRow>& rows) {
  SweepOutputs out;
  out.csv = sweep_csv(rows, config.timing);
  if (config.per_layer) out.layers_csv = sweep_layers_csv(rows);
  out.svg = sweep_svg(rows, arch.name());
  return out;
}

} // namespace prunelens
