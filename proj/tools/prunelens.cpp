#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prunelens.hpp"

namespace fs = std::filesystem;
using namespace prunelens;

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

std::string analyze_header() {
  return join_csv({"arch", "method", "lsq", "seed", "direct_sparsity", "effective_sparsity",
                   "direct_compression", "effective_compression", "disconnected", "runtime_ms"});
}

std::string analyze_row(const std::string& arch, const std::string& method, const std::string& lsq,
                        const std::string& seed, const ConnectivityReport& r, double ms) {
  return join_csv({arch, method, lsq, seed, csv_number(r.direct_sparsity()),
                   csv_number(r.effective_sparsity()), csv_number(r.direct_compression()),
                   csv_number(r.effective_compression()), r.disconnected() ? "true" : "false",
                   csv_number(ms)});
}

ScheduleMode parse_schedule(const std::string& s) {
  if (s == "exponential") return ScheduleMode::kExponential;
  if (s == "linear") return ScheduleMode::kLinear;
  throw InputError("unknown schedule '" + s + "'");
}

struct PruneArgs {
  std::string arch;
  std::string method = "random";
  std::string lsq = "uniform";
  double sparsity = 0.0;
  std::uint64_t seed = 0;
  int iterations = 0;
  std::string schedule = "exponential";
  bool layerwise = false;
  bool shuffle = false;
  std::string weights;
  std::string scores;
  std::string out = "mask.plts";
  std::string report;
  std::string csv;
  std::string sidecar;
  std::string pool_update = "embedded";
};

void add_prune_options(CLI::App* cmd, PruneArgs& a, bool effective) {
  cmd->add_option("--arch", a.arch, "zoo name or architecture file")->required();
  cmd->add_option("--method", a.method, "random | synflow | magnitude | lamp | ingested");
  cmd->add_option("--lsq", a.lsq, "layerwise quotas for random or layerwise pruning");
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--weights", a.weights, "PLTS weights (default: seeded fan-avg init)");
  cmd->add_option("--scores", a.scores, "PLTS scores for --method ingested");
  cmd->add_option("--out", a.out, "output mask file");
  cmd->add_option("--report", a.report, "connectivity report JSON");
  cmd->add_option("--csv", a.csv, "one-row report CSV ('-' for stdout)");
  if (effective) {
    cmd->add_option("--target", a.sparsity, "target effective sparsity in [0, 1)")->required();
    cmd->add_option("--sidecar", a.sidecar, "search trace JSON");
    cmd->add_option("--pool-update", a.pool_update, "random method: embedded | printed");
  } else {
    cmd->add_option("--sparsity", a.sparsity, "target direct sparsity")->required();
    cmd->add_option("--iterations", a.iterations, "rounds for iterative score methods");
    cmd->add_option("--schedule", a.schedule, "exponential | linear");
    cmd->add_flag("--layerwise", a.layerwise, "prune scores per layer under --lsq quotas");
    cmd->add_flag("--shuffle", a.shuffle, "reshuffle survivors within each layer");
  }
}

void run_prune(const PruneArgs& a, bool effective) {
  const ArchGraph arch = resolve_arch(a.arch);
  MethodSpec spec;
  spec.method = a.method;
  spec.lsq = a.lsq;
  spec.layerwise = a.layerwise;
  spec.effective = effective;
  spec.shuffle = a.shuffle;
  spec.iterations = a.iterations;
  spec.schedule = parse_schedule(a.schedule);
  spec.pool_update = parse_pool_update(a.pool_update);
  if (a.method != "random") parse_provider(a.method);
  if (a.method == "ingested") {
    if (a.scores.empty()) throw InputError("--method ingested needs --scores");
    spec.ingested = read_scores(arch, a.scores);
  }
  const WeightSet weights = a.weights.empty() ? init_weights(arch, a.seed) : read_weights(arch, a.weights);

  const auto start = std::chrono::steady_clock::now();
  const PruneOutcome outcome = produce_mask(arch, weights, spec, a.sparsity, a.seed);
  const ConnectivityReport report = effective_report(arch, outcome.mask);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  write_tensors(arch, outcome.mask, a.out);
  if (!a.report.empty()) write_text(a.report, report_to_json(report).dump(2) + "\n");
  if (!a.csv.empty()) {
    write_text(a.csv, analyze_header() + analyze_row(arch.name(), spec.name(),
                                                      spec.uses_lsq() ? spec.lsq : "",
                                                      std::to_string(a.seed), report, ms));
  }
  if (effective && outcome.search && !a.sidecar.empty()) {
    write_text(a.sidecar, eff_prune_sidecar(*outcome.search).dump(2) + "\n");
  }
  std::cerr << "direct " << csv_number(report.direct_sparsity()) << " effective "
            << csv_number(report.effective_sparsity()) << " (compression "
            << csv_number(report.direct_compression()) << " / "
            << csv_number(report.effective_compression()) << ")";
  if (outcome.search && outcome.search->unreachable) std::cerr << " target unreachable";
  std::cerr << "\n";
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Effective sparsity analysis and pruning for neural network masks"};
  app.require_subcommand(1);

  PruneArgs prune_args;
  auto* prune = app.add_subcommand("prune", "prune to a target direct sparsity");
  add_prune_options(prune, prune_args, false);

  PruneArgs eff_args;
  auto* eff = app.add_subcommand("eff-prune", "prune to a target effective sparsity");
  add_prune_options(eff, eff_args, true);

  std::string an_arch, an_mask, an_json, an_csv, an_layers, an_method, an_lsq, an_seed;
  bool an_oracle = false;
  std::uint64_t an_bound = kDefaultOracleUnitBound;
  auto* analyze = app.add_subcommand("analyze", "connectivity report of a mask");
  analyze->add_option("--arch", an_arch)->required();
  analyze->add_option("--mask", an_mask, "PLTS mask")->required();
  analyze->add_option("--json", an_json, "report JSON output");
  analyze->add_option("--csv", an_csv, "report CSV output (default stdout)");
  analyze->add_option("--layers-csv", an_layers, "per-layer CSV output");
  analyze->add_option("--method", an_method, "label for the method column");
  analyze->add_option("--lsq", an_lsq, "label for the lsq column");
  analyze->add_option("--seed", an_seed, "label for the seed column");
  analyze->add_flag("--oracle", an_oracle, "cross-check against the brute-force oracle");
  analyze->add_option("--oracle-bound", an_bound, "oracle unit bound");

  std::string q_arch, q_lsq = "igq", q_out, q_svg;
  std::vector<double> q_sparsity;
  auto* quotas = app.add_subcommand("quotas", "layerwise sparsity quotas");
  quotas->add_option("--arch", q_arch)->required();
  quotas->add_option("--lsq", q_lsq, "allocator name");
  quotas->add_option("--sparsity", q_sparsity, "comma-separated targets (default: 0.00..0.99, 0.999)")
      ->delimiter(',');
  quotas->add_option("--out", q_out, "CSV output (default stdout)");
  quotas->add_option("--svg", q_svg, "layerwise compression chart");

  std::string sw_config, sw_out;
  bool sw_no_timing = false;
  auto* sweep = app.add_subcommand("sweep", "run a seeded sweep from a JSON config");
  sweep->add_option("--config", sw_config)->required();
  sweep->add_option("--out-dir", sw_out, "override output_dir");
  sweep->add_flag("--no-timing", sw_no_timing, "leave runtime_ms and timestamp empty");

  auto* arch_cmd = app.add_subcommand("arch", "architecture zoo");
  arch_cmd->require_subcommand(1);
  arch_cmd->add_subcommand("list", "list built-in architectures");
  std::string dump_name, dump_out;
  auto* dump = arch_cmd->add_subcommand("dump", "print an architecture as JSON");
  dump->add_option("name", dump_name)->required();
  dump->add_option("--out", dump_out);

  std::string gw_arch, gw_out = "weights.plts";
  std::uint64_t gw_seed = 0;
  auto* gen = app.add_subcommand("gen-weights", "seeded fan-avg Kaiming weights");
  gen->add_option("--arch", gw_arch)->required();
  gen->add_option("--seed", gw_seed);
  gen->add_option("--out", gw_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*prune) {
      run_prune(prune_args, false);
    } else if (*eff) {
      run_prune(eff_args, true);
    } else if (*analyze) {
      const ArchGraph arch = resolve_arch(an_arch);
      const MaskSet mask = read_masks(arch, an_mask);
      const auto start = std::chrono::steady_clock::now();
      const ConnectivityReport report = effective_report(arch, mask);
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (an_oracle && oracle_effective(arch, mask, an_bound) != report) {
        throw Error("oracle disagrees with the reachability report");
      }
      write_text(an_csv, analyze_header() + analyze_row(arch.name(), an_method, an_lsq, an_seed, report, ms));
      if (!an_json.empty()) write_text(an_json, report_to_json(report).dump(2) + "\n");
      if (!an_layers.empty()) {
        write_text(an_layers, join_csv(layer_csv_header()) +
                                  layer_csv_rows(arch.name(), an_method, 0, report));
      }
      if (an_oracle) std::cerr << "oracle agrees\n";
    } else if (*quotas) {
      const ArchGraph arch = resolve_arch(q_arch);
      const Allocator alloc = make_allocator(q_lsq, arch);
      const std::vector<double> grid = q_sparsity.empty() ? default_lsq_grid() : q_sparsity;
      std::string csv = join_csv(quotas_csv_header());
      svg::Chart chart;
      chart.title = "Layerwise compression, " + q_lsq + " (" + arch.name() + ")";
      chart.x_label = "global compression";
      chart.y_label = "layer compression";
      chart.series.resize(arch.num_layers());
      for (std::size_t l = 0; l < arch.num_layers(); ++l) chart.series[l].name = arch.layer_id(l);
      for (double s : grid) {
        if (!(s >= 0.0 && s <= 1.0)) throw InputError("sparsity outside [0, 1]");
        try {
          const QuotaVector q = alloc(s);
          csv += quotas_csv_rows(arch, q);
          for (std::size_t l = 0; l < arch.num_layers(); ++l) {
            chart.series[l].line.push_back({1.0 / (1.0 - s), 1.0 / (1.0 - q.sparsity[l])});
          }
        } catch (const InfeasibleError&) {
          csv += quotas_csv_infeasible(arch, s);
        }
      }
      write_text(q_out, csv);
      if (!q_svg.empty()) write_text(q_svg, svg::render(chart));
    } else if (*sweep) {
      SweepConfig config = load_sweep_config(sw_config);
      if (!sw_out.empty()) config.output_dir = sw_out;
      if (sw_no_timing) config.timing = false;
      const ArchGraph arch = resolve_arch(config.arch);
      const auto rows = run_sweep(config, arch);
      const SweepOutputs out = sweep_outputs(config, arch, rows);
      const fs::path dir(config.output_dir);
      write_text((dir / "sweep.csv").string(), out.csv);
      write_text((dir / "sweep.svg").string(), out.svg);
      if (config.per_layer) write_text((dir / "sweep_layers.csv").string(), out.layers_csv);
      std::size_t failed = 0;
      for (const auto& r : rows) failed += !r.error.empty();
      std::cerr << rows.size() << " cells, " << failed << " failed\n";
    } else if (*arch_cmd) {
      if (*dump) {
        write_text(dump_out, serialize_arch(resolve_arch(dump_name)) + "\n");
      } else {
        for (const auto& name : builtin_arch_names()) {
          const ArchGraph a = builtin_arch(name);
          std::cout << name << "\t" << a.num_layers() << " layers\t" << a.total_params() << " params\n";
        }
      }
    } else if (*gen) {
      const ArchGraph arch = resolve_arch(gw_arch);
      write_tensors(arch, init_weights(arch, gw_seed), gw_out);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
