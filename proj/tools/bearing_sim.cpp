// Command-line front end: run scenarios, reproduce the built-in experiments,
// analyze traces for bearing persistence of excitation.

#include "bform/scenario.hpp"
#include "bform/simulation.hpp"
#include "bform/trace.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> duration;
  bool noiseless = false;
};

void apply(bform::Scenario& sc, const Overrides& o) {
  if (o.seed) sc.noise.seed = *o.seed;
  if (o.dt) sc.dt = *o.dt;
  if (o.duration) sc.duration = *o.duration;
  if (o.noiseless) sc.noise.kind = bform::NoiseKind::none;
}

int run_and_write(bform::Scenario sc, const Overrides& o, const std::string& out_dir) {
  apply(sc, o);
  bform::Simulation sim(sc);
  const bform::RunResult res = sim.run();

  fs::create_directories(out_dir);
  {
    std::ofstream trace(fs::path(out_dir) / "trace.csv");
    sim.write_trace_csv(trace, res);
  }
  {
    std::ofstream metrics(fs::path(out_dir) / "metrics.json");
    metrics << sim.metrics_json(res).dump(2) << '\n';
  }
  {
    std::ofstream scen(fs::path(out_dir) / "scenario.txt");
    scen << bform::write_scenario(sc);
  }

  const auto& m = res.metrics;
  std::cout << sc.name << " (" << bform::to_string(sc.mode) << "): " << res.trace.size() - 1 << " steps, "
            << m.wall_seconds << " s\n"
            << "  |delta_p| " << m.initial_delta_p << " -> " << m.final_delta_p << ", |delta_v| "
            << m.initial_delta_v << " -> " << m.final_delta_v << '\n';
  if (sc.closes_loop())
    std::cout << "  |p - p*| " << m.initial_track_p << " -> " << m.final_track_p << ", |v - v*| "
              << m.initial_track_v << " -> " << m.final_track_v << '\n';
  if (m.pe)
    std::cout << "  BPE: " << (m.pe->bpe ? "yes" : "no") << " (mu = " << m.pe->formation_level << ")\n";
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "  wrote " << (fs::path(out_dir) / "trace.csv").string() << '\n';
  if (res.aborted) {
    std::cerr << "aborted at t = " << res.abort_time << ": " << res.abort_reason << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bearing-only cooperative localization and formation tracking simulator"};
  app.require_subcommand(1);

  Overrides o;
  std::string out_dir = "out";
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir, "Output directory for trace.csv, metrics.json, scenario.txt");
    sub->add_option("--seed", o.seed, "Noise seed override");
    sub->add_option("--dt", o.dt, "Step size override (s)");
    sub->add_option("--duration", o.duration, "Duration override (s)");
    sub->add_flag("--noiseless", o.noiseless, "Disable bearing noise");
  };

  std::string scenario_file;
  auto* run = app.add_subcommand("run", "Run a scenario file");
  run->add_option("scenario", scenario_file, "Scenario file")->required();
  add_common(run);

  std::string paper_name;
  auto* paper = app.add_subcommand("paper", "Run a built-in experiment");
  paper->add_option("name", paper_name, "paper-centralized | paper-decentralized | paper-control")->required();
  paper->add_flag_callback("--list", [] {
    for (const auto& n : bform::builtin_names()) std::cout << n << '\n';
    std::exit(kExitOk);
  }, "List built-in experiments");
  add_common(paper);

  std::string trace_file, analyze_scenario, analyze_paper;
  bool want_bpe = false;
  std::optional<double> window, threshold;
  auto* analyze = app.add_subcommand("analyze", "Analyze a trace file");
  analyze->add_option("trace", trace_file, "Trace CSV written by run/paper")->required();
  analyze->add_flag("--bpe", want_bpe, "Verify bearing persistence of excitation");
  analyze->add_option("--window", window, "Excitation window T (s)");
  analyze->add_option("--threshold", threshold, "PE classification threshold");
  analyze->add_option("--scenario", analyze_scenario, "Scenario file describing the graph (default: scenario.txt next to the trace)");
  analyze->add_option("--paper", analyze_paper, "Use a built-in experiment's graph");

  std::string validate_file;
  auto* validate = app.add_subcommand("validate", "Validate a scenario file without running it");
  validate->add_option("scenario", validate_file, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return run_and_write(bform::load_scenario(scenario_file), o, out_dir);
    if (*paper) return run_and_write(bform::builtin_scenario(paper_name), o, out_dir);
    if (*validate) {
      const bform::Scenario sc = bform::load_scenario(validate_file);
      for (const auto& w : bform::validate_scenario(sc)) std::cerr << "warning: " << w << '\n';
      std::cout << validate_file << ": ok (" << sc.n << " agents, " << sc.edges.size() << " edges, "
                << bform::to_string(sc.mode) << ")\n";
      return kExitOk;
    }
    if (*analyze) {
      bform::Scenario sc;
      if (!analyze_paper.empty()) sc = bform::builtin_scenario(analyze_paper);
      else if (!analyze_scenario.empty()) sc = bform::load_scenario(analyze_scenario);
      else sc = bform::load_scenario((fs::path(trace_file).parent_path() / "scenario.txt").string());
      const bform::FormationGraph g = sc.graph();
      const bform::TraceTable tab = bform::load_trace(trace_file);
      const auto& t = tab.column("t");
      nlohmann::json j;
      j["trace"] = trace_file;
      j["samples"] = tab.rows();
      const double t_end = t.empty() ? 0.0 : t.back();
      for (const char* col : {"delta_p", "delta_v", "track_p", "track_v"}) {
        const auto fit = bform::fit_exponential(t, tab.column(col), 0.1 * t_end, t_end);
        j["rates"][col] = {{"slope", fit.slope}, {"r2", fit.r2}, {"final", tab.column(col).back()}};
      }
      if (want_bpe) {
        const auto rep = bform::bpe_check(bform::bearing_trace(tab, g), g, window.value_or(sc.pe_window),
                                          threshold.value_or(sc.pe_threshold));
        nlohmann::json levels = nlohmann::json::array();
        for (int k = 0; k < g.edge_count(); ++k)
          levels.push_back({{"edge", bform::edge_label(g.edge(k))}, {"mu", rep.edge_levels[k]}});
        nlohmann::json pe = nlohmann::json::array();
        for (int k : rep.pe_edges) pe.push_back(bform::edge_label(g.edge(k)));
        j["pe_report"] = {{"window", rep.window}, {"threshold", rep.threshold}, {"edge_levels", levels},
                          {"formation_mu", rep.formation_level}, {"pe_edges", pe}, {"connected", rep.connected},
                          {"bpe", rep.bpe}, {"reason", rep.reason}};
      }
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }
  } catch (const bform::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const bform::SimulationAbort& e) {
    std::cerr << "runtime abort at t = " << e.time() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
