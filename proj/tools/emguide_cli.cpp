// emguide: batch experiments, live sessions and path generation.

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "emguide/harness.hpp"
#include "emguide/paths.hpp"
#include "emguide/session.hpp"

using namespace emguide;

namespace {

session::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

harness::ExperimentConfig config_or_default(const std::string& file) {
  if (file.empty()) {
    harness::ExperimentConfig c;
    c.paths.push_back({"line", PathSpec{}});
    c.seeds = {1};
    return c;
  }
  return harness::load_config(file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Electromagnetic pen guidance: simulation harness and live session server"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run every (path, controller, seed) in a config; writes results.csv and traces");
  std::string run_config;
  std::string run_output;
  int run_threads = -1;
  bool run_no_traces = false;
  bool run_quiet = false;
  run->add_option("config", run_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", run_output, "Output directory (overrides config output_dir)");
  run->add_option("-j,--threads", run_threads, "Worker threads; 0 = hardware concurrency (default: config)");
  run->add_flag("--no-traces", run_no_traces, "Skip per-run trace CSVs");
  run->add_flag("-q,--quiet", run_quiet, "Do not log finished runs");

  // serve
  auto* serve = app.add_subcommand("serve", "Live session service (NDJSON over TCP, WebSocket upgrade accepted)");
  std::string serve_config;
  std::string host = "127.0.0.1";
  int port = 8765;
  serve->add_option("-c,--config", serve_config, "Config supplying controller, filter and path options")
      ->check(CLI::ExistingFile);
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("-p,--port", port, "Port; 0 picks a free one")->capture_default_str();

  // gen-path
  auto* gen = app.add_subcommand("gen-path", "Emit a built-in shape as a path file");
  PathSpec spec;
  std::string kind = "spline";
  std::string gen_out;
  std::vector<double> center = {spec.center.x(), spec.center.y()};
  gen->add_option("generator", spec.generator, "line | circle | spiral | sinus")
      ->required()
      ->check(CLI::IsMember(generator_names()));
  gen->add_option("--scale", spec.scale, "Half-extent (m)")->capture_default_str();
  gen->add_option("--center", center, "Center x y (m)")->expected(2)->capture_default_str();
  gen->add_option("--turns", spec.turns, "Spiral turns or sinus periods")->capture_default_str();
  gen->add_option("--samples", spec.samples, "Control points; 0 = shape default")->capture_default_str();
  gen->add_option("--kind", kind, "polyline | spline")
      ->check(CLI::IsMember({"polyline", "spline"}))
      ->capture_default_str();
  gen->add_option("-o,--output", gen_out, "Output file (default: stdout)");

  // validate-config
  auto* val = app.add_subcommand("validate-config", "Check a config and print it with every default filled in");
  std::string val_config;
  bool val_quiet = false;
  val->add_option("config", val_config, "Experiment config (JSON); omit to print the defaults");
  val->add_flag("-q,--quiet", val_quiet, "Only report validity");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      harness::ExperimentConfig config = harness::load_config(run_config);
      if (!run_output.empty()) config.output_dir = run_output;
      if (run_threads >= 0) config.threads = run_threads;
      if (run_no_traces) config.write_traces = false;
      const harness::BatchResult result = harness::run_batch(config, true, run_quiet ? nullptr : &std::cerr);
      std::cout << result.table;
      std::cerr << result.rows.size() << " runs, " << result.diverged << " diverged; table written to "
                << (config.output_dir / "results.csv").string() << '\n';
      return 0;
    }
    if (*serve) {
      const harness::ExperimentConfig config = config_or_default(serve_config);
      session::SessionConfig sc;
      sc.controller = config.sim.controller;
      sc.kalman = config.sim.kalman;
      sc.path_options = config.path_options;
      session::Server server(sc);
      const int bound = server.listen(host, port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << host << ':' << bound << '\n';
      server.run();
      g_server = nullptr;
      return 0;
    }
    if (*gen) {
      spec.center = Vec2(center.at(0), center.at(1));
      spec.kind = kind == "polyline" ? PathKind::Polyline : PathKind::Spline;
      if (spec.generator == "line") spec.kind = PathKind::Polyline;
      const auto points = generate_points(spec);
      build_path(spec);  // rejects degenerate output
      const nlohmann::json j = harness::path_to_json(points, spec.kind);
      std::string text = "{\"kind\": " + j["kind"].dump() + ", \"points\": [\n";
      for (std::size_t i = 0; i < j["points"].size(); ++i) {
        text += "  " + j["points"][i].dump() + (i + 1 < j["points"].size() ? ",\n" : "\n");
      }
      text += "]}\n";
      if (gen_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(gen_out);
        if (!out) throw std::invalid_argument("cannot write " + gen_out);
        out << text;
      }
      return 0;
    }
    if (*val) {
      harness::ExperimentConfig config = config_or_default(val_config);
      if (val_config.empty()) config.seeds = {1};
      if (!val_quiet) std::cout << harness::config_to_json(config).dump(2) << '\n';
      std::cerr << "config OK\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
