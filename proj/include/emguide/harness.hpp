#pragma once

// Experiment configuration and batch execution.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "emguide/metrics.hpp"
#include "emguide/paths.hpp"
#include "emguide/simulator.hpp"

namespace emguide::harness {

struct NamedPath {
  std::string name;
  PathSpec spec;
};

struct ExperimentConfig {
  std::vector<sim::ControllerKind> controllers = {
      sim::ControllerKind::Mpcc, sim::ControllerKind::Mpc, sim::ControllerKind::OpenLoop};
  std::vector<NamedPath> paths;
  PathOptions path_options;
  sim::UserModel user;
  sim::SimConfig sim;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir = "results";
  bool write_traces = true;
  double spacing = metrics::kDefaultSpacing;
  int threads = 0;  // <= 0: hardware concurrency

  /// Throws std::invalid_argument when seeds or paths are empty or any
  /// module-level invariant fails.
  void validate() const;
};

/// Parses the EM block. Keys carry their units (br_T, volume_cm3, m_p_Am2,
/// m_m_Am2, h_p_cm, h_m_cm, h_cm); m_p defaults to br·V/mu0 and h to h_p + h_m.
em::EmParams em_params_from_json(const nlohmann::json& j);
nlohmann::json em_params_to_json(const em::EmParams& p);

/// Partial weight update: only keys present in `j` change.
mpcc::Weights weights_from_json(const nlohmann::json& j, mpcc::Weights base = {});
nlohmann::json weights_to_json(const mpcc::Weights& w);

mpcc::ControllerConfig controller_from_json(const nlohmann::json& j,
                                            mpcc::ControllerConfig base = {});

/// Reads a path file: {"kind": "polyline"|"spline", "points": [[x, y], ...]} in meters.
PathSpec read_path_file(const std::filesystem::path& file);
nlohmann::json path_to_json(const std::vector<Vec2>& points, PathKind kind);

/// Relative file references resolve against `base_dir`. Unknown keys are errors.
ExperimentConfig config_from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& file);

/// The configuration with every default filled in.
nlohmann::json config_to_json(const ExperimentConfig& config);

struct BatchResult {
  std::vector<metrics::Summary> rows;  // path-major, then controller, then seed
  std::string table;                   // CSV text of the summary table
  int diverged = 0;
};

/// Runs every (path, controller, seed). Seeds run in parallel; the table is
/// independent of thread count. Writes results.csv (and traces when enabled)
/// when `write_files` is set.
BatchResult run_batch(const ExperimentConfig& config, bool write_files = true,
                      std::ostream* log = nullptr);

}  // namespace emguide::harness
