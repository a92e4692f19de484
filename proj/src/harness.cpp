#include "emguide/harness.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace emguide::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.count(item.key())) throw std::invalid_argument(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Vec2 read_vec2(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

PathKind kind_from_string(const std::string& s) {
  if (s == "polyline") return PathKind::Polyline;
  if (s == "spline") return PathKind::Spline;
  throw std::invalid_argument("unknown path kind '" + s + "'");
}

std::string to_string(PathKind k) { return k == PathKind::Polyline ? "polyline" : "spline"; }

}  // namespace

em::EmParams em_params_from_json(const json& j) {
  check_keys(j, "em", {"br_T", "volume_cm3", "m_p_Am2", "m_m_Am2", "h_p_cm", "h_m_cm", "h_cm"});
  em::EmParams p = em::EmParams::prototype();
  if (j.contains("br_T")) p.br = j["br_T"].get<double>();
  if (j.contains("volume_cm3")) p.volume = j["volume_cm3"].get<double>() * 1e-6;
  p.m_p = j.contains("m_p_Am2") ? j["m_p_Am2"].get<double>() : p.derived_pen_moment();
  if (j.contains("m_m_Am2")) p.m_m = j["m_m_Am2"].get<double>();
  if (j.contains("h_p_cm")) p.h_p = j["h_p_cm"].get<double>() * 1e-2;
  if (j.contains("h_m_cm")) p.h_m = j["h_m_cm"].get<double>() * 1e-2;
  p.h = j.contains("h_cm") ? j["h_cm"].get<double>() * 1e-2 : p.h_p + p.h_m;
  p.validate();
  return p;
}

json em_params_to_json(const em::EmParams& p) {
  return {{"br_T", p.br},          {"volume_cm3", p.volume * 1e6}, {"m_p_Am2", p.m_p},
          {"m_m_Am2", p.m_m},      {"h_p_cm", p.h_p * 1e2},        {"h_m_cm", p.h_m * 1e2},
          {"h_cm", p.h * 1e2}};
}

mpcc::Weights weights_from_json(const json& j, mpcc::Weights w) {
  check_keys(j, "weights",
             {"w_l", "w_c", "w_theta", "w_theta_dot", "w_f", "w_d", "w_alpha", "r_acc",
              "r_alpha_rate", "r_theta_rate", "horizon_decay"});
  read(j, "w_l", w.w_l);
  read(j, "w_c", w.w_c);
  read(j, "w_theta", w.w_theta);
  read(j, "w_theta_dot", w.w_theta_dot);
  read(j, "w_f", w.w_f);
  read(j, "w_d", w.w_d);
  read(j, "w_alpha", w.w_alpha);
  read(j, "r_acc", w.r_acc);
  read(j, "r_alpha_rate", w.r_alpha_rate);
  read(j, "r_theta_rate", w.r_theta_rate);
  read(j, "horizon_decay", w.horizon_decay);
  w.validate();
  return w;
}

json weights_to_json(const mpcc::Weights& w) {
  return {{"w_l", w.w_l},
          {"w_c", w.w_c},
          {"w_theta", w.w_theta},
          {"w_theta_dot", w.w_theta_dot},
          {"w_f", w.w_f},
          {"w_d", w.w_d},
          {"w_alpha", w.w_alpha},
          {"r_acc", w.r_acc},
          {"r_alpha_rate", w.r_alpha_rate},
          {"r_theta_rate", w.r_theta_rate},
          {"horizon_decay", w.horizon_decay}};
}

mpcc::ControllerConfig controller_from_json(const json& j, mpcc::ControllerConfig c) {
  check_keys(j, "controller",
             {"weights", "constraints", "scaling", "solver", "stiffness_c", "ref_speed"});
  if (j.contains("weights")) c.weights = weights_from_json(j["weights"], c.weights);
  if (j.contains("constraints")) {
    const json& k = j["constraints"];
    check_keys(k, "constraints",
               {"workspace_min", "workspace_max", "max_speed", "max_acc", "alpha_min",
                "alpha_max", "alpha_rate_max", "theta_rate_max"});
    if (k.contains("workspace_min")) c.constraints.workspace_min = read_vec2(k["workspace_min"]);
    if (k.contains("workspace_max")) c.constraints.workspace_max = read_vec2(k["workspace_max"]);
    read(k, "max_speed", c.constraints.max_speed);
    read(k, "max_acc", c.constraints.max_acc);
    read(k, "alpha_min", c.constraints.alpha_min);
    read(k, "alpha_max", c.constraints.alpha_max);
    read(k, "alpha_rate_max", c.constraints.alpha_rate_max);
    read(k, "theta_rate_max", c.constraints.theta_rate_max);
  }
  if (j.contains("scaling")) {
    const json& k = j["scaling"];
    check_keys(k, "scaling", {"length", "force", "speed", "accel", "alpha_rate"});
    read(k, "length", c.scaling.length);
    read(k, "force", c.scaling.force);
    read(k, "speed", c.scaling.speed);
    read(k, "accel", c.scaling.accel);
    read(k, "alpha_rate", c.scaling.alpha_rate);
  }
  if (j.contains("solver")) {
    const json& k = j["solver"];
    check_keys(k, "solver",
               {"horizon", "dt", "max_iterations", "tolerance", "qp_max_iterations",
                "qp_tolerance", "armijo", "backtrack", "max_backtracks"});
    read(k, "horizon", c.solver.horizon);
    read(k, "dt", c.solver.dt);
    read(k, "max_iterations", c.solver.max_iterations);
    read(k, "tolerance", c.solver.tolerance);
    read(k, "qp_max_iterations", c.solver.qp_max_iterations);
    read(k, "qp_tolerance", c.solver.qp_tolerance);
    read(k, "armijo", c.solver.armijo);
    read(k, "backtrack", c.solver.backtrack);
    read(k, "max_backtracks", c.solver.max_backtracks);
  }
  read(j, "stiffness_c", c.stiffness_c);
  read(j, "ref_speed", c.ref_speed);
  return c;
}

PathSpec read_path_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::invalid_argument("cannot open path file " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("path file " + file.string() + ": " + e.what());
  }
  check_keys(j, "path file", {"kind", "points"});
  PathSpec spec;
  spec.generator = "points";
  spec.kind = kind_from_string(j.value("kind", std::string("polyline")));
  for (const json& p : j.at("points")) spec.points.push_back(read_vec2(p));
  return spec;
}

json path_to_json(const std::vector<Vec2>& points, PathKind kind) {
  json pts = json::array();
  for (const Vec2& p : points) pts.push_back({p.x(), p.y()});
  return {{"kind", to_string(kind)}, {"points", pts}};
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
  if (paths.empty()) throw std::invalid_argument("config: at least one path is required");
  if (controllers.empty()) throw std::invalid_argument("config: at least one controller is required");
  if (!(spacing > 0.0)) throw std::invalid_argument("config: spacing must be > 0");
  sim.validate();
  user.validate();
  for (const NamedPath& p : paths) build_path(p.spec, path_options);
}

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, "config",
             {"controllers", "paths", "seeds", "output_dir", "write_traces", "spacing", "threads",
              "em", "controller", "user", "pen", "stage", "kalman", "sim", "path_options"});
  ExperimentConfig c;
  if (j.contains("controllers")) {
    c.controllers.clear();
    for (const json& k : j["controllers"]) c.controllers.push_back(sim::controller_from_string(k.get<std::string>()));
  }
  if (j.contains("em")) c.sim.controller.em = em_params_from_json(j["em"]);
  if (j.contains("controller")) c.sim.controller = controller_from_json(j["controller"], c.sim.controller);

  if (j.contains("paths")) {
    for (const json& p : j["paths"]) {
      check_keys(p, "path", {"name", "generator", "center", "scale", "turns", "samples", "kind", "file"});
      NamedPath np;
      if (p.contains("file")) {
        fs::path f = p["file"].get<std::string>();
        if (f.is_relative()) f = base_dir / f;
        if (!fs::exists(f)) throw std::invalid_argument("path file does not exist: " + f.string());
        np.spec = read_path_file(f);
      }
      read(p, "generator", np.spec.generator);
      if (p.contains("center")) np.spec.center = read_vec2(p["center"]);
      read(p, "scale", np.spec.scale);
      read(p, "turns", np.spec.turns);
      read(p, "samples", np.spec.samples);
      if (p.contains("kind")) np.spec.kind = kind_from_string(p["kind"].get<std::string>());
      np.name = p.value("name", np.spec.generator);
      c.paths.push_back(np);
    }
  }
  if (j.contains("path_options")) {
    const json& k = j["path_options"];
    check_keys(k, "path_options", {"samples_per_meter", "search_window"});
    read(k, "samples_per_meter", c.path_options.samples_per_meter);
    read(k, "search_window", c.path_options.search_window);
  }
  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    if (s.is_array()) {
      for (const json& v : s) c.seeds.push_back(v.get<std::uint64_t>());
    } else {
      check_keys(s, "seeds", {"first", "count"});
      const std::uint64_t first = s.value("first", std::uint64_t{1});
      const int count = s.at("count").get<int>();
      for (int i = 0; i < count; ++i) c.seeds.push_back(first + std::uint64_t(i));
    }
  }
  if (j.contains("output_dir")) {
    c.output_dir = j["output_dir"].get<std::string>();
    if (c.output_dir.is_relative()) c.output_dir = (base_dir / c.output_dir).lexically_normal();
  }
  read(j, "write_traces", c.write_traces);
  read(j, "spacing", c.spacing);
  read(j, "threads", c.threads);

  if (j.contains("user")) {
    const json& u = j["user"];
    check_keys(u, "user",
               {"intent_gain", "speed", "speed_jitter", "pause_at", "pause_duration", "noise_std",
                "wander_std", "wander_tau", "compliance"});
    read(u, "intent_gain", c.user.intent_gain);
    read(u, "speed", c.user.speed);
    read(u, "speed_jitter", c.user.speed_jitter);
    read(u, "pause_at", c.user.pause_at);
    read(u, "pause_duration", c.user.pause_duration);
    read(u, "noise_std", c.user.noise_std);
    read(u, "wander_std", c.user.wander_std);
    read(u, "wander_tau", c.user.wander_tau);
    read(u, "compliance", c.user.compliance);
  }
  if (j.contains("pen")) {
    check_keys(j["pen"], "pen", {"mass", "damping"});
    read(j["pen"], "mass", c.sim.pen.mass);
    read(j["pen"], "damping", c.sim.pen.damping);
  }
  if (j.contains("stage")) {
    check_keys(j["stage"], "stage", {"dispersion_std"});
    read(j["stage"], "dispersion_std", c.sim.stage.dispersion_std);
  }
  if (j.contains("kalman")) {
    check_keys(j["kalman"], "kalman", {"accel_psd", "meas_var"});
    read(j["kalman"], "accel_psd", c.sim.kalman.accel_psd);
    read(j["kalman"], "meas_var", c.sim.kalman.meas_var);
  }
  if (j.contains("sim")) {
    const json& s = j["sim"];
    check_keys(s, "sim", {"substeps", "decimation", "timeout", "tail", "sensor_noise_std"});
    read(s, "substeps", c.sim.substeps);
    read(s, "decimation", c.sim.decimation);
    read(s, "timeout", c.sim.timeout);
    read(s, "tail", c.sim.tail);
    read(s, "sensor_noise_std", c.sim.sensor_noise_std);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::invalid_argument("cannot open config " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + file.string() + ": " + e.what());
  }
  return config_from_json(j, file.parent_path().empty() ? fs::path(".") : file.parent_path());
}

json config_to_json(const ExperimentConfig& c) {
  const mpcc::ControllerConfig& cc = c.sim.controller;
  json controllers = json::array();
  for (auto k : c.controllers) controllers.push_back(sim::to_string(k));
  json paths = json::array();
  for (const NamedPath& p : c.paths) {
    json pj = {{"name", p.name},
               {"generator", p.spec.generator},
               {"center", {p.spec.center.x(), p.spec.center.y()}},
               {"scale", p.spec.scale},
               {"turns", p.spec.turns},
               {"samples", p.spec.samples},
               {"kind", to_string(p.spec.kind)}};
    paths.push_back(pj);
  }
  return {
      {"controllers", controllers},
      {"paths", paths},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir.string()},
      {"write_traces", c.write_traces},
      {"spacing", c.spacing},
      {"threads", c.threads},
      {"path_options",
       {{"samples_per_meter", c.path_options.samples_per_meter},
        {"search_window", c.path_options.search_window}}},
      {"em", em_params_to_json(cc.em)},
      {"controller",
       {{"weights", weights_to_json(cc.weights)},
        {"constraints",
         {{"workspace_min", {cc.constraints.workspace_min.x(), cc.constraints.workspace_min.y()}},
          {"workspace_max", {cc.constraints.workspace_max.x(), cc.constraints.workspace_max.y()}},
          {"max_speed", cc.constraints.max_speed},
          {"max_acc", cc.constraints.max_acc},
          {"alpha_min", cc.constraints.alpha_min},
          {"alpha_max", cc.constraints.alpha_max},
          {"alpha_rate_max", cc.constraints.alpha_rate_max},
          {"theta_rate_max", cc.constraints.theta_rate_max}}},
        {"scaling",
         {{"length", cc.scaling.length},
          {"force", cc.scaling.force},
          {"speed", cc.scaling.speed},
          {"accel", cc.scaling.accel},
          {"alpha_rate", cc.scaling.alpha_rate}}},
        {"solver",
         {{"horizon", cc.solver.horizon},
          {"dt", cc.solver.dt},
          {"max_iterations", cc.solver.max_iterations},
          {"tolerance", cc.solver.tolerance},
          {"qp_max_iterations", cc.solver.qp_max_iterations},
          {"qp_tolerance", cc.solver.qp_tolerance},
          {"armijo", cc.solver.armijo},
          {"backtrack", cc.solver.backtrack},
          {"max_backtracks", cc.solver.max_backtracks}}},
        {"stiffness_c", cc.stiffness_c},
        {"ref_speed", cc.ref_speed}}},
      {"user",
       {{"intent_gain", c.user.intent_gain},
        {"speed", c.user.speed},
        {"speed_jitter", c.user.speed_jitter},
        {"pause_at", c.user.pause_at},
        {"pause_duration", c.user.pause_duration},
        {"noise_std", c.user.noise_std},
        {"wander_std", c.user.wander_std},
        {"wander_tau", c.user.wander_tau},
        {"compliance", c.user.compliance}}},
      {"pen", {{"mass", c.sim.pen.mass}, {"damping", c.sim.pen.damping}}},
      {"stage", {{"dispersion_std", c.sim.stage.dispersion_std}}},
      {"kalman", {{"accel_psd", c.sim.kalman.accel_psd}, {"meas_var", c.sim.kalman.meas_var}}},
      {"sim",
       {{"substeps", c.sim.substeps},
        {"decimation", c.sim.decimation},
        {"timeout", c.sim.timeout},
        {"tail", c.sim.tail},
        {"sensor_noise_std", c.sim.sensor_noise_std}}}};
}

BatchResult run_batch(const ExperimentConfig& config, bool write_files, std::ostream* log) {
  config.validate();
  std::vector<ReferencePath> paths;
  for (const NamedPath& p : config.paths) paths.push_back(build_path(p.spec, config.path_options));

  struct Job {
    std::size_t path;
    sim::ControllerKind controller;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    for (auto k : config.controllers) {
      for (auto s : config.seeds) jobs.push_back({p, k, s});
    }
  }

  const fs::path trace_dir = config.output_dir / "traces";
  if (write_files) {
    fs::create_directories(config.output_dir);
    if (config.write_traces) fs::create_directories(trace_dir);
  }

  BatchResult result;
  result.rows.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      try {
        const sim::Trace trace =
            sim::run_experiment(job.controller, paths[job.path], config.user, config.sim, job.seed);
        result.rows[i] = metrics::summarize(trace, paths[job.path], config.paths[job.path].name,
                                            config.spacing);
        if (write_files && config.write_traces) {
          std::ofstream out(trace_dir / (config.paths[job.path].name + "_" +
                                         sim::to_string(job.controller) + "_" +
                                         std::to_string(job.seed) + ".csv"));
          trace.write_csv(out);
        }
        if (log) {
          std::lock_guard lock(log_mutex);
          *log << config.paths[job.path].name << ' ' << sim::to_string(job.controller) << " seed "
               << job.seed << (trace.diverged ? " DIVERGED" : "") << '\n';
        }
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  int threads = config.threads > 0 ? config.threads : int(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, int(std::max<std::size_t>(jobs.size(), 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::ostringstream table;
  const auto& cols = metrics::summary_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) table << (c ? "," : "") << cols[c];
  table << '\n';
  for (const metrics::Summary& s : result.rows) {
    table << metrics::summary_row(s) << '\n';
    result.diverged += s.diverged ? 1 : 0;
  }
  result.table = table.str();
  if (write_files) {
    std::ofstream out(config.output_dir / "results.csv");
    out << result.table;
  }
  return result;
}

}  // namespace emguide::harness
