#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dgtd/analysis.hpp"
#include "dgtd/config.hpp"
#include "dgtd/diffusion_net.hpp"
#include "dgtd/gridworld.hpp"
#include "dgtd/io.hpp"

namespace fs = std::filesystem;
using namespace dgtd;

namespace {

struct CliSetup {
  GridWorldSpec world;
  GridFeatureSpec features;
  std::string target_name;
  double greedy_prob = 0.8;
  double detour_prob = 0.95;
  double behavior_greedy_prob = 0.8;
  std::vector<int> centers;

  std::string topology = "random-connected";
  int agents = 15;
  std::uint64_t topology_seed = 1;
  double target_degree = 5.0;
  std::vector<std::pair<int, int>> edges;

  double gamma = 0.95;
  double mu = 1e-3;
  double eta = 0.1;
  long horizon = 100000;
  int replicas = 50;
  std::uint64_t seed = 7;
  std::vector<std::string> modes;
  std::string sampling = "trajectory";
  long record_stride = 100;
  double tail_fraction = 0.5;
  std::string out_dir = "out";
  bool parallel = true;
};

CliSetup load_setup(const std::string& path) {
  const Config cfg = Config::parse_file(path);
  CliSetup s;
  s.world.rows = static_cast<int>(cfg.get_int("world", "rows", 20));
  s.world.cols = static_cast<int>(cfg.get_int("world", "cols", 20));
  if (cfg.has("world", "food")) {
    const auto food = cfg.get_int_array("world", "food");
    if (food.size() != 2) throw std::runtime_error(path + ": world.food must be [row, col]");
    s.world.food_row = static_cast<int>(food[0]);
    s.world.food_col = static_cast<int>(food[1]);
  }
  s.world.predator_row_min = static_cast<int>(cfg.get_int("world", "predator_row_min", 8));
  s.world.predator_row_max = static_cast<int>(cfg.get_int("world", "predator_row_max", 15));
  s.world.predator_col_min = static_cast<int>(cfg.get_int("world", "predator_col_min", 5));
  s.world.predator_col_max = static_cast<int>(cfg.get_int("world", "predator_col_max", 20));
  s.world.step_reward = cfg.get_real("world", "step_reward", -1.0);
  s.world.predator_reward = cfg.get_real("world", "predator_reward", -15.0);
  s.world.food_reward = cfg.get_real("world", "food_reward", 20.0);

  s.features.markers_per_axis = static_cast<int>(cfg.get_int("features", "markers_per_axis", 8));
  s.features.width = cfg.get_real("features", "width", 0.005);
  s.features.normalize_rows = cfg.get_bool("features", "normalize_rows", false);

  s.target_name = cfg.get_string("policies", "target", "myopic");
  s.greedy_prob = cfg.get_real("policies", "greedy_prob", 0.8);
  s.detour_prob = cfg.get_real("policies", "detour_prob", 0.95);
  s.behavior_greedy_prob = cfg.get_real("policies", "behavior_greedy_prob", 0.8);
  if (cfg.has("policies", "territory_centers")) {
    for (long c : cfg.get_int_array("policies", "territory_centers"))
      s.centers.push_back(static_cast<int>(c));
  } else {
    s.centers = default_territory_centers();
  }

  s.agents = static_cast<int>(cfg.get_int("network", "agents", 15));
  s.topology = cfg.get_string("network", "topology", "random-connected");
  s.topology_seed = static_cast<std::uint64_t>(cfg.get_int("network", "topology_seed", 1));
  s.target_degree = cfg.get_real("network", "target_degree", 5.0);
  if (cfg.has("network", "edges")) {
    for (const auto& e : cfg.get_string_array("network", "edges")) {
      const auto dash = e.find('-');
      if (dash == std::string::npos)
        throw std::runtime_error(path + ": network.edges entries look like \"1-2\" (1-based)");
      s.edges.emplace_back(std::stoi(e.substr(0, dash)) - 1, std::stoi(e.substr(dash + 1)) - 1);
    }
  }

  s.gamma = cfg.get_real("run", "gamma", 0.95);
  s.mu = cfg.get_real("run", "mu", 1e-3);
  s.eta = cfg.get_real("run", "eta", 0.1);
  s.horizon = cfg.get_int("run", "horizon", 100000);
  s.replicas = static_cast<int>(cfg.get_int("run", "replicas", 50));
  s.seed = static_cast<std::uint64_t>(cfg.get_int("run", "seed", 7));
  if (cfg.has("run", "modes"))
    s.modes = cfg.get_string_array("run", "modes");
  else
    s.modes = {"diffusion", "noncooperative", "centralized"};
  s.sampling = cfg.get_string("run", "sampling", "trajectory");
  s.record_stride = cfg.get_int("run", "record_stride", 100);
  s.tail_fraction = cfg.get_real("run", "tail_fraction", 0.5);
  s.out_dir = cfg.get_string("run", "out_dir", "out");
  s.parallel = cfg.get_bool("run", "parallel", true);

  if (static_cast<int>(s.centers.size()) != s.agents)
    throw std::runtime_error(path + ": need one territory center per agent (" +
                             std::to_string(s.agents) + ")");
  return s;
}

Network build_network(const CliSetup& s) {
  Adjacency adj;
  if (s.topology == "complete") {
    adj = Adjacency::complete(s.agents);
  } else if (s.topology == "ring") {
    adj = Adjacency::ring(s.agents);
  } else if (s.topology == "random-connected") {
    adj = Adjacency::random_connected(s.agents, s.target_degree, s.topology_seed);
  } else if (s.topology == "edges") {
    adj.num_agents = s.agents;
    adj.edges = s.edges;
  } else {
    throw std::runtime_error("unknown topology '" + s.topology + "'");
  }
  return averaging_combination_matrix(adj);
}

void write_learning_curve(const std::string& path, const ExperimentTrace& trace) {
  std::vector<std::string> header{"iteration"};
  for (int a = 0; a < trace.num_agents; ++a)
    header.push_back("jpb_agent_" + std::to_string(a + 1));
  header.push_back("jpb_mean");
  header.push_back("diverged_count");
  CsvWriter csv(path, header);
  for (std::size_t r = 0; r < trace.record_iters.size(); ++r) {
    std::vector<double> row;
    for (int a = 0; a < trace.num_agents; ++a)
      row.push_back(trace.jpb(static_cast<long>(r), a));
    row.push_back(trace.jpb_mean(static_cast<long>(r)));
    row.push_back(static_cast<double>(trace.diverged_count[r]));
    csv.write_row(trace.record_iters[r], row);
  }
}

void write_surface(const std::string& path, const GridWorldSpec& world, const Vector& v) {
  // Row 1 of the CSV is the top grid row so the file reads like the map.
  std::vector<std::string> header;
  for (int c = 1; c <= world.cols; ++c) header.push_back("col_" + std::to_string(c));
  CsvWriter csv(path, header);
  for (int r = world.rows; r >= 1; --r) {
    std::vector<double> row;
    for (int c = 1; c <= world.cols; ++c) row.push_back(v(world.state_of(r, c)));
    csv.write_row(row);
  }
}

int run_command(const std::string& config_path, const std::optional<std::string>& mode_list,
                const std::optional<std::uint64_t>& seed, const std::optional<long>& horizon,
                const std::optional<int>& replicas, const std::optional<std::string>& out_dir,
                bool analysis, bool iid_sampling, bool serial) {
  CliSetup setup = load_setup(config_path);
  if (mode_list) {
    setup.modes.clear();
    std::stringstream ss(*mode_list);
    std::string item;
    while (std::getline(ss, item, ',')) setup.modes.push_back(item);
  }
  if (seed) setup.seed = *seed;
  if (horizon) setup.horizon = *horizon;
  if (replicas) setup.replicas = *replicas;
  if (out_dir) setup.out_dir = *out_dir;
  if (iid_sampling) setup.sampling = "iid";
  if (serial) setup.parallel = false;
  if (setup.modes.empty()) throw std::runtime_error("no modes requested");

  fs::create_directories(setup.out_dir);

  const Mdp world = build_world(setup.world);
  const FeatureMap features = build_features(setup.features, setup.world);
  const GridPolicies policies =
      build_policies(setup.world, setup.centers, setup.greedy_prob, setup.detour_prob,
                     setup.behavior_greedy_prob);
  const Network network = build_network(setup);

  ExperimentProblem problem;
  problem.mdp = world;
  problem.target = setup.target_name == "detour" ? policies.detour : policies.myopic;
  if (setup.target_name != "detour" && setup.target_name != "myopic")
    throw std::runtime_error("policies.target must be \"myopic\" or \"detour\"");
  problem.behaviors = policies.behaviors;
  problem.features = features;
  problem.gamma = setup.gamma;

  // Exact surfaces for both candidate policies (the comparison the agents
  // are ultimately making).
  const Vector v_myopic = exact_value(world, policies.myopic, setup.gamma);
  const Vector v_detour = exact_value(world, policies.detour, setup.gamma);
  write_surface(setup.out_dir + "/exact_value_myopic.csv", setup.world, v_myopic);
  write_surface(setup.out_dir + "/exact_value_detour.csv", setup.world, v_detour);

  const Vector eval_d = in_network_weighting(problem, network);

  nlohmann::json manifest;
  manifest["tool"] = "dgtd";
  manifest["version"] = "0.1.0";
  manifest["config"] = config_path;
  manifest["config_fnv1a"] = file_hash_hex(config_path);
  manifest["seed"] = setup.seed;
  manifest["horizon"] = setup.horizon;
  manifest["replicas"] = setup.replicas;
  manifest["sampling"] = setup.sampling;
  manifest["target"] = setup.target_name;
  manifest["modes"] = setup.modes;
  manifest["parallel"] = setup.parallel;
  std::vector<std::string> outputs{"exact_value_myopic.csv", "exact_value_detour.csv"};

  std::printf("%-16s %12s %12s %10s\n", "mode", "final J_PB", "median J_PB", "diverged");
  for (const std::string& mode_name : setup.modes) {
    const auto mode = mode_from_string(mode_name);
    if (!mode) throw std::runtime_error("unknown mode '" + mode_name + "'");
    RunOptions options;
    options.horizon = setup.horizon;
    options.replicas = setup.replicas;
    options.seed = setup.seed;
    options.mode = *mode;
    options.sampling = setup.sampling == "iid" ? Sampling::iid : Sampling::trajectory;
    options.mu = setup.mu;
    options.eta = setup.eta;
    options.record_stride = setup.record_stride;
    options.tail_fraction = setup.tail_fraction;
    options.eval_d = eval_d;
    const ExperimentTrace trace = setup.parallel
                                      ? run_experiment(problem, network, options)
                                      : run_experiment_serial(problem, network, options);

    const std::string curve = mode_name + "_learning_curve.csv";
    write_learning_curve(setup.out_dir + "/" + curve, trace);
    outputs.push_back(curve);

    // Final value surface per agent from the replica-averaged tail estimate.
    for (int a = 0; a < trace.num_agents; ++a) {
      Vector w_avg = Vector::Zero(features.num_features());
      for (const auto& rep : trace.tail_w) w_avg += rep.row(a).transpose();
      w_avg /= static_cast<double>(trace.replicas);
      const std::string surface =
          mode_name + "_value_agent" + std::to_string(a + 1) + ".csv";
      write_surface(setup.out_dir + "/" + surface, setup.world, features.X * w_avg);
      outputs.push_back(surface);
    }

    std::vector<double> finals;
    for (const auto& f : trace.final_jpb) finals.push_back(f.mean());
    std::sort(finals.begin(), finals.end());
    const double median = finals[finals.size() / 2];
    std::printf("%-16s %12.5g %12.5g %10ld\n", mode_name.c_str(),
                trace.jpb_mean(trace.jpb_mean.size() - 1), median, trace.total_diverged());
  }

  if (analysis) {
    AnalysisConfig cfg;
    cfg.mdp = world;
    cfg.target = problem.target;
    cfg.behaviors = policies.behaviors;
    cfg.features = features;
    cfg.C = network.C;
    cfg.gamma = setup.gamma;
    cfg.eta = setup.eta;
    cfg.mu = setup.mu;
    const AnalysisReport report = full_report(cfg);
    save_report(report, setup.out_dir + "/analysis_report.txt");
    outputs.push_back("analysis_report.txt");
    std::printf("analysis: rho_mean=%.6g (stable=%d) bias=%.4g mu_o=%.4g%s\n",
                report.rho_mean, report.mean_stable ? 1 : 0, report.bias_norm, report.mu_o,
                report.msd_available ? "" : (" [" + report.msd_note + "]").c_str());
  }

  manifest["outputs"] = outputs;
  std::ofstream mf(setup.out_dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion off-policy GTD over a foraging grid world"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run the configured experiment");
  std::string config_path;
  std::optional<std::string> mode_list, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<long> horizon;
  std::optional<int> replicas;
  bool analysis = false, iid = false, serial = false;
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--mode", mode_list, "comma-separated mode list");
  run->add_option("--seed", seed, "base seed override");
  run->add_option("--horizon", horizon, "iteration count override");
  run->add_option("--replicas", replicas, "replica count override");
  run->add_option("--out", out_dir, "output directory override");
  run->add_flag("--analysis", analysis, "also emit the closed-form analysis report");
  run->add_flag("--iid-sampling", iid, "draw states i.i.d. from each agent's stationary law");
  run->add_flag("--serial", serial, "use the serial reference runner");

  CLI11_PARSE(app, argc, argv);

  try {
    return run_command(config_path, mode_list, seed, horizon, replicas, out_dir, analysis,
                       iid, serial);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}
