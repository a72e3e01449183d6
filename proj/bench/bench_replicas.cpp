// Times the OpenMP replica runner against the serial reference on a mid-size
// problem and checks that both produce the same trace.

#include <chrono>
#include <cstdio>

#include "dgtd/diffusion_net.hpp"
#include "dgtd/gridworld.hpp"

using namespace dgtd;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main() {
  GridWorldSpec world_spec;
  world_spec.rows = 10;
  world_spec.cols = 10;
  world_spec.food_row = 10;
  world_spec.food_col = 10;
  world_spec.predator_row_min = 4;
  world_spec.predator_row_max = 7;
  world_spec.predator_col_min = 3;
  world_spec.predator_col_max = 10;

  GridFeatureSpec feature_spec;
  feature_spec.markers_per_axis = 4;
  feature_spec.width = 0.02;

  const std::vector<int> centers{95, 62, 28, 5};
  const GridPolicies policies = build_policies(world_spec, centers);

  ExperimentProblem problem;
  problem.mdp = build_world(world_spec);
  problem.target = policies.myopic;
  problem.behaviors = policies.behaviors;
  problem.features = build_features(feature_spec, world_spec);
  problem.gamma = 0.9;

  const Network network =
      averaging_combination_matrix(Adjacency::ring(static_cast<int>(centers.size())));

  RunOptions options;
  options.horizon = 20000;
  options.replicas = 16;
  options.seed = 11;
  options.mode = Mode::diffusion;
  options.sampling = Sampling::trajectory;
  options.mu = 5e-3;
  options.eta = 0.5;
  options.record_stride = 100;

  auto t0 = std::chrono::steady_clock::now();
  const ExperimentTrace serial = run_experiment_serial(problem, network, options);
  const double t_serial = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const ExperimentTrace parallel = run_experiment(problem, network, options);
  const double t_parallel = seconds_since(t0);

  const double diff = (serial.jpb - parallel.jpb).cwiseAbs().maxCoeff();
  std::printf("replicas=%d horizon=%ld agents=%d\n", options.replicas, options.horizon,
              network.num_agents);
  std::printf("serial reference: %8.3f s\n", t_serial);
  std::printf("openmp runner:    %8.3f s  (speedup %.2fx)\n", t_parallel,
              t_serial / t_parallel);
  std::printf("max |trace difference| = %g  (%s)\n", diff,
              diff == 0.0 ? "bit-identical" : "MISMATCH");
  return diff == 0.0 ? 0 : 1;
}
