#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dgtd/gtd_agent.hpp"
#include "dgtd/mdp.hpp"
#include "dgtd/value_objective.hpp"

namespace dgtd {

// Undirected topology over agents; self-loops are implicit everywhere.
struct Adjacency {
  int num_agents = 0;
  std::vector<std::pair<int, int>> edges;  // 0-based, no self-loops listed

  static Adjacency complete(int n);
  static Adjacency ring(int n);
  // Connected random graph: a random spanning tree plus extra edges until the
  // average degree reaches target_degree (degrees clamped to [2, max_degree]).
  static Adjacency random_connected(int n, double target_degree, std::uint64_t seed,
                                    int max_degree = 9);

  bool connected() const;
};

// Combination matrix C with entry (l, k) the weight agent k places on
// neighbor l; columns sum to one.
struct Network {
  int num_agents = 0;
  Matrix C;
  std::vector<std::vector<int>> neighbors;  // support of column k, sorted

  // Checks left-stochasticity, support/graph agreement, c_kk > 0 for some k,
  // connectivity; these are what make C primitive.
  void validate(double tol = 1e-12) const;

  static Network identity(int n);
};

// c_lk = 1 / |N_k| for l in the (self-inclusive) neighborhood of k.
Network averaging_combination_matrix(const Adjacency& adjacency);

// Positive tau with C tau = tau and sum(tau) = 1.
Vector perron_eigenvector(const Matrix& C, double tol = 1e-12, long max_iterations = 1000000);

struct NetworkState {
  std::vector<AgentParams> agents;

  static NetworkState zeros(int num_agents, int num_features);
};

// One synchronous adapt-then-combine round: every agent runs gtd2_step on
// its own sample (mu_theta = eta * mu), then forms the convex combination
// of its neighborhood's intermediate estimates.
NetworkState diffusion_gtd_round(const NetworkState& state,
                                 const std::vector<SampleRealization>& samples,
                                 const Network& network, double mu, double eta);

enum class Mode { diffusion, noncooperative, centralized };
enum class Sampling { iid, trajectory };

const char* to_string(Mode mode);
std::optional<Mode> mode_from_string(const std::string& name);

// The shared learning problem: one MDP template, a common target policy,
// one behavior policy per agent, shared features and discount.
struct ExperimentProblem {
  Mdp mdp;
  Policy target;
  std::vector<Policy> behaviors;
  FeatureMap features;
  double gamma = 0.95;
};

struct RunOptions {
  long horizon = 0;
  int replicas = 1;
  std::uint64_t seed = 0;
  Mode mode = Mode::diffusion;
  Sampling sampling = Sampling::iid;
  double mu = 1e-3;
  double eta = 1.0;
  long record_stride = 1;
  double tail_fraction = 0.5;       // trailing window for time averages
  double divergence_threshold = 1e12;
  Vector eval_d;                    // J_PB weighting; empty = Perron-weighted in-network
  Vector msd_reference;             // optional alpha_o; enables squared-deviation tracking
};

struct ExperimentTrace {
  Mode mode = Mode::diffusion;
  Sampling sampling = Sampling::iid;
  long horizon = 0;
  int replicas = 0;
  long record_stride = 1;
  int num_agents = 0;  // 1 in centralized mode

  std::vector<long> record_iters;
  Matrix jpb;                        // records x agents, replica-averaged
  Vector jpb_mean;                   // records (mean over agents)
  std::vector<long> diverged_count;  // records; cumulative over (replica, agent)

  std::vector<std::vector<char>> diverged;  // [replica][agent]
  std::vector<Matrix> tail_w;               // [replica], agents x M
  std::vector<Matrix> tail_theta;           // [replica], agents x M
  std::vector<Matrix> final_w;              // [replica], agents x M
  std::vector<Vector> final_jpb;            // [replica], per agent

  Vector eval_d;                 // weighting the J_PB columns were scored on
  double msd_estimate = std::numeric_limits<double>::quiet_NaN();
  Vector msd_per_agent;          // empty unless msd_reference was set

  long total_diverged() const;
  Vector mean_tail_w() const;    // averaged over replicas and agents
};

// Replica loop parallelized with OpenMP; replicas are independent streams,
// reduced in replica order, so the result is identical to the serial
// reference below for any thread count.
ExperimentTrace run_experiment(const ExperimentProblem& problem, const Network& network,
                               const RunOptions& options);

// Plain-loop reference implementation kept for testing the parallel path.
ExperimentTrace run_experiment_serial(const ExperimentProblem& problem,
                                      const Network& network, const RunOptions& options);

// The Perron-weighted in-network weighting sum_k tau_k d^{phi_k} used as the
// default J_PB evaluation weighting.
Vector in_network_weighting(const ExperimentProblem& problem, const Network& network);

}  // namespace dgtd
