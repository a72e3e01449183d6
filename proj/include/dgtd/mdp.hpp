#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dgtd/rng.hpp"

namespace dgtd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Finite MDP with dense transition kernel and per-transition rewards.
// The (s, a) pair indexes row s * num_actions + a of both tensors.
struct Mdp {
  int num_states = 0;
  int num_actions = 0;
  Matrix kernel;  // (S*A) x S, each row a probability vector
  Matrix reward;  // (S*A) x S, finite entries

  double prob(int s, int a, int s_next) const {
    return kernel(static_cast<long>(s) * num_actions + a, s_next);
  }
  double reward_at(int s, int a, int s_next) const {
    return reward(static_cast<long>(s) * num_actions + a, s_next);
  }

  // Throws std::invalid_argument on shape/stochasticity violations.
  void validate(double tol = 1e-12) const;
};

// Row s holds the action distribution used in state s.
struct Policy {
  Matrix probs;  // S x A

  int num_states() const { return static_cast<int>(probs.rows()); }
  int num_actions() const { return static_cast<int>(probs.cols()); }
  void validate(double tol = 1e-12) const;

  static Policy uniform(int num_states, int num_actions);
};

struct ChainQuantities {
  Matrix P_pi;  // S x S, row stochastic
  Vector r_pi;  // S
  Vector d;     // stationary distribution of P_pi
};

struct Transition {
  int s = 0;
  int a = 0;
  int s_next = 0;
  double reward = 0.0;
};

// P^pi(s,s') = sum_a P(s'|s,a) pi(a|s)
Matrix induced_transition_matrix(const Mdp& mdp, const Policy& pi);

// r^pi(s) = sum_a pi(a|s) sum_{s'} P(s'|s,a) r(s,a,s')
Vector expected_reward(const Mdp& mdp, const Policy& pi);

// Stationary distribution of a row-stochastic P by power iteration on P^T.
// With require_irreducible the support graph must be strongly connected;
// without it, chains with a single recurrent class are accepted and the
// returned vector is zero on transient states.
Vector stationary_distribution(const Matrix& P, double tol = 1e-12,
                               bool require_irreducible = true,
                               long max_iterations = 1000000);

// Solves (I - gamma P^pi) v = r^pi.
Vector exact_value(const Mdp& mdp, const Policy& pi, double gamma);

ChainQuantities chain_quantities(const Mdp& mdp, const Policy& pi);

// Inverse-CDF draw: smallest index i with u < sum_{j<=i} p_j.  The linear
// scan and the precomputed table below accumulate partial sums in the same
// order, so they pick identical indices for identical u.
int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, double u);

class DiscreteSampler {
 public:
  DiscreteSampler() = default;
  explicit DiscreteSampler(const Eigen::Ref<const Eigen::RowVectorXd>& probs);
  int draw(Rng& rng) const;

 private:
  std::vector<double> cumulative_;
  int last_positive_ = 0;
};

// One environment step: a ~ behavior(.|s), s' ~ P(.|s,a).
Transition sample_transition(const Mdp& mdp, const Policy& behavior, int s, Rng& rng);

// Builds an Mdp from dense text files shaped like Mdp::kernel / Mdp::reward.
Mdp mdp_from_text(const std::string& kernel_path, const std::string& reward_path,
                  int num_actions);
Policy policy_from_text(const std::string& path);

}  // namespace dgtd
