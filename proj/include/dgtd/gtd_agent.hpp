#pragma once

#include <Eigen/Dense>

#include "dgtd/mdp.hpp"

namespace dgtd {

// A single agent's primal-dual parameter pair.  The stacked view
// col{theta, w} of length 2M is what the network analysis works with.
struct AgentParams {
  Vector theta;
  Vector w;

  static AgentParams zeros(int num_features) {
    return AgentParams{Vector::Zero(num_features), Vector::Zero(num_features)};
  }

  Vector stacked() const {
    Vector a(theta.size() + w.size());
    a << theta, w;
    return a;
  }

  static AgentParams from_stacked(const Vector& alpha) {
    const long m = alpha.size() / 2;
    return AgentParams{alpha.head(m), alpha.tail(m)};
  }

  double inf_norm() const {
    return std::max(theta.lpNorm<Eigen::Infinity>(), w.lpNorm<Eigen::Infinity>());
  }

  bool diverged(double threshold = 1e12) const {
    return !(inf_norm() <= threshold);  // catches NaN as well
  }
};

// One observed transition in feature space, with its importance weight.
struct SampleRealization {
  Vector x;       // feature of current state
  Vector x_next;  // feature of next state
  Vector delta;   // x - gamma * x_next
  double reward = 0.0;
  double xi = 1.0;

  static SampleRealization make(Vector x, Vector x_next, double gamma, double reward,
                                double xi);
};

// Per-sample coefficient pair: the adaptation step can be written as
// alpha - mu (G alpha + g), with mu_theta = eta * mu_w folded into the
// blocks.  The lower-right M x M block is identically zero.
struct SampleMoments {
  Matrix G;  // 2M x 2M
  Vector g;  // 2M
};

// xi(a,s) = pi(a|s) / phi(a|s).  Throws std::domain_error when the target
// policy has mass where the behavior policy has none.
double importance_weight(const Policy& pi, const Policy& phi, int a, int s);

// GTD2 update:
//   theta' = theta - mu_theta x (x^T theta + delta^T w - r) xi
//   w'     = w + mu_w delta x^T theta xi
AgentParams gtd2_step(const AgentParams& params, const SampleRealization& sample,
                      double mu_theta, double mu_w);

SampleMoments sample_moments(const SampleRealization& sample, double eta);

// Lifts a state transition to feature space.
SampleRealization realize(const Matrix& X, const Transition& t, double gamma, double xi);

}  // namespace dgtd
