#include "dgtd/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dgtd/io.hpp"

namespace dgtd {

namespace {

void check_rows_stochastic(const Matrix& m, double tol, const char* what) {
  if ((m.array() < -tol).any())
    throw std::invalid_argument(std::string(what) + " has negative entries");
  for (long i = 0; i < m.rows(); ++i) {
    const double s = m.row(i).sum();
    if (std::abs(s - 1.0) > tol)
      throw std::invalid_argument(std::string(what) + " row " + std::to_string(i) +
                                  " sums to " + std::to_string(s) + ", expected 1");
  }
}

// Strong connectivity of the support graph via forward/backward reachability.
bool strongly_connected(const Matrix& P) {
  const long n = P.rows();
  auto reach = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::vector<long> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const long v = stack.back();
      stack.pop_back();
      for (long w = 0; w < n; ++w) {
        const double p = forward ? P(v, w) : P(w, v);
        if (p > 0.0 && !seen[w]) {
          seen[w] = 1;
          stack.push_back(w);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reach(true) && reach(false);
}

}  // namespace

void Mdp::validate(double tol) const {
  if (num_states <= 0 || num_actions <= 0)
    throw std::invalid_argument("Mdp needs positive state and action counts");
  const long sa = static_cast<long>(num_states) * num_actions;
  if (kernel.rows() != sa || kernel.cols() != num_states)
    throw std::invalid_argument("Mdp kernel shape mismatch");
  if (reward.rows() != sa || reward.cols() != num_states)
    throw std::invalid_argument("Mdp reward shape mismatch");
  check_rows_stochastic(kernel, tol, "transition kernel");
  if (!reward.allFinite()) throw std::invalid_argument("Mdp reward has non-finite entries");
}

void Policy::validate(double tol) const {
  check_rows_stochastic(probs, tol, "policy");
}

Policy Policy::uniform(int num_states, int num_actions) {
  Policy p;
  p.probs = Matrix::Constant(num_states, num_actions, 1.0 / num_actions);
  return p;
}

Matrix induced_transition_matrix(const Mdp& mdp, const Policy& pi) {
  const int S = mdp.num_states, A = mdp.num_actions;
  if (pi.num_states() != S || pi.num_actions() != A)
    throw std::invalid_argument("policy shape does not match MDP");
  Matrix P = Matrix::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      P.row(s) += pi.probs(s, a) * mdp.kernel.row(static_cast<long>(s) * A + a);
  return P;
}

Vector expected_reward(const Mdp& mdp, const Policy& pi) {
  const int S = mdp.num_states, A = mdp.num_actions;
  if (pi.num_states() != S || pi.num_actions() != A)
    throw std::invalid_argument("policy shape does not match MDP");
  Vector r = Vector::Zero(S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const long row = static_cast<long>(s) * A + a;
      r(s) += pi.probs(s, a) * mdp.kernel.row(row).dot(mdp.reward.row(row));
    }
  return r;
}

Vector stationary_distribution(const Matrix& P, double tol, bool require_irreducible,
                               long max_iterations) {
  if (P.rows() != P.cols()) throw std::invalid_argument("P must be square");
  const long n = P.rows();
  check_rows_stochastic(P, 1e-9, "transition matrix");
  if (require_irreducible && !strongly_connected(P))
    throw std::runtime_error(
        "no unique stationary distribution: chain may be reducible or periodic");
  Vector d = Vector::Constant(n, 1.0 / static_cast<double>(n));
  const Matrix Pt = P.transpose();
  for (long it = 0; it < max_iterations; ++it) {
    Vector next = Pt * d;
    next /= next.sum();
    const double res = (Pt * next - next).lpNorm<Eigen::Infinity>();
    d = std::move(next);
    if (res <= tol) {
      d = d.cwiseMax(0.0);
      d /= d.sum();
      return d;
    }
  }
  throw std::runtime_error(
      "stationary distribution did not converge: chain may be reducible or periodic");
}

Vector exact_value(const Mdp& mdp, const Policy& pi, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  const Matrix P = induced_transition_matrix(mdp, pi);
  const Vector r = expected_reward(mdp, pi);
  const long S = P.rows();
  const Matrix A = Matrix::Identity(S, S) - gamma * P;
  const Vector v = A.partialPivLu().solve(r);
  const double scale = std::max(r.lpNorm<Eigen::Infinity>(), 1e-300);
  if ((A * v - r).lpNorm<Eigen::Infinity>() > 1e-9 * scale)
    throw std::runtime_error("value solve residual too large");
  return v;
}

ChainQuantities chain_quantities(const Mdp& mdp, const Policy& pi) {
  ChainQuantities cq;
  cq.P_pi = induced_transition_matrix(mdp, pi);
  cq.r_pi = expected_reward(mdp, pi);
  cq.d = stationary_distribution(cq.P_pi);
  return cq;
}

int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, double u) {
  double c = 0.0;
  int last_positive = 0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs(i) > 0.0) last_positive = i;
    c += probs(i);
    if (u < c) return i;
  }
  return last_positive;  // u landed past the accumulated total
}

DiscreteSampler::DiscreteSampler(const Eigen::Ref<const Eigen::RowVectorXd>& probs) {
  cumulative_.resize(static_cast<std::size_t>(probs.size()));
  double c = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs(i) > 0.0) last_positive_ = i;
    c += probs(i);
    cumulative_[static_cast<std::size_t>(i)] = c;
  }
}

int DiscreteSampler::draw(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) return last_positive_;
  return static_cast<int>(it - cumulative_.begin());
}

Transition sample_transition(const Mdp& mdp, const Policy& behavior, int s, Rng& rng) {
  const int a = sample_index(behavior.probs.row(s), rng.uniform());
  const long row = static_cast<long>(s) * mdp.num_actions + a;
  const int s_next = sample_index(mdp.kernel.row(row), rng.uniform());
  return Transition{s, a, s_next, mdp.reward(row, s_next)};
}

Mdp mdp_from_text(const std::string& kernel_path, const std::string& reward_path,
                  int num_actions) {
  Mdp mdp;
  mdp.kernel = load_matrix_text(kernel_path);
  mdp.reward = load_matrix_text(reward_path);
  mdp.num_actions = num_actions;
  if (num_actions <= 0 || mdp.kernel.rows() % num_actions != 0)
    throw std::invalid_argument("kernel row count is not a multiple of num_actions");
  mdp.num_states = static_cast<int>(mdp.kernel.rows() / num_actions);
  mdp.validate(1e-9);
  return mdp;
}

Policy policy_from_text(const std::string& path) {
  Policy p;
  p.probs = load_matrix_text(path);
  p.validate(1e-9);
  return p;
}

}  // namespace dgtd
