#include "dgtd/diffusion_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dgtd {

// ---------------------------------------------------------------------------
// Topology

Adjacency Adjacency::complete(int n) {
  Adjacency adj;
  adj.num_agents = n;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) adj.edges.emplace_back(i, j);
  return adj;
}

Adjacency Adjacency::ring(int n) {
  if (n < 3) return complete(n);
  Adjacency adj;
  adj.num_agents = n;
  for (int i = 0; i < n; ++i) adj.edges.emplace_back(i, (i + 1) % n);
  return adj;
}

Adjacency Adjacency::random_connected(int n, double target_degree, std::uint64_t seed,
                                      int max_degree) {
  // target_degree counts the self-inclusive neighborhood size |N_k|.
  Adjacency adj;
  adj.num_agents = n;
  if (n <= 1) return adj;
  Rng rng(Rng::derive(seed, 0x746f706fULL, n));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.next_u64() % static_cast<std::uint64_t>(i + 1)]);

  std::vector<std::vector<char>> linked(n, std::vector<char>(n, 0));
  std::vector<int> degree(n, 0);
  auto link = [&](int a, int b) {
    adj.edges.emplace_back(a, b);
    linked[a][b] = linked[b][a] = 1;
    ++degree[a];
    ++degree[b];
  };
  // Random spanning tree first, then densify toward the target.
  for (int i = 1; i < n; ++i) {
    const int prev = order[rng.next_u64() % static_cast<std::uint64_t>(i)];
    link(order[i], prev);
  }
  const int graph_cap = std::max(1, max_degree - 1);
  const double wanted = std::clamp(target_degree - 1.0, 1.0, static_cast<double>(graph_cap));
  const long extra_budget = std::lround(wanted * n / 2.0) - (n - 1);
  long added = 0;
  for (long attempt = 0; attempt < 20L * n * n && added < extra_budget; ++attempt) {
    const int a = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n));
    const int b = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n));
    if (a == b || linked[a][b] || degree[a] >= graph_cap || degree[b] >= graph_cap) continue;
    link(a, b);
    ++added;
  }
  return adj;
}

bool Adjacency::connected() const {
  if (num_agents <= 0) return false;
  std::vector<std::vector<int>> nbr(num_agents);
  for (const auto& [a, b] : edges) {
    nbr[a].push_back(b);
    nbr[b].push_back(a);
  }
  std::vector<char> seen(num_agents, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int visited = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : nbr[v])
      if (!seen[w]) {
        seen[w] = 1;
        ++visited;
        stack.push_back(w);
      }
  }
  return visited == num_agents;
}

// ---------------------------------------------------------------------------
// Combination matrix

void Network::validate(double tol) const {
  if (num_agents <= 0 || C.rows() != num_agents || C.cols() != num_agents)
    throw std::invalid_argument("combination matrix shape mismatch");
  if ((C.array() < -tol).any())
    throw std::invalid_argument("combination weights must be nonnegative");
  for (int k = 0; k < num_agents; ++k) {
    if (std::abs(C.col(k).sum() - 1.0) > 1e-9)
      throw std::invalid_argument("column " + std::to_string(k) + " of C does not sum to 1");
    for (int l = 0; l < num_agents; ++l) {
      const bool in_support =
          std::binary_search(neighbors[k].begin(), neighbors[k].end(), l);
      if (!in_support && C(l, k) != 0.0)
        throw std::invalid_argument("C has weight outside the declared neighborhood");
    }
  }
  bool self_trust = false;
  for (int k = 0; k < num_agents; ++k) self_trust = self_trust || C(k, k) > 0.0;
  if (!self_trust)
    throw std::invalid_argument("no agent trusts its own adaptation (all c_kk are zero)");
  // Strong connectivity of the support graph; with a positive diagonal entry
  // this makes C primitive.
  std::vector<char> seen(num_agents, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int visited = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w = 0; w < num_agents; ++w)
      if (!seen[w] && (C(w, v) > 0.0 || C(v, w) > 0.0)) {
        seen[w] = 1;
        ++visited;
        stack.push_back(w);
      }
  }
  if (visited != num_agents) throw std::invalid_argument("network graph is not connected");
}

Network Network::identity(int n) {
  Network net;
  net.num_agents = n;
  net.C = Matrix::Identity(n, n);
  net.neighbors.resize(n);
  for (int k = 0; k < n; ++k) net.neighbors[k] = {k};
  return net;
}

Network averaging_combination_matrix(const Adjacency& adjacency) {
  const int n = adjacency.num_agents;
  if (n <= 0) throw std::invalid_argument("empty network");
  if (!adjacency.connected()) throw std::invalid_argument("network graph is not connected");
  Network net;
  net.num_agents = n;
  net.neighbors.assign(n, {});
  for (int k = 0; k < n; ++k) net.neighbors[k].push_back(k);
  for (const auto& [a, b] : adjacency.edges) {
    if (a == b) continue;
    net.neighbors[a].push_back(b);
    net.neighbors[b].push_back(a);
  }
  net.C = Matrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    auto& nbr = net.neighbors[k];
    std::sort(nbr.begin(), nbr.end());
    nbr.erase(std::unique(nbr.begin(), nbr.end()), nbr.end());
    const double w = 1.0 / static_cast<double>(nbr.size());
    for (int l : nbr) net.C(l, k) = w;
  }
  net.validate();
  return net;
}

Vector perron_eigenvector(const Matrix& C, double tol, long max_iterations) {
  if (C.rows() != C.cols() || C.rows() == 0) throw std::invalid_argument("C must be square");
  const int n = static_cast<int>(C.rows());
  if (n == 1) return Vector::Ones(1);
  // Primitivity: irreducible support plus at least one positive diagonal.
  {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int visited = 1;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w = 0; w < n; ++w)
        if (!seen[w] && (C(w, v) > 0.0 || C(v, w) > 0.0)) {
          seen[w] = 1;
          ++visited;
          stack.push_back(w);
        }
    }
    if (visited != n || C.diagonal().maxCoeff() <= 0.0)
      throw std::runtime_error("combination matrix is not primitive");
  }
  Vector tau = Vector::Constant(n, 1.0 / n);
  for (long it = 0; it < max_iterations; ++it) {
    Vector next = C * tau;
    next /= next.sum();
    const double res = (C * next - next).lpNorm<Eigen::Infinity>();
    tau = std::move(next);
    if (res <= tol) {
      if (tau.minCoeff() <= 0.0)
        throw std::runtime_error("combination matrix is not primitive");
      return tau;
    }
  }
  throw std::runtime_error("Perron eigenvector iteration did not converge");
}

// ---------------------------------------------------------------------------
// Rounds

NetworkState NetworkState::zeros(int num_agents, int num_features) {
  NetworkState st;
  st.agents.assign(num_agents, AgentParams::zeros(num_features));
  return st;
}

NetworkState diffusion_gtd_round(const NetworkState& state,
                                 const std::vector<SampleRealization>& samples,
                                 const Network& network, double mu, double eta) {
  const int n = network.num_agents;
  if (static_cast<int>(state.agents.size()) != n ||
      static_cast<int>(samples.size()) != n)
    throw std::invalid_argument("state/sample count does not match the network");
  std::vector<AgentParams> psi(n);
  for (int k = 0; k < n; ++k)
    psi[k] = gtd2_step(state.agents[k], samples[k], eta * mu, mu);
  NetworkState next;
  next.agents.resize(n);
  const long m = state.agents[0].theta.size();
  for (int k = 0; k < n; ++k) {
    Vector theta = Vector::Zero(m), w = Vector::Zero(m);
    for (int l : network.neighbors[k]) {
      theta += network.C(l, k) * psi[l].theta;
      w += network.C(l, k) * psi[l].w;
    }
    next.agents[k] = AgentParams{std::move(theta), std::move(w)};
  }
  return next;
}

// ---------------------------------------------------------------------------
// Experiment runner

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::diffusion: return "diffusion";
    case Mode::noncooperative: return "noncooperative";
    case Mode::centralized: return "centralized";
  }
  return "?";
}

std::optional<Mode> mode_from_string(const std::string& name) {
  if (name == "diffusion") return Mode::diffusion;
  if (name == "noncooperative") return Mode::noncooperative;
  if (name == "centralized") return Mode::centralized;
  return std::nullopt;
}

namespace {

struct Precomputed {
  int S = 0, A = 0, M = 0, N = 0;
  Matrix Xt;                                // M x S, feature columns
  std::vector<DiscreteSampler> action;      // N*S
  std::vector<DiscreteSampler> next_state;  // S*A
  std::vector<DiscreteSampler> initial;     // N, draws from d_k
  std::vector<Vector> d;                    // per-agent stationary distribution
  std::vector<Matrix> xi;                   // N matrices S x A
  Matrix B_eval;
  Vector b_eval;
  Matrix Minv_eval;  // pseudo-inverse of X^T D X for the evaluation weighting
  Vector eval_d;
  std::vector<long> record_iters;
  long tail_start = 0;  // first post-update iteration included in tail stats
  long tail_count = 0;
};

struct ReplicaResult {
  Matrix jpb;                       // records x agents
  std::vector<long> diverged_iter;  // -1 if never
  Matrix tail_theta, tail_w;        // agents x M
  Matrix final_w;                   // agents x M
  Vector final_jpb;
  Vector msd_tail;                  // per agent (empty if unused)
};

Precomputed build_precomputed(const ExperimentProblem& problem, const Network& network,
                              const RunOptions& options) {
  problem.mdp.validate(1e-9);
  problem.target.validate(1e-9);
  const int N = network.num_agents;
  if (static_cast<int>(problem.behaviors.size()) != N)
    throw std::invalid_argument("need one behavior policy per agent");
  Precomputed pre;
  pre.S = problem.mdp.num_states;
  pre.A = problem.mdp.num_actions;
  pre.M = problem.features.num_features();
  pre.N = N;
  if (problem.features.num_states() != pre.S)
    throw std::invalid_argument("feature map does not match the state count");
  if (!(options.mu > 0.0 && options.eta > 0.0))
    throw std::invalid_argument("mu and eta must be positive");
  if (options.replicas < 1) throw std::invalid_argument("need at least one replica");
  if (options.horizon < 0) throw std::invalid_argument("horizon must be nonnegative");
  if (options.record_stride < 1) throw std::invalid_argument("record_stride must be >= 1");
  if (options.msd_reference.size() != 0 && options.msd_reference.size() != 2 * pre.M)
    throw std::invalid_argument("msd_reference must have length 2M");

  pre.Xt = problem.features.X.transpose();
  pre.next_state.reserve(static_cast<std::size_t>(pre.S) * pre.A);
  for (long row = 0; row < problem.mdp.kernel.rows(); ++row)
    pre.next_state.emplace_back(problem.mdp.kernel.row(row));

  pre.action.reserve(static_cast<std::size_t>(N) * pre.S);
  pre.xi.resize(N);
  pre.d.resize(N);
  for (int k = 0; k < N; ++k) {
    const Policy& phi = problem.behaviors[k];
    phi.validate(1e-9);
    if (phi.num_states() != pre.S || phi.num_actions() != pre.A)
      throw std::invalid_argument("behavior policy shape mismatch");
    for (int s = 0; s < pre.S; ++s) pre.action.emplace_back(phi.probs.row(s));
    // Ratios are only consumed at (s, a) pairs the behavior can emit.
    pre.xi[k] = Matrix::Zero(pre.S, pre.A);
    for (int s = 0; s < pre.S; ++s)
      for (int a = 0; a < pre.A; ++a)
        if (phi.probs(s, a) > 0.0)
          pre.xi[k](s, a) = problem.target.probs(s, a) / phi.probs(s, a);
    const Matrix P_phi = induced_transition_matrix(problem.mdp, phi);
    pre.d[k] = stationary_distribution(P_phi, 1e-12, /*require_irreducible=*/false);
    pre.initial.emplace_back(pre.d[k].transpose());
  }

  pre.eval_d = options.eval_d;
  if (pre.eval_d.size() == 0) {
    const Vector tau = perron_eigenvector(network.C);
    pre.eval_d = Vector::Zero(pre.S);
    for (int k = 0; k < N; ++k) pre.eval_d += tau(k) * pre.d[k];
  } else if (pre.eval_d.size() != pre.S) {
    throw std::invalid_argument("eval_d must have one entry per state");
  }

  const Matrix P_pi = induced_transition_matrix(problem.mdp, problem.target);
  const Vector r_pi = expected_reward(problem.mdp, problem.target);
  const ObjectiveContext ctx =
      ObjectiveContext::make(problem.features, pre.eval_d, P_pi, r_pi, problem.gamma);
  pre.B_eval = ctx.B;
  pre.b_eval = ctx.XtDr;
  pre.Minv_eval =
      Eigen::CompleteOrthogonalDecomposition<Matrix>(ctx.XtDX).pseudoInverse();

  const long T = options.horizon;
  pre.record_iters.push_back(0);
  for (long it = options.record_stride; it <= T; it += options.record_stride)
    pre.record_iters.push_back(it);
  if (pre.record_iters.back() != T && T > 0) pre.record_iters.push_back(T);

  const long tail_len =
      T > 0 ? std::max<long>(1, static_cast<long>(options.tail_fraction * static_cast<double>(T)))
            : 0;
  pre.tail_start = T - tail_len;
  pre.tail_count = tail_len;
  return pre;
}

double eval_jpb(const Precomputed& pre, const Eigen::Ref<const Vector>& w) {
  const Vector res = pre.b_eval - pre.B_eval * w;
  return std::max(res.dot(pre.Minv_eval * res), 0.0);
}

ReplicaResult run_replica(const ExperimentProblem& problem, const Network& network,
                          const RunOptions& options, const Precomputed& pre, int rep) {
  const int N = pre.N, S = pre.S, A = pre.A, M = pre.M;
  const int na = options.mode == Mode::centralized ? 1 : N;
  const bool iid = options.sampling == Sampling::iid;
  const bool track_msd = options.msd_reference.size() == 2 * M;
  const long T = options.horizon;

  std::vector<Rng> rng;
  rng.reserve(N);
  for (int k = 0; k < N; ++k) rng.emplace_back(Rng::derive(options.seed, rep, k));
  std::vector<int> cur(N);
  for (int k = 0; k < N; ++k) cur[k] = pre.initial[k].draw(rng[k]);

  Matrix theta = Matrix::Zero(M, na), w = Matrix::Zero(M, na);
  Matrix psi_theta = Matrix::Zero(M, na), psi_w = Matrix::Zero(M, na);
  Matrix next_theta = Matrix::Zero(M, na), next_w = Matrix::Zero(M, na);
  Vector x(M), xn(M), delta(M);

  ReplicaResult res;
  res.jpb.resize(static_cast<long>(pre.record_iters.size()), na);
  res.diverged_iter.assign(na, -1);
  Matrix tail_theta_sum = Matrix::Zero(M, na), tail_w_sum = Matrix::Zero(M, na);
  Vector msd_sum = Vector::Zero(na);
  std::vector<char> frozen(na, 0);

  std::size_t next_record = 0;
  auto record = [&](long iter) {
    if (next_record < pre.record_iters.size() && pre.record_iters[next_record] == iter) {
      for (int a = 0; a < na; ++a) res.jpb(static_cast<long>(next_record), a) = eval_jpb(pre, w.col(a));
      ++next_record;
    }
  };
  record(0);

  const double mu_w_step = options.mode == Mode::centralized ? options.mu / N : options.mu;
  const double mu_t_step = options.eta * mu_w_step;

  for (long i = 0; i < T; ++i) {
    for (int k = 0; k < N; ++k) {
      const int target_col = options.mode == Mode::centralized ? 0 : k;
      const int s = iid ? pre.initial[k].draw(rng[k]) : cur[k];
      const int a = pre.action[static_cast<std::size_t>(k) * S + s].draw(rng[k]);
      const long row = static_cast<long>(s) * A + a;
      const int s2 = pre.next_state[static_cast<std::size_t>(row)].draw(rng[k]);
      cur[k] = s2;
      if (frozen[target_col]) continue;
      const double reward = problem.mdp.reward(row, s2);
      const double xi = pre.xi[k](s, a);
      x = pre.Xt.col(s);
      xn = pre.Xt.col(s2);
      delta = x - problem.gamma * xn;
      if (options.mode == Mode::centralized) {
        // Fusion baseline: one agent absorbs all N streams sequentially at mu/N.
        const double xtheta = x.dot(theta.col(0));
        const double bell = xtheta + delta.dot(w.col(0)) - reward;
        theta.col(0) -= (mu_t_step * xi * bell) * x;
        w.col(0) += (mu_w_step * xi * xtheta) * delta;
      } else {
        const double xtheta = x.dot(theta.col(k));
        const double bell = xtheta + delta.dot(w.col(k)) - reward;
        psi_theta.col(k) = theta.col(k) - (mu_t_step * xi * bell) * x;
        psi_w.col(k) = w.col(k) + (mu_w_step * xi * xtheta) * delta;
      }
    }

    if (options.mode == Mode::diffusion) {
      for (int k = 0; k < na; ++k) {
        if (frozen[k]) {
          next_theta.col(k) = theta.col(k);
          next_w.col(k) = w.col(k);
          continue;
        }
        next_theta.col(k).setZero();
        next_w.col(k).setZero();
        for (int l : network.neighbors[k]) {
          const double c = network.C(l, k);
          // Frozen neighbors contribute their held estimate.
          if (frozen[l]) {
            next_theta.col(k) += c * theta.col(l);
            next_w.col(k) += c * w.col(l);
          } else {
            next_theta.col(k) += c * psi_theta.col(l);
            next_w.col(k) += c * psi_w.col(l);
          }
        }
      }
      theta.swap(next_theta);
      w.swap(next_w);
    } else if (options.mode == Mode::noncooperative) {
      for (int k = 0; k < na; ++k) {
        if (frozen[k]) continue;
        theta.col(k) = psi_theta.col(k);
        w.col(k) = psi_w.col(k);
      }
    }
    // centralized already updated in place

    for (int k = 0; k < na; ++k) {
      if (frozen[k]) continue;
      const double norm = std::max(theta.col(k).lpNorm<Eigen::Infinity>(),
                                   w.col(k).lpNorm<Eigen::Infinity>());
      if (!(norm <= options.divergence_threshold)) {
        frozen[k] = 1;
        res.diverged_iter[k] = i + 1;
      }
    }

    if (i >= pre.tail_start) {
      tail_theta_sum += theta;
      tail_w_sum += w;
      if (track_msd) {
        for (int k = 0; k < na; ++k) {
          const double dt =
              (options.msd_reference.head(M) - theta.col(k)).squaredNorm() +
              (options.msd_reference.tail(M) - w.col(k)).squaredNorm();
          msd_sum(k) += dt;
        }
      }
    }
    record(i + 1);
  }

  if (pre.tail_count > 0) {
    res.tail_theta = (tail_theta_sum / static_cast<double>(pre.tail_count)).transpose();
    res.tail_w = (tail_w_sum / static_cast<double>(pre.tail_count)).transpose();
  } else {
    res.tail_theta = theta.transpose();
    res.tail_w = w.transpose();
  }
  res.final_w = w.transpose();
  res.final_jpb.resize(na);
  for (int a = 0; a < na; ++a) res.final_jpb(a) = eval_jpb(pre, w.col(a));
  if (track_msd && pre.tail_count > 0)
    res.msd_tail = msd_sum / static_cast<double>(pre.tail_count);
  else if (track_msd)
    res.msd_tail = Vector::Zero(na);
  return res;
}

ExperimentTrace reduce_results(const RunOptions& options, const Precomputed& pre,
                               std::vector<ReplicaResult>&& results) {
  const int na = options.mode == Mode::centralized ? 1 : pre.N;
  const int R = options.replicas;
  ExperimentTrace trace;
  trace.mode = options.mode;
  trace.sampling = options.sampling;
  trace.horizon = options.horizon;
  trace.replicas = R;
  trace.record_stride = options.record_stride;
  trace.num_agents = na;
  trace.record_iters = pre.record_iters;
  trace.eval_d = pre.eval_d;

  const long nrec = static_cast<long>(pre.record_iters.size());
  trace.jpb = Matrix::Zero(nrec, na);
  for (const auto& r : results) trace.jpb += r.jpb;
  trace.jpb /= static_cast<double>(R);
  trace.jpb_mean = trace.jpb.rowwise().mean();

  trace.diverged_count.assign(static_cast<std::size_t>(nrec), 0);
  trace.diverged.resize(R);
  for (int rep = 0; rep < R; ++rep) {
    trace.diverged[rep].assign(na, 0);
    for (int a = 0; a < na; ++a) {
      const long it = results[rep].diverged_iter[a];
      if (it < 0) continue;
      trace.diverged[rep][a] = 1;
      for (long r = 0; r < nrec; ++r)
        if (pre.record_iters[static_cast<std::size_t>(r)] >= it)
          ++trace.diverged_count[static_cast<std::size_t>(r)];
    }
  }

  trace.tail_w.reserve(R);
  trace.tail_theta.reserve(R);
  trace.final_w.reserve(R);
  trace.final_jpb.reserve(R);
  for (auto& r : results) {
    trace.tail_w.push_back(std::move(r.tail_w));
    trace.tail_theta.push_back(std::move(r.tail_theta));
    trace.final_w.push_back(std::move(r.final_w));
    trace.final_jpb.push_back(std::move(r.final_jpb));
  }

  if (options.msd_reference.size() > 0) {
    trace.msd_per_agent = Vector::Zero(na);
    for (const auto& r : results) trace.msd_per_agent += r.msd_tail;
    trace.msd_per_agent /= static_cast<double>(R);
    trace.msd_estimate = trace.msd_per_agent.mean();
  }
  return trace;
}

}  // namespace

long ExperimentTrace::total_diverged() const {
  long n = 0;
  for (const auto& rep : diverged)
    for (char c : rep) n += c != 0;
  return n;
}

Vector ExperimentTrace::mean_tail_w() const {
  Vector acc = Vector::Zero(tail_w.front().cols());
  long count = 0;
  for (const auto& rep : tail_w) {
    for (long a = 0; a < rep.rows(); ++a) {
      acc += rep.row(a).transpose();
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

ExperimentTrace run_experiment(const ExperimentProblem& problem, const Network& network,
                               const RunOptions& options) {
  const Precomputed pre = build_precomputed(problem, network, options);
  std::vector<ReplicaResult> results(options.replicas);
#pragma omp parallel for schedule(dynamic)
  for (int rep = 0; rep < options.replicas; ++rep)
    results[rep] = run_replica(problem, network, options, pre, rep);
  return reduce_results(options, pre, std::move(results));
}

ExperimentTrace run_experiment_serial(const ExperimentProblem& problem,
                                      const Network& network, const RunOptions& options) {
  const Precomputed pre = build_precomputed(problem, network, options);
  std::vector<ReplicaResult> results(options.replicas);
  for (int rep = 0; rep < options.replicas; ++rep)
    results[rep] = run_replica(problem, network, options, pre, rep);
  return reduce_results(options, pre, std::move(results));
}

Vector in_network_weighting(const ExperimentProblem& problem, const Network& network) {
  const Vector tau = perron_eigenvector(network.C);
  Vector dbar = Vector::Zero(problem.mdp.num_states);
  for (int k = 0; k < network.num_agents; ++k) {
    const Matrix P_phi = induced_transition_matrix(problem.mdp, problem.behaviors[k]);
    dbar += tau(k) * stationary_distribution(P_phi, 1e-12, /*require_irreducible=*/false);
  }
  return dbar;
}

}  // namespace dgtd
