#pragma once

// Shared generators and small oracles for the test suites.  Everything here
// is deliberately independent of the library internals it is used to check:
// expectations are brute-force sums over enumerated outcomes.

#include <functional>
#include <vector>

#include "dgtd/gtd_agent.hpp"
#include "dgtd/mdp.hpp"
#include "dgtd/rng.hpp"
#include "dgtd/value_objective.hpp"

namespace dgtd::testing {

// Dense random MDP with strictly positive kernel rows (irreducible under any
// positive policy) and rewards in [-1, 1].
inline Mdp random_mdp(int S, int A, Rng& rng) {
  Mdp mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.kernel.resize(static_cast<long>(S) * A, S);
  mdp.reward.resize(static_cast<long>(S) * A, S);
  for (long r = 0; r < mdp.kernel.rows(); ++r) {
    double total = 0.0;
    for (int c = 0; c < S; ++c) {
      mdp.kernel(r, c) = 0.05 + rng.uniform();
      total += mdp.kernel(r, c);
      mdp.reward(r, c) = 2.0 * rng.uniform() - 1.0;
    }
    mdp.kernel.row(r) /= total;
  }
  return mdp;
}

inline Policy random_policy(int S, int A, Rng& rng) {
  Policy p;
  p.probs.resize(S, A);
  for (int s = 0; s < S; ++s) {
    double total = 0.0;
    for (int a = 0; a < A; ++a) {
      p.probs(s, a) = 0.05 + rng.uniform();
      total += p.probs(s, a);
    }
    p.probs.row(s) /= total;
  }
  return p;
}

inline FeatureMap random_features(int S, int M, Rng& rng) {
  Matrix X(S, M);
  for (int s = 0; s < S; ++s)
    for (int m = 0; m < M; ++m) X(s, m) = 2.0 * rng.uniform() - 1.0;
  return FeatureMap::checked(std::move(X));
}

// Visits every (s, a, s') outcome of the one-step sample distribution
// d(s) phi(a|s) P(s'|s,a) with its probability.
inline void for_each_sample(const Mdp& mdp, const Policy& phi, const Vector& d,
                            const std::function<void(double p, const Transition&)>& fn) {
  for (int s = 0; s < mdp.num_states; ++s) {
    if (d(s) <= 0.0) continue;
    for (int a = 0; a < mdp.num_actions; ++a) {
      if (phi.probs(s, a) <= 0.0) continue;
      const long row = static_cast<long>(s) * mdp.num_actions + a;
      for (int s2 = 0; s2 < mdp.num_states; ++s2) {
        const double pt = mdp.kernel(row, s2);
        if (pt <= 0.0) continue;
        fn(d(s) * phi.probs(s, a) * pt, Transition{s, a, s2, mdp.reward(row, s2)});
      }
    }
  }
}

}  // namespace dgtd::testing
