#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "dgtd/mdp.hpp"
#include "test_support.hpp"

using namespace dgtd;
using dgtd::testing::random_mdp;
using dgtd::testing::random_policy;

TEST_CASE("induced transition matrix selects kernel rows under a one-hot policy") {
  Rng rng(1);
  const Mdp mdp = random_mdp(4, 3, rng);
  Policy det;
  det.probs = Matrix::Zero(4, 3);
  for (int s = 0; s < 4; ++s) det.probs(s, s % 3) = 1.0;
  const Matrix P = induced_transition_matrix(mdp, det);
  for (int s = 0; s < 4; ++s)
    CHECK((P.row(s) - mdp.kernel.row(s * 3 + s % 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("induced transition matrix averages slices under a uniform policy") {
  Rng rng(2);
  const Mdp mdp = random_mdp(5, 2, rng);
  const Matrix P = induced_transition_matrix(mdp, Policy::uniform(5, 2));
  for (int s = 0; s < 5; ++s) {
    const Matrix expect = 0.5 * (mdp.kernel.row(s * 2) + mdp.kernel.row(s * 2 + 1));
    CHECK((P.row(s) - expect).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("induced transition matrix matches a hand expansion on a 2x2 instance") {
  Mdp mdp;
  mdp.num_states = 2;
  mdp.num_actions = 2;
  mdp.kernel.resize(4, 2);
  // rows: (s0,a0), (s0,a1), (s1,a0), (s1,a1)
  mdp.kernel << 0.7, 0.3,
                0.1, 0.9,
                0.5, 0.5,
                0.2, 0.8;
  mdp.reward = Matrix::Zero(4, 2);
  Policy pi;
  pi.probs.resize(2, 2);
  pi.probs << 0.3, 0.7,
              0.6, 0.4;
  const Matrix P = induced_transition_matrix(mdp, pi);
  // P(0,0) = 0.3*0.7 + 0.7*0.1 = 0.28, P(0,1) = 0.3*0.3 + 0.7*0.9 = 0.72
  // P(1,0) = 0.6*0.5 + 0.4*0.2 = 0.38, P(1,1) = 0.6*0.5 + 0.4*0.8 = 0.62
  CHECK(P(0, 0) == doctest::Approx(0.28).epsilon(1e-12));
  CHECK(P(0, 1) == doctest::Approx(0.72).epsilon(1e-12));
  CHECK(P(1, 0) == doctest::Approx(0.38).epsilon(1e-12));
  CHECK(P(1, 1) == doctest::Approx(0.62).epsilon(1e-12));
  CHECK(P.row(0).sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("expected reward of a constant reward is that constant") {
  Rng rng(3);
  Mdp mdp = random_mdp(4, 2, rng);
  mdp.reward.setConstant(2.5);
  const Vector r = expected_reward(mdp, random_policy(4, 2, rng));
  for (int s = 0; s < 4; ++s) CHECK(r(s) == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("expected reward under a deterministic kernel picks the reached state") {
  Mdp mdp;
  mdp.num_states = 3;
  mdp.num_actions = 1;
  mdp.kernel = Matrix::Zero(3, 3);
  mdp.kernel(0, 1) = 1.0;
  mdp.kernel(1, 2) = 1.0;
  mdp.kernel(2, 0) = 1.0;
  mdp.reward = Matrix::Zero(3, 3);
  // reward depends only on the destination: 1 -> 10, 2 -> 20, 0 -> 30
  mdp.reward(0, 1) = 10;
  mdp.reward(1, 2) = 20;
  mdp.reward(2, 0) = 30;
  const Vector r = expected_reward(mdp, Policy::uniform(3, 1));
  CHECK(r(0) == 10.0);
  CHECK(r(1) == 20.0);
  CHECK(r(2) == 30.0);
}

TEST_CASE("expected reward matches the brute-force double sum") {
  Rng rng(4);
  const Mdp mdp = random_mdp(3, 3, rng);
  const Policy pi = random_policy(3, 3, rng);
  const Vector r = expected_reward(mdp, pi);
  for (int s = 0; s < 3; ++s) {
    double expect = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int s2 = 0; s2 < 3; ++s2)
        expect += pi.probs(s, a) * mdp.prob(s, a, s2) * mdp.reward_at(s, a, s2);
    CHECK(r(s) == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("stationary distribution of a doubly stochastic chain is uniform") {
  Matrix P(3, 3);
  P << 0.5, 0.25, 0.25,
       0.25, 0.5, 0.25,
       0.25, 0.25, 0.5;
  const Vector d = stationary_distribution(P);
  for (int s = 0; s < 3; ++s) CHECK(d(s) == doctest::Approx(1.0 / 3).epsilon(1e-11));
}

TEST_CASE("stationary distribution solves the 2-state balance equation") {
  Matrix P(2, 2);
  P << 0.9, 0.1,
       0.2, 0.8;
  // balance: 0.1 d0 = 0.2 d1 with d0 + d1 = 1 -> d = (2/3, 1/3)
  const Vector d = stationary_distribution(P);
  CHECK(d(0) == doctest::Approx(2.0 / 3).epsilon(1e-11));
  CHECK(d(1) == doctest::Approx(1.0 / 3).epsilon(1e-11));
  CHECK((P.transpose() * d - d).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("stationary distribution rejects a reducible chain") {
  CHECK_THROWS_AS(stationary_distribution(Matrix::Identity(3, 3)), std::runtime_error);
}

TEST_CASE("stationary distribution is strictly positive on irreducible chains") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Mdp mdp = random_mdp(6, 2, rng);
    const Policy pi = random_policy(6, 2, rng);
    const Vector d = stationary_distribution(induced_transition_matrix(mdp, pi));
    CHECK(d.minCoeff() > 0.0);
  }
}

TEST_CASE("tiny discount collapses the value vector to the expected reward") {
  Rng rng(6);
  const Mdp mdp = random_mdp(4, 2, rng);
  const Policy pi = random_policy(4, 2, rng);
  const Vector v = exact_value(mdp, pi, 1e-12);
  const Vector r = expected_reward(mdp, pi);
  CHECK((v - r).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("single-state value is the geometric series") {
  Mdp mdp;
  mdp.num_states = 1;
  mdp.num_actions = 1;
  mdp.kernel = Matrix::Ones(1, 1);
  mdp.reward = Matrix::Ones(1, 1);
  const Vector v = exact_value(mdp, Policy::uniform(1, 1), 0.5);
  CHECK(v(0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("value vector agrees with a Monte Carlo rollout estimate") {
  Rng rng(7);
  const Mdp mdp = random_mdp(5, 2, rng);
  const Policy pi = random_policy(5, 2, rng);
  const double gamma = 0.8;
  const Vector v = exact_value(mdp, pi, gamma);

  // Rollout oracle for the discounted return from state 0.
  const int rollouts = 20000;
  const int horizon = 120;  // gamma^120 ~ 2e-12
  double mean = 0.0, m2 = 0.0;
  Rng sim(1234);
  for (int i = 0; i < rollouts; ++i) {
    int s = 0;
    double ret = 0.0, disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const Transition tr = sample_transition(mdp, pi, s, sim);
      ret += disc * tr.reward;
      disc *= gamma;
      s = tr.s_next;
    }
    const double delta = ret - mean;
    mean += delta / (i + 1);
    m2 += delta * (ret - mean);
  }
  const double se = std::sqrt(m2 / (rollouts - 1.0) / rollouts);
  CHECK(std::abs(v(0) - mean) <= 3.0 * se + 1e-9);
}

TEST_CASE("value vector satisfies the Bellman fixed point") {
  Rng rng(8);
  const Mdp mdp = random_mdp(6, 3, rng);
  const Policy pi = random_policy(6, 3, rng);
  const double gamma = 0.9;
  const Vector v = exact_value(mdp, pi, gamma);
  const Matrix P = induced_transition_matrix(mdp, pi);
  const Vector r = expected_reward(mdp, pi);
  CHECK((v - (r + gamma * P * v)).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("spectral radius of gamma P_pi stays below gamma") {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Mdp mdp = random_mdp(5, 2, rng);
    const Policy pi = random_policy(5, 2, rng);
    const double gamma = 0.95;
    const Matrix P = induced_transition_matrix(mdp, pi);
    const double rho =
        Eigen::EigenSolver<Matrix>(gamma * P, false).eigenvalues().cwiseAbs().maxCoeff();
    CHECK(rho <= gamma + 1e-12);
  }
}

TEST_CASE("deterministic policy and kernel produce a unique transition") {
  Mdp mdp;
  mdp.num_states = 2;
  mdp.num_actions = 2;
  mdp.kernel = Matrix::Zero(4, 2);
  mdp.kernel(0, 1) = 1.0;  // (s0,a0) -> s1
  mdp.kernel(1, 0) = 1.0;
  mdp.kernel(2, 0) = 1.0;
  mdp.kernel(3, 1) = 1.0;
  mdp.reward = Matrix::Constant(4, 2, 3.0);
  Policy det;
  det.probs.resize(2, 2);
  det.probs << 1.0, 0.0,
               0.0, 1.0;
  Rng rng(10);
  const Transition t = sample_transition(mdp, det, 0, rng);
  CHECK(t.a == 0);
  CHECK(t.s_next == 1);
  CHECK(t.reward == 3.0);
}

TEST_CASE("transition frequencies match the model within three sigma") {
  Rng rng(11);
  const Mdp mdp = random_mdp(3, 2, rng);
  const Policy phi = random_policy(3, 2, rng);
  const int draws = 1000000;
  Matrix counts = Matrix::Zero(2, 3);
  Rng sim(42);
  for (int i = 0; i < draws; ++i) {
    const Transition t = sample_transition(mdp, phi, 1, sim);
    counts(t.a, t.s_next) += 1.0;
  }
  for (int a = 0; a < 2; ++a)
    for (int s2 = 0; s2 < 3; ++s2) {
      const double p = phi.probs(1, a) * mdp.prob(1, a, s2);
      const double sigma = std::sqrt(p * (1 - p) * draws);
      CHECK(std::abs(counts(a, s2) - p * draws) <= 3.0 * sigma + 1.0);
    }
}

TEST_CASE("sampling is reproducible for a fixed seed") {
  Rng rng(12);
  const Mdp mdp = random_mdp(4, 3, rng);
  const Policy phi = random_policy(4, 3, rng);
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) {
    const Transition ta = sample_transition(mdp, phi, i % 4, a);
    const Transition tb = sample_transition(mdp, phi, i % 4, b);
    CHECK(ta.a == tb.a);
    CHECK(ta.s_next == tb.s_next);
    CHECK(ta.reward == tb.reward);
  }
}

TEST_CASE("row stochasticity survives arbitrary valid policies") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Mdp mdp = random_mdp(4 + trial % 3, 2 + trial % 2, rng);
    const Policy pi = random_policy(mdp.num_states, mdp.num_actions, rng);
    const Matrix P = induced_transition_matrix(mdp, pi);
    for (long s = 0; s < P.rows(); ++s)
      CHECK(P.row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(P.minCoeff() >= 0.0);
  }
}

TEST_CASE("discrete sampler and linear scan pick identical indices") {
  Rng rng(14);
  Eigen::RowVectorXd probs(5);
  probs << 0.1, 0.0, 0.4, 0.25, 0.25;
  const DiscreteSampler sampler(probs);
  for (int i = 0; i < 1000; ++i) {
    Rng a(1000 + i), b(1000 + i);
    const int via_table = sampler.draw(a);
    const int via_scan = sample_index(probs, b.uniform());
    CHECK(via_table == via_scan);
  }
}
