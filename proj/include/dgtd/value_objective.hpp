#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "dgtd/mdp.hpp"

namespace dgtd {

// Raised when a weighted system has no unique solution, e.g. the state
// weighting does not cover enough of the feature span.
struct SingularSystemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// S x M feature matrix, one row per state.  Must have full column rank.
struct FeatureMap {
  Matrix X;

  int num_states() const { return static_cast<int>(X.rows()); }
  int num_features() const { return static_cast<int>(X.cols()); }

  // Verifies rank via singular values with threshold rank_tol * sigma_max.
  static FeatureMap checked(Matrix X, double rank_tol = 1e-10);
};

// Everything needed to evaluate the weighted projected Bellman objective:
// features X, diagonal weighting d (state-visitation probabilities),
// target-policy chain (P_pi, r_pi) and the discount.
struct ObjectiveContext {
  Matrix X;
  Vector d;
  Matrix P_pi;
  Vector r_pi;
  double gamma = 0.0;

  // Derived: B = X^T D (I - gamma P_pi) X, plus the Gram pieces.
  Matrix B;
  Matrix XtDX;
  Vector XtDr;

  static ObjectiveContext make(const FeatureMap& features, const Vector& d,
                               const Matrix& P_pi, const Vector& r_pi, double gamma);
};

// Pi = X (X^T D X)^{-1} X^T D; throws SingularSystemError when X^T D X is
// rank deficient.
Matrix projection_matrix(const ObjectiveContext& ctx);

// Closed-form weighted quadratic; uses the pseudo-inverse of X^T D X when
// the weighting has zeros, so the objective stays evaluable there.
double projected_bellman_error(const Vector& w, const ObjectiveContext& ctx);

// Minimizer w* = B^{-1} X^T D r_pi; throws SingularSystemError when B is
// singular (the weighting alone cannot identify the solution).
Vector optimal_w(const ObjectiveContext& ctx);

struct PrimalDualPair {
  Vector theta;
  Vector w;
};

// One deterministic primal-dual (Arrow-Hurwicz) iteration on the dual
// Lagrangian: gradient descent in theta, ascent in w.
PrimalDualPair arrow_hurwicz_step(const Vector& theta, const Vector& w,
                                  const ObjectiveContext& ctx, double mu_theta,
                                  double mu_w);

}  // namespace dgtd
