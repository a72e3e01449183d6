#include "dgtd/value_objective.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace dgtd {

FeatureMap FeatureMap::checked(Matrix X, double rank_tol) {
  if (!X.allFinite()) throw std::invalid_argument("feature matrix has non-finite entries");
  if (X.rows() < X.cols())
    throw std::invalid_argument("feature matrix needs at least as many states as features");
  Eigen::JacobiSVD<Matrix> svd(X);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= rank_tol * sv(0))
    throw std::invalid_argument("feature matrix is column-rank deficient");
  FeatureMap f;
  f.X = std::move(X);
  return f;
}

ObjectiveContext ObjectiveContext::make(const FeatureMap& features, const Vector& d,
                                        const Matrix& P_pi, const Vector& r_pi,
                                        double gamma) {
  const long S = features.X.rows();
  if (d.size() != S || P_pi.rows() != S || P_pi.cols() != S || r_pi.size() != S)
    throw std::invalid_argument("objective context shape mismatch");
  if ((d.array() < 0).any()) throw std::invalid_argument("weighting must be nonnegative");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  ObjectiveContext ctx;
  ctx.X = features.X;
  ctx.d = d;
  ctx.P_pi = P_pi;
  ctx.r_pi = r_pi;
  ctx.gamma = gamma;
  const Matrix DX = d.asDiagonal() * ctx.X;
  ctx.XtDX = ctx.X.transpose() * DX;
  ctx.B = ctx.X.transpose() * (d.asDiagonal() * (ctx.X - gamma * (P_pi * ctx.X)));
  ctx.XtDr = DX.transpose() * r_pi;
  return ctx;
}

namespace {

// Pivot threshold is relative to the largest pivot.
constexpr double kPivotTol = 1e-12;

}  // namespace

Matrix projection_matrix(const ObjectiveContext& ctx) {
  Eigen::FullPivLU<Matrix> lu(ctx.XtDX);
  lu.setThreshold(kPivotTol);
  if (!lu.isInvertible())
    throw SingularSystemError("X^T D X is singular: insufficient state coverage");
  return ctx.X * lu.solve(ctx.X.transpose() * ctx.d.asDiagonal());
}

double projected_bellman_error(const Vector& w, const ObjectiveContext& ctx) {
  const Vector residual = ctx.XtDr - ctx.B * w;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(ctx.XtDX);
  const double value = residual.dot(cod.solve(residual));
  return std::max(value, 0.0);
}

Vector optimal_w(const ObjectiveContext& ctx) {
  Eigen::FullPivLU<Matrix> lu(ctx.B);
  lu.setThreshold(kPivotTol);
  if (!lu.isInvertible())
    throw SingularSystemError(
        "B is singular: this state weighting cannot identify the minimizer alone");
  return lu.solve(ctx.XtDr);
}

PrimalDualPair arrow_hurwicz_step(const Vector& theta, const Vector& w,
                                  const ObjectiveContext& ctx, double mu_theta,
                                  double mu_w) {
  if (!(mu_theta > 0.0 && mu_w > 0.0)) throw std::invalid_argument("step-sizes must be positive");
  const Matrix shifted = ctx.X - ctx.gamma * (ctx.P_pi * ctx.X);  // (I - gamma P_pi) X
  const Vector bellman = ctx.X * theta + shifted * w - ctx.r_pi;
  PrimalDualPair next;
  next.theta = theta - mu_theta * (ctx.X.transpose() * ctx.d.cwiseProduct(bellman));
  next.w = w + mu_w * (shifted.transpose() * ctx.d.cwiseProduct(ctx.X * theta));
  return next;
}

}  // namespace dgtd
