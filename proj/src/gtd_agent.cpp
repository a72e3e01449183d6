#include "dgtd/gtd_agent.hpp"

#include <cmath>
#include <stdexcept>

namespace dgtd {

SampleRealization SampleRealization::make(Vector x, Vector x_next, double gamma,
                                          double reward, double xi) {
  if (x.size() != x_next.size()) throw std::invalid_argument("feature size mismatch");
  if (!(xi >= 0.0) || !std::isfinite(xi))
    throw std::invalid_argument("importance weight must be finite and nonnegative");
  SampleRealization s;
  s.delta = x - gamma * x_next;
  s.x = std::move(x);
  s.x_next = std::move(x_next);
  s.reward = reward;
  s.xi = xi;
  return s;
}

double importance_weight(const Policy& pi, const Policy& phi, int a, int s) {
  const double p = pi.probs(s, a);
  const double q = phi.probs(s, a);
  if (q > 0.0) return p / q;
  if (p == 0.0) return 0.0;
  throw std::domain_error(
      "behavior policy assigns zero probability to action " + std::to_string(a) +
      " in state " + std::to_string(s) + " where the target policy has mass");
}

AgentParams gtd2_step(const AgentParams& params, const SampleRealization& sample,
                      double mu_theta, double mu_w) {
  if (!(mu_theta > 0.0 && mu_w > 0.0)) throw std::invalid_argument("step-sizes must be positive");
  const double xtheta = sample.x.dot(params.theta);
  const double bellman = xtheta + sample.delta.dot(params.w) - sample.reward;
  AgentParams next;
  next.theta = params.theta - (mu_theta * sample.xi * bellman) * sample.x;
  next.w = params.w + (mu_w * sample.xi * xtheta) * sample.delta;
  return next;
}

SampleMoments sample_moments(const SampleRealization& sample, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  const long m = sample.x.size();
  SampleMoments sm;
  sm.G = Matrix::Zero(2 * m, 2 * m);
  sm.G.topLeftCorner(m, m) = (eta * sample.xi) * (sample.x * sample.x.transpose());
  sm.G.topRightCorner(m, m) = (eta * sample.xi) * (sample.x * sample.delta.transpose());
  sm.G.bottomLeftCorner(m, m) = -sample.xi * (sample.delta * sample.x.transpose());
  sm.g = Vector::Zero(2 * m);
  sm.g.head(m) = -(eta * sample.xi * sample.reward) * sample.x;
  return sm;
}

SampleRealization realize(const Matrix& X, const Transition& t, double gamma, double xi) {
  return SampleRealization::make(X.row(t.s).transpose(), X.row(t.s_next).transpose(), gamma,
                                 t.reward, xi);
}

}  // namespace dgtd
