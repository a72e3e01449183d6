#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "dgtd/diffusion_net.hpp"
#include "dgtd/gtd_agent.hpp"
#include "dgtd/mdp.hpp"
#include "dgtd/value_objective.hpp"

namespace dgtd {

// First moments of one agent's per-sample update pair under its behavior
// policy's stationary distribution.
struct AgentMoments {
  Matrix G;  // 2M x 2M, lower-right block zero
  Vector g;  // 2M
  Vector d;  // length S, stationary distribution of the behavior chain
};

// G_k = [[eta X^T D_k X, eta X^T D_k (I - gamma P_pi) X],
//        [-X^T (I - gamma P_pi)^T D_k X, 0]],  g_k = col{-eta X^T D_k r_pi, 0}.
// Accepts behavior chains with a single recurrent class (d is zero on
// transient states).
AgentMoments agent_moments(const Mdp& mdp, const Policy& pi, const Policy& phi,
                           const FeatureMap& features, double gamma, double eta);

// dbar = sum_k tau_k d_k.
Vector in_network_distribution(const Vector& tau, const std::vector<Vector>& d);

struct SaddlePoint {
  Vector theta_o;  // exactly zero
  Vector w_o;
};

// Saddle point of the aggregate Lagrangian under weighting dbar.
SaddlePoint saddle_point(const FeatureMap& features, const Vector& dbar,
                         const Matrix& P_pi, const Vector& r_pi, double gamma);

struct MeanStability {
  double rho = 0.0;  // spectral radius of C^T_kron (I - mu R)
  bool stable = false;
  Vector alpha_tilde_inf;  // empty when unstable
};

// Mean-error recursion analysis: stability and, when stable, the closed-form
// bias fixed point (I - C^T_kron(I - mu R))^{-1} mu C^T_kron (Gcal alpha_o + g).
MeanStability mean_stability(const Matrix& C, const std::vector<AgentMoments>& agents,
                             const Vector& alpha_o, double mu);

// Block-diagonal R, stacked Gcal and g from per-agent moments.
Matrix stack_R(const std::vector<AgentMoments>& agents);
Matrix kron_with_identity(const Matrix& C, int block);  // C (x) I_block

struct EnumerationLimits {
  long max_total_samples = 200000;  // sum_k S*A*S
  int max_dimension = 64;           // largest 2MN for which F/U are materialized
};

struct SecondOrderMoments {
  Matrix R_n;       // E[n n^T], 2MN x 2MN
  Matrix F_exact;   // includes the mu^2 fluctuation term
  Matrix F_approx;  // small-step form, a Kronecker square
  Matrix U;         // (2MN)^2 x 2MN
  Vector h;         // mu^2 vec(C^T R_n C)
  Vector q;         // h + 2 U alpha_tilde_inf
  double rho_F_exact = 0.0;
  double rho_F_approx = 0.0;
};

// Exact expectations by weighted enumeration of each agent's (s, a, s')
// space; cross-agent blocks factor through first moments.  Throws when the
// enumeration or matrix-size caps are exceeded.
SecondOrderMoments second_order_moments(const Mdp& mdp, const Policy& pi,
                                        const std::vector<Policy>& phis,
                                        const FeatureMap& features, double gamma,
                                        double eta, const Matrix& C,
                                        const Vector& alpha_o, double mu,
                                        const EnumerationLimits& limits = {},
                                        bool parallel = true);

enum class MsdSelector { network, node };

// Steady-state MSD: q^T (I - F)^{-1} sigma with sigma = vec(I)/N for the
// network average or vec(J_k) for node k.  Requires rho(F) < 1.
double steady_state_msd(const Matrix& F, const Vector& q, MsdSelector selector,
                        int num_agents, int node = 0);

struct SimilarityParams {
  double epsilon = 0.0;
  double beta = 0.0;
  double sigma = 0.0;
};

struct StepSizeBound {
  double mu_o = 0.0;
  SimilarityParams params;
  bool schur_fallback = false;  // set when C or Gbar was too close to defective
};

// Sufficient step-size bound for mean stability, evaluated over the three
// Gershgorin disk families of the similarity-transformed mean matrix.  With
// no explicit parameters a coarse log grid over (epsilon, beta, sigma) is
// searched and the best bound returned.
StepSizeBound step_size_bound(const Matrix& C, const std::vector<Matrix>& G,
                              const Vector& tau,
                              const std::optional<SimilarityParams>& params = std::nullopt);

struct AnalysisConfig {
  Mdp mdp;
  Policy target;
  std::vector<Policy> behaviors;
  FeatureMap features;
  Matrix C;
  double gamma = 0.95;
  double eta = 1.0;
  double mu = 1e-3;
  std::optional<Vector> tau_override;  // defaults to the Perron eigenvector
  EnumerationLimits limits;
};

struct AnalysisReport {
  int num_agents = 0, num_features = 0, num_states = 0;
  double gamma = 0.0, eta = 0.0, mu = 0.0;
  Vector tau;
  bool tau_is_perron = true;

  Vector w_o, theta_o, alpha_o;
  Vector w_pi;        // on-policy reference (empty when target chain fails)
  Vector d_bar;
  bool dbar_positive = false;
  std::vector<char> agent_identifiable;  // per-agent: own B_k invertible
  bool cooperation_required = false;     // some agent cannot solve alone

  Vector alpha_tilde_inf;
  double bias_norm = 0.0;
  double rho_mean = 0.0;
  bool mean_stable = false;

  bool msd_available = false;
  std::string msd_note;
  double rho_F = 0.0;
  double msd_network = 0.0;
  Vector msd_per_node;

  double mu_o = 0.0;
  SimilarityParams mu_o_params;
  bool mu_o_schur_fallback = false;
};

AnalysisReport full_report(const AnalysisConfig& config);

// Key-value/matrix text serialization; see README for the schema.
void save_report(const AnalysisReport& report, const std::string& path);

}  // namespace dgtd
