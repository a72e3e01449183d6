#include "dgtd/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <stdexcept>

namespace dgtd {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

namespace {

double spectral_radius_dense(const Matrix& A) {
  return Eigen::EigenSolver<Matrix>(A, /*computeEigenvectors=*/false)
      .eigenvalues()
      .cwiseAbs()
      .maxCoeff();
}

// Geometric-mean growth rate under repeated application; used where the
// matrix is too large for a dense eigensolve.
double spectral_radius_power(const Matrix& A, int warmup = 150, int measured = 150) {
  Rng rng(0x9d5f0a1bULL ^ static_cast<std::uint64_t>(A.rows()));
  Vector v(A.rows());
  for (long i = 0; i < v.size(); ++i) v(i) = rng.uniform() - 0.5;
  v.normalize();
  double log_sum = 0.0;
  for (int it = 0; it < warmup + measured; ++it) {
    Vector next = A * v;
    const double n = next.norm();
    if (n == 0.0) return 0.0;
    if (it >= warmup) log_sum += std::log(n);
    v = next / n;
  }
  return std::exp(log_sum / measured);
}

double spectral_radius_auto(const Matrix& A) {
  return A.rows() <= 1024 ? spectral_radius_dense(A) : spectral_radius_power(A);
}

Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
  for (long i = 0; i < A.rows(); ++i)
    for (long j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

}  // namespace

Matrix kron_with_identity(const Matrix& C, int block) {
  Matrix out = Matrix::Zero(C.rows() * block, C.cols() * block);
  for (long i = 0; i < C.rows(); ++i)
    for (long j = 0; j < C.cols(); ++j) {
      if (C(i, j) == 0.0) continue;
      for (int b = 0; b < block; ++b) out(i * block + b, j * block + b) = C(i, j);
    }
  return out;
}

Matrix stack_R(const std::vector<AgentMoments>& agents) {
  const long m2 = agents.front().G.rows();
  const long n = static_cast<long>(agents.size());
  Matrix R = Matrix::Zero(m2 * n, m2 * n);
  for (long k = 0; k < n; ++k) R.block(k * m2, k * m2, m2, m2) = agents[k].G;
  return R;
}

AgentMoments agent_moments(const Mdp& mdp, const Policy& pi, const Policy& phi,
                           const FeatureMap& features, double gamma, double eta) {
  if (eta < 0.0) throw std::invalid_argument("eta must be nonnegative");
  const Matrix P_pi = induced_transition_matrix(mdp, pi);
  const Vector r_pi = expected_reward(mdp, pi);
  const Matrix P_phi = induced_transition_matrix(mdp, phi);
  AgentMoments am;
  am.d = stationary_distribution(P_phi, 1e-12, /*require_irreducible=*/false);
  const Matrix& X = features.X;
  const long m = X.cols();
  const Matrix DX = am.d.asDiagonal() * X;
  const Matrix shifted = X - gamma * (P_pi * X);  // (I - gamma P_pi) X
  am.G = Matrix::Zero(2 * m, 2 * m);
  am.G.topLeftCorner(m, m) = eta * (X.transpose() * DX);
  am.G.topRightCorner(m, m) = eta * (DX.transpose() * shifted);
  am.G.bottomLeftCorner(m, m) = -(shifted.transpose() * DX);
  am.g = Vector::Zero(2 * m);
  am.g.head(m) = -eta * (DX.transpose() * r_pi);
  return am;
}

Vector in_network_distribution(const Vector& tau, const std::vector<Vector>& d) {
  if (static_cast<std::size_t>(tau.size()) != d.size())
    throw std::invalid_argument("one weight per agent required");
  if ((tau.array() < 0).any() || std::abs(tau.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("tau must be a probability vector");
  Vector dbar = Vector::Zero(d.front().size());
  for (long k = 0; k < tau.size(); ++k) dbar += tau(k) * d[static_cast<std::size_t>(k)];
  return dbar;
}

SaddlePoint saddle_point(const FeatureMap& features, const Vector& dbar,
                         const Matrix& P_pi, const Vector& r_pi, double gamma) {
  const ObjectiveContext ctx = ObjectiveContext::make(features, dbar, P_pi, r_pi, gamma);
  SaddlePoint sp;
  sp.w_o = optimal_w(ctx);
  sp.theta_o = Vector::Zero(features.num_features());
  return sp;
}

MeanStability mean_stability(const Matrix& C, const std::vector<AgentMoments>& agents,
                             const Vector& alpha_o, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
  const int n = static_cast<int>(agents.size());
  const long m2 = agents.front().G.rows();
  if (C.rows() != n || C.cols() != n) throw std::invalid_argument("C shape mismatch");
  if (alpha_o.size() != m2) throw std::invalid_argument("alpha_o must have length 2M");
  const long L = m2 * n;
  const Matrix R = stack_R(agents);
  const Matrix Ckron_t = kron_with_identity(C.transpose(), static_cast<int>(m2));
  const Matrix mean_matrix = Ckron_t * (Matrix::Identity(L, L) - mu * R);
  MeanStability ms;
  ms.rho = spectral_radius_auto(mean_matrix);
  ms.stable = ms.rho < 1.0;
  if (ms.stable) {
    Vector drive(L);
    for (int k = 0; k < n; ++k)
      drive.segment(k * m2, m2) = agents[k].G * alpha_o + agents[k].g;
    ms.alpha_tilde_inf = (Matrix::Identity(L, L) - mean_matrix)
                             .partialPivLu()
                             .solve(mu * (Ckron_t * drive));
  }
  return ms;
}

// ---------------------------------------------------------------------------
// Second-order moments by per-agent enumeration

namespace {

struct AgentEnumeration {
  Matrix G_bar;            // E[G_k]
  Vector g_bar;            // E[g_k]
  Vector n_bar;            // E[n_k]
  Matrix nn;               // E[n_k n_k^T]
  std::vector<Matrix> nG;  // E[n_k(j) * G_k], one 2M x 2M matrix per j
  Matrix GtGt;             // E[G_k^T (x) G_k^T]
};

AgentEnumeration enumerate_agent(const Mdp& mdp, const Policy& pi, const Policy& phi,
                                 const FeatureMap& features, double gamma, double eta,
                                 const Vector& alpha_o) {
  const int S = mdp.num_states, A = mdp.num_actions;
  const long m2 = 2 * features.num_features();
  const Matrix P_phi = induced_transition_matrix(mdp, phi);
  const Vector d = stationary_distribution(P_phi, 1e-12, /*require_irreducible=*/false);

  AgentEnumeration e;
  e.G_bar = Matrix::Zero(m2, m2);
  e.g_bar = Vector::Zero(m2);
  e.n_bar = Vector::Zero(m2);
  e.nn = Matrix::Zero(m2, m2);
  e.nG.assign(static_cast<std::size_t>(m2), Matrix::Zero(m2, m2));
  e.GtGt = Matrix::Zero(m2 * m2, m2 * m2);

  for (int s = 0; s < S; ++s) {
    if (d(s) <= 0.0) continue;
    for (int a = 0; a < A; ++a) {
      const double pa = phi.probs(s, a);
      if (pa <= 0.0) continue;
      const double xi = pi.probs(s, a) / pa;
      const long row = static_cast<long>(s) * A + a;
      for (int s2 = 0; s2 < S; ++s2) {
        const double pt = mdp.kernel(row, s2);
        if (pt <= 0.0) continue;
        const double p = d(s) * pa * pt;
        const SampleRealization sample =
            realize(features.X, Transition{s, a, s2, mdp.reward(row, s2)}, gamma, xi);
        const SampleMoments sm = sample_moments(sample, eta);
        const Vector n = sm.G * alpha_o + sm.g;
        e.G_bar += p * sm.G;
        e.g_bar += p * sm.g;
        e.n_bar += p * n;
        e.nn += p * (n * n.transpose());
        for (long j = 0; j < m2; ++j) e.nG[static_cast<std::size_t>(j)] += (p * n(j)) * sm.G;
        const Matrix Gt = sm.G.transpose();
        for (long i = 0; i < m2; ++i)
          for (long j = 0; j < m2; ++j)
            e.GtGt.block(i * m2, j * m2, m2, m2) += (p * Gt(i, j)) * Gt;
      }
    }
  }
  return e;
}

}  // namespace

SecondOrderMoments second_order_moments(const Mdp& mdp, const Policy& pi,
                                        const std::vector<Policy>& phis,
                                        const FeatureMap& features, double gamma,
                                        double eta, const Matrix& C,
                                        const Vector& alpha_o, double mu,
                                        const EnumerationLimits& limits, bool parallel) {
  const int N = static_cast<int>(phis.size());
  const int S = mdp.num_states, A = mdp.num_actions;
  const long m2 = 2 * features.num_features();
  const long L = m2 * N;
  if (C.rows() != N || C.cols() != N) throw std::invalid_argument("C shape mismatch");
  if (alpha_o.size() != m2) throw std::invalid_argument("alpha_o must have length 2M");
  const long total = static_cast<long>(N) * S * S * A;
  if (total > limits.max_total_samples)
    throw std::runtime_error(
        "enumeration cap exceeded (" + std::to_string(total) + " > " +
        std::to_string(limits.max_total_samples) +
        "); use the small-step approximation with Monte Carlo moments instead");
  if (L > limits.max_dimension)
    throw std::runtime_error("2MN = " + std::to_string(L) +
                             " exceeds the dense second-order cap of " +
                             std::to_string(limits.max_dimension));

  std::vector<AgentEnumeration> agents(static_cast<std::size_t>(N));
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int k = 0; k < N; ++k)
    agents[static_cast<std::size_t>(k)] =
        enumerate_agent(mdp, pi, phis[static_cast<std::size_t>(k)], features, gamma, eta,
                        alpha_o);

  SecondOrderMoments out;

  // R_n: within-agent blocks are exact second moments, cross blocks factor.
  out.R_n = Matrix::Zero(L, L);
  for (int k = 0; k < N; ++k)
    for (int l = 0; l < N; ++l) {
      if (k == l)
        out.R_n.block(k * m2, l * m2, m2, m2) = agents[k].nn;
      else
        out.R_n.block(k * m2, l * m2, m2, m2) =
            agents[k].n_bar * agents[l].n_bar.transpose();
    }

  const Matrix Ckron = kron_with_identity(C, static_cast<int>(m2));
  Matrix R = Matrix::Zero(L, L);
  Vector n_bar(L);
  for (int k = 0; k < N; ++k) {
    R.block(k * m2, k * m2, m2, m2) = agents[k].G_bar;
    n_bar.segment(k * m2, m2) = agents[k].n_bar;
  }

  const Matrix A_small = (Matrix::Identity(L, L) - mu * R.transpose()) * Ckron;
  out.F_approx = kron(A_small, A_small);

  // Fluctuation term: E[Z (x) Z] with Z = (R_i - R)^T Ckron.  Entries couple
  // only within one agent; cross-agent deviations are independent with zero
  // mean.
  out.F_exact = out.F_approx;
  const double mu2 = mu * mu;
  for (int k = 0; k < N; ++k) {
    Matrix dev = agents[k].GtGt;  // becomes E[dG^T (x) dG^T]
    const Matrix Gt = agents[k].G_bar.transpose();
    for (long i = 0; i < m2; ++i)
      for (long j = 0; j < m2; ++j) dev.block(i * m2, j * m2, m2, m2) -= Gt(i, j) * Gt;
    for (long pt = 0; pt < m2; ++pt)
      for (long rt = 0; rt < m2; ++rt) {
        const long frow = (k * m2 + pt) * L + (k * m2 + rt);
        for (int kq = 0; kq < N; ++kq) {
          const double cq = C(k, kq);
          if (cq == 0.0) continue;
          for (int ks = 0; ks < N; ++ks) {
            const double cs = C(k, ks);
            if (cs == 0.0) continue;
            for (long qt = 0; qt < m2; ++qt)
              for (long st = 0; st < m2; ++st)
                out.F_exact(frow, (kq * m2 + qt) * L + (ks * m2 + st)) +=
                    mu2 * cq * cs * dev(pt * m2 + rt, qt * m2 + st);
          }
        }
      }
  }

  // U = mu (Ckron^T (x) Ckron^T) E[n (x) (I - mu R_i)], applied per column
  // as vec(Ckron^T Y Ckron) to avoid forming the big Kronecker factor.
  Matrix EnI = Matrix::Zero(L * L, L);
  for (int kj = 0; kj < N; ++kj)
    for (long jt = 0; jt < m2; ++jt) {
      const long j = kj * m2 + jt;
      Matrix blockrow = Matrix::Zero(L, L);  // E[n_j (I - mu R_i)]
      for (int l = 0; l < N; ++l) {
        if (l == kj)
          blockrow.block(l * m2, l * m2, m2, m2) =
              n_bar(j) * Matrix::Identity(m2, m2) -
              mu * agents[static_cast<std::size_t>(kj)].nG[static_cast<std::size_t>(jt)];
        else
          blockrow.block(l * m2, l * m2, m2, m2) =
              n_bar(j) * (Matrix::Identity(m2, m2) - mu * agents[l].G_bar);
      }
      EnI.block(j * L, 0, L, L) = blockrow;
    }
  out.U = Matrix::Zero(L * L, L);
  for (long col = 0; col < L; ++col) {
    // Un-vec column col: Y(r, j) = EnI(j*L + r, col).
    Matrix Y(L, L);
    for (long j = 0; j < L; ++j) Y.col(j) = EnI.block(j * L, 0, L, L).col(col);
    const Matrix folded = Ckron.transpose() * Y * Ckron;
    out.U.col(col) = Eigen::Map<const Vector>(folded.data(), L * L);
  }
  out.U *= mu;

  const Matrix CRC = Ckron.transpose() * out.R_n * Ckron;
  out.h = mu2 * Eigen::Map<const Vector>(CRC.data(), L * L);

  out.rho_F_approx = spectral_radius_auto(A_small);
  out.rho_F_approx *= out.rho_F_approx;  // rho(A (x) A) = rho(A)^2
  out.rho_F_exact = spectral_radius_auto(out.F_exact);

  // Bias fixed point at this mu, from the same enumerated moments.
  const Matrix mean_matrix = Ckron.transpose() * (Matrix::Identity(L, L) - mu * R);
  if (spectral_radius_auto(mean_matrix) < 1.0) {
    const Vector alpha_inf = (Matrix::Identity(L, L) - mean_matrix)
                                 .partialPivLu()
                                 .solve(mu * (Ckron.transpose() * n_bar));
    out.q = out.h + 2.0 * out.U * alpha_inf;
  }
  return out;
}

double steady_state_msd(const Matrix& F, const Vector& q, MsdSelector selector,
                        int num_agents, int node) {
  const long L2 = F.rows();
  const long L = static_cast<long>(std::llround(std::sqrt(static_cast<double>(L2))));
  if (L * L != L2 || F.cols() != L2 || q.size() != L2)
    throw std::invalid_argument("F must be (2MN)^2-square with matching q");
  if (L % num_agents != 0) throw std::invalid_argument("num_agents does not divide 2MN");
  const double rho = spectral_radius_auto(F);
  if (!(rho < 1.0))
    throw std::runtime_error("mean-square unstable: rho(F) = " + std::to_string(rho));

  Matrix sel = Matrix::Zero(L, L);
  const long block = L / num_agents;
  if (selector == MsdSelector::network) {
    sel.setIdentity();
    sel /= static_cast<double>(num_agents);
  } else {
    if (node < 0 || node >= num_agents) throw std::invalid_argument("node out of range");
    sel.block(node * block, node * block, block, block).setIdentity();
  }
  const Vector sigma = Eigen::Map<const Vector>(sel.data(), L2);
  const Vector y = (Matrix::Identity(L2, L2) - F).partialPivLu().solve(sigma);
  return q.dot(y);
}

// ---------------------------------------------------------------------------
// Step-size bound (Gershgorin disks of the similarity-transformed mean matrix)

namespace {

struct SpectralPieces {
  // First block: Gbar = sum_k tau_k G_k in the basis of its eigen/Schur form.
  ComplexVector lambda_G;
  ComplexMatrix YG, YG_inv, JG;  // JG diagonal (eigen path) or triangular (Schur)
  // Second block: the network modes of C away from the Perron direction.
  ComplexVector lambda_C0;       // N-1 subdominant eigenvalues
  ComplexMatrix J0;              // diagonal or triangular
  ComplexMatrix Yr;              // N x (N-1)
  ComplexMatrix Yl;              // (N-1) x N
  bool schur = false;
  long m2 = 0;
  int n = 0;
};

double condition_number(const ComplexMatrix& m) {
  Eigen::JacobiSVD<ComplexMatrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(sv.size() - 1);
}

SpectralPieces build_spectral_pieces(const Matrix& C, const std::vector<Matrix>& G,
                                     const Vector& tau) {
  SpectralPieces sp;
  sp.n = static_cast<int>(C.rows());
  sp.m2 = G.front().rows();

  Matrix Gbar = Matrix::Zero(sp.m2, sp.m2);
  for (int k = 0; k < sp.n; ++k) Gbar += tau(k) * G[static_cast<std::size_t>(k)];

  Eigen::ComplexEigenSolver<ComplexMatrix> gsolver(Gbar.cast<std::complex<double>>());
  if (gsolver.info() != Eigen::Success || condition_number(gsolver.eigenvectors()) > 1e8) {
    Eigen::ComplexSchur<ComplexMatrix> schur(Gbar.cast<std::complex<double>>());
    sp.schur = true;
    sp.YG = schur.matrixU();
    sp.YG_inv = schur.matrixU().adjoint();
    sp.JG = schur.matrixT();
    sp.lambda_G = schur.matrixT().diagonal();
  } else {
    sp.YG = gsolver.eigenvectors();
    sp.YG_inv = sp.YG.inverse();
    sp.lambda_G = gsolver.eigenvalues();
    sp.JG = sp.lambda_G.asDiagonal();
  }
  for (long m = 0; m < sp.m2; ++m)
    if (!(sp.lambda_G(m).real() > 0.0))
      throw std::runtime_error(
          "Gbar has an eigenvalue with nonpositive real part; the in-network "
          "weighting does not damp the mean dynamics");

  if (sp.n == 1) return sp;

  // Exact outer similarity [1, W] / [tau^T; V]: the Perron pair (1-vector and
  // tau) splits off the unit eigenvalue, leaving the contraction modes in A.
  Matrix Y(sp.n, sp.n);
  Y.col(0).setOnes();
  Eigen::HouseholderQR<Matrix> qr(tau);
  const Matrix Q = qr.householderQ();
  Y.rightCols(sp.n - 1) = Q.rightCols(sp.n - 1);  // orthonormal basis of tau-perp
  const Matrix Y_inv = Y.inverse();
  const Matrix reduced = (Y_inv * C.transpose() * Y).block(1, 1, sp.n - 1, sp.n - 1);

  Eigen::ComplexEigenSolver<ComplexMatrix> csolver(reduced.cast<std::complex<double>>());
  ComplexMatrix W = Y.rightCols(sp.n - 1).cast<std::complex<double>>();
  ComplexMatrix V = Y_inv.bottomRows(sp.n - 1).cast<std::complex<double>>();
  if (csolver.info() != Eigen::Success || condition_number(csolver.eigenvectors()) > 1e8) {
    Eigen::ComplexSchur<ComplexMatrix> schur(reduced.cast<std::complex<double>>());
    sp.schur = true;
    sp.J0 = schur.matrixT();
    sp.lambda_C0 = schur.matrixT().diagonal();
    sp.Yr = W * schur.matrixU();
    sp.Yl = schur.matrixU().adjoint() * V;
  } else {
    sp.J0 = csolver.eigenvalues().asDiagonal();
    sp.lambda_C0 = csolver.eigenvalues();
    sp.Yr = W * csolver.eigenvectors();
    sp.Yl = csolver.eigenvectors().inverse() * V;
  }
  return sp;
}

struct DiskData {
  // chi row sums for the three off-diagonal families plus |S22| diagonal.
  Vector chi12;      // per m in [0, 2M)
  Vector chi21;      // per row of the lower block
  Vector chi22;      // per row, excluding the diagonal
  Vector s22_diag;   // |[S22]_mm|
  Vector jg_offsum;  // per m: off-diagonal radius of the graded JG (Schur path)
  Vector j0_offsum;  // per lower row: off-diagonal radius of graded J0 (x) I
};

// Builds the scaled similarity blocks for given grading parameters.  In the
// eigen path the J factors are diagonal, so the grading matrices cancel and
// epsilon/beta enter only through the literal disk-radius terms; we pass
// grade = false there and reuse one DiskData for the whole parameter grid.
DiskData build_disks(const SpectralPieces& sp, const std::vector<Matrix>& G,
                     const Vector& tau, bool grade, double epsilon, double beta) {
  const long m2 = sp.m2;
  const int n = sp.n;
  const long lower = m2 * (n - 1);
  DiskData dd;
  dd.chi12 = Vector::Zero(m2);
  dd.chi21 = Vector::Zero(std::max<long>(lower, 1));
  dd.chi22 = Vector::Zero(std::max<long>(lower, 1));
  dd.s22_diag = Vector::Zero(std::max<long>(lower, 1));
  dd.jg_offsum = Vector::Zero(m2);
  dd.j0_offsum = Vector::Zero(std::max<long>(lower, 1));

  if (grade) {
    for (long m = 0; m < m2; ++m)
      for (long q = m + 1; q < m2; ++q)
        dd.jg_offsum(m) += std::abs(sp.JG(m, q)) * std::pow(epsilon, double(q - m));
  }
  if (n == 1) return dd;

  ComplexVector eps_pow = ComplexVector::Ones(m2);
  ComplexVector beta_pow = ComplexVector::Ones(n - 1);
  if (grade) {
    for (long m = 0; m < m2; ++m) eps_pow(m) = std::pow(epsilon, double(m + 1));
    for (int i = 0; i < n - 1; ++i) beta_pow(i) = std::pow(beta, double(i + 1));
  }

  // E12 block j = sum_k tau_k Yr(k,j) G_k ; E21 block i = sum_k Yl(i,k) G_k ;
  // E22 block (i,j) = sum_k Yl(i,k) Yr(k,j) G_k.
  std::vector<ComplexMatrix> Gc(G.size());
  for (std::size_t k = 0; k < G.size(); ++k) Gc[k] = G[k].cast<std::complex<double>>();

  const ComplexMatrix K = grade
                              ? ComplexMatrix(beta_pow.cwiseInverse().asDiagonal() * sp.J0)
                              : sp.J0;  // (Omega_beta^{-1} J0)

  // S12 = Deps^{-1} YG^{-1} E12 (Dbeta (x) I)
  for (int j = 0; j < n - 1; ++j) {
    ComplexMatrix block = ComplexMatrix::Zero(m2, m2);
    for (int k = 0; k < n; ++k) block += tau(k) * sp.Yr(k, j) * Gc[static_cast<std::size_t>(k)];
    const ComplexMatrix scaled =
        eps_pow.cwiseInverse().asDiagonal() * (sp.YG_inv * block) * beta_pow(j);
    dd.chi12 += scaled.cwiseAbs().rowwise().sum();
  }

  // S21 = (K (x) I) E21 YG Deps and S22 = (K (x) I) E22 (Dbeta (x) I).
  std::vector<ComplexMatrix> e21(static_cast<std::size_t>(n - 1));
  std::vector<std::vector<ComplexMatrix>> e22(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n - 1; ++i) {
    e21[static_cast<std::size_t>(i)] = ComplexMatrix::Zero(m2, m2);
    e22[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(n - 1),
                                            ComplexMatrix::Zero(m2, m2));
    for (int k = 0; k < n; ++k) {
      e21[static_cast<std::size_t>(i)] += sp.Yl(i, k) * Gc[static_cast<std::size_t>(k)];
      for (int j = 0; j < n - 1; ++j)
        e22[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
            sp.Yl(i, k) * sp.Yr(k, j) * Gc[static_cast<std::size_t>(k)];
    }
  }
  const ComplexMatrix YG_eps = sp.YG * eps_pow.asDiagonal();
  for (int i = 0; i < n - 1; ++i) {
    ComplexMatrix s21_block = ComplexMatrix::Zero(m2, m2);
    std::vector<ComplexMatrix> s22_row(static_cast<std::size_t>(n - 1),
                                       ComplexMatrix::Zero(m2, m2));
    for (int j2 = 0; j2 < n - 1; ++j2) {
      if (K(i, j2) == std::complex<double>(0.0, 0.0)) continue;
      s21_block += K(i, j2) * (e21[static_cast<std::size_t>(j2)] * YG_eps);
      for (int j = 0; j < n - 1; ++j)
        s22_row[static_cast<std::size_t>(j)] +=
            K(i, j2) * e22[static_cast<std::size_t>(j2)][static_cast<std::size_t>(j)] *
            beta_pow(j);
    }
    for (long mt = 0; mt < m2; ++mt) {
      const long row = static_cast<long>(i) * m2 + mt;
      dd.chi21(row) = s21_block.row(mt).cwiseAbs().sum();
      double off = 0.0;
      for (int j = 0; j < n - 1; ++j)
        for (long qt = 0; qt < m2; ++qt) {
          const double v = std::abs(s22_row[static_cast<std::size_t>(j)](mt, qt));
          if (j == i && qt == mt)
            dd.s22_diag(row) = v;
          else
            off += v;
        }
      dd.chi22(row) = off;
    }
    if (grade) {
      // Off-diagonal radius of the graded J0 (x) I for rows in block i.
      double j0_off = 0.0;
      for (int j = i + 1; j < n - 1; ++j)
        j0_off += std::abs(sp.J0(i, j)) * std::pow(beta, double(j - i));
      for (long mt = 0; mt < m2; ++mt) dd.j0_offsum(static_cast<long>(i) * m2 + mt) = j0_off;
    }
  }
  return dd;
}

// Evaluates the bound for one (epsilon, beta, sigma) triple; returns 0 when
// the combination is infeasible.
double evaluate_bound(const SpectralPieces& sp, const DiskData& dd, double epsilon,
                      double beta, double sigma) {
  double mu_o = std::numeric_limits<double>::infinity();
  // First disk family, one per eigenvalue of Gbar.
  for (long m = 0; m < sp.m2; ++m) {
    const double re = sp.lambda_G(m).real();
    const double a2 = std::norm(sp.lambda_G(m));
    const double eps_eff = sp.schur ? std::max(epsilon, dd.jg_offsum(m)) : epsilon;
    if (!(re - eps_eff > 0.0)) return 0.0;
    const double c = dd.chi12(m) / sigma;
    const double root = (-c + std::sqrt(c * c + 2.0 * a2 * (re - eps_eff))) / a2;
    mu_o = std::min(mu_o, root * root);
  }
  // Second family, per subdominant network mode and per lower row.
  if (sp.n > 1) {
    for (int k = 0; k < sp.n - 1; ++k) {
      const double beta_eff =
          sp.schur ? std::max(beta, dd.j0_offsum(static_cast<long>(k) * sp.m2)) : beta;
      const double gap = 1.0 - std::abs(sp.lambda_C0(k)) - beta_eff;
      if (!(gap > 0.0)) return 0.0;
      mu_o = std::min(mu_o, gap * gap);
    }
    for (long row = 0; row < sp.m2 * (sp.n - 1); ++row) {
      const double numer = 1.0 - sigma * dd.chi21(row);
      if (!(numer > 0.0)) return 0.0;
      const double denom = dd.chi22(row) + dd.s22_diag(row);
      if (denom <= 0.0) continue;  // no constraint from this row
      const double root = numer / denom;
      mu_o = std::min(mu_o, root * root);
    }
  }
  return std::isfinite(mu_o) ? mu_o : 0.0;
}

}  // namespace

StepSizeBound step_size_bound(const Matrix& C, const std::vector<Matrix>& G,
                              const Vector& tau,
                              const std::optional<SimilarityParams>& params) {
  const int n = static_cast<int>(C.rows());
  if (C.cols() != n || n == 0) throw std::invalid_argument("C must be square");
  if (static_cast<int>(G.size()) != n) throw std::invalid_argument("one G_k per agent");
  if (tau.size() != n || (tau.array() < 0).any() || std::abs(tau.sum() - 1.0) > 1e-8)
    throw std::invalid_argument("tau must be a probability vector");
  if (n > 1 && (C * tau - tau).lpNorm<Eigen::Infinity>() > 1e-8)
    throw std::invalid_argument("tau must be the Perron eigenvector of C");

  const SpectralPieces sp = build_spectral_pieces(C, G, tau);
  const double re_min = sp.lambda_G.real().minCoeff();
  const double gap_C =
      n > 1 ? 1.0 - sp.lambda_C0.cwiseAbs().maxCoeff() : 1.0;
  if (n > 1 && !(gap_C > 0.0))
    throw std::runtime_error("C has a subdominant eigenvalue on the unit circle");

  StepSizeBound best;
  best.schur_fallback = sp.schur;

  // Without grading the disk sums do not depend on (epsilon, beta); build
  // them once and let the grid vary only the scalar terms.
  std::optional<DiskData> shared;
  if (!sp.schur) shared = build_disks(sp, G, tau, false, 0.0, 0.0);

  auto run = [&](double epsilon, double beta) {
    const DiskData dd = shared ? *shared : build_disks(sp, G, tau, true, epsilon, beta);
    const double max_chi21 = n > 1 ? dd.chi21.maxCoeff() : 0.0;
    std::vector<double> sigmas;
    if (max_chi21 <= 1e-300) {
      sigmas = {1.0};
    } else {
      for (double f : {0.9, 0.7, 0.5, 0.3, 0.15, 0.05}) sigmas.push_back(f / max_chi21);
    }
    for (double sigma : sigmas) {
      const double mu_o = evaluate_bound(sp, dd, epsilon, beta, sigma);
      if (mu_o > best.mu_o) {
        best.mu_o = mu_o;
        best.params = SimilarityParams{epsilon, beta, sigma};
      }
    }
  };

  if (params.has_value()) {
    const SimilarityParams p = *params;
    if (!(p.epsilon > 0.0) || !(p.epsilon < re_min))
      throw std::invalid_argument("epsilon must lie in (0, min Re lambda(Gbar))");
    if (n > 1 && (!(p.beta > 0.0) || !(p.beta < gap_C)))
      throw std::invalid_argument("beta must lie in (0, 1 - |lambda_2(C)|)");
    if (!(p.sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    const DiskData dd = build_disks(sp, G, tau, sp.schur, p.epsilon, p.beta);
    const double max_chi21 = n > 1 ? dd.chi21.maxCoeff() : 0.0;
    if (max_chi21 > 0.0 && !(p.sigma < 1.0 / max_chi21))
      throw std::invalid_argument("sigma must lie in (0, 1 / max chi21)");
    best.mu_o = evaluate_bound(sp, dd, p.epsilon, p.beta, p.sigma);
    best.params = p;
    return best;
  }

  const double beta_cap = n > 1 ? gap_C : 1.0;
  for (double fe : {0.5, 0.25, 0.1, 0.05, 0.01, 0.002})
    for (double fb : {0.5, 0.25, 0.1, 0.05, 0.01, 0.002}) run(re_min * fe, beta_cap * fb);
  if (!(best.mu_o > 0.0))
    throw std::runtime_error("no feasible similarity parameters found for the bound");
  return best;
}

// ---------------------------------------------------------------------------
// Full report

AnalysisReport full_report(const AnalysisConfig& config) {
  config.mdp.validate(1e-9);
  const int N = static_cast<int>(config.behaviors.size());
  if (config.C.rows() != N || config.C.cols() != N)
    throw std::invalid_argument("C shape does not match the number of agents");
  const int M = config.features.num_features();
  const long L = 2L * M * N;

  AnalysisReport rep;
  rep.num_agents = N;
  rep.num_features = M;
  rep.num_states = config.mdp.num_states;
  rep.gamma = config.gamma;
  rep.eta = config.eta;
  rep.mu = config.mu;

  const Vector perron = perron_eigenvector(config.C);
  if (config.tau_override.has_value()) {
    rep.tau = *config.tau_override;
    rep.tau_is_perron = (rep.tau - perron).lpNorm<Eigen::Infinity>() <= 1e-10;
    if (rep.tau.size() != N || (rep.tau.array() < 0).any() ||
        std::abs(rep.tau.sum() - 1.0) > 1e-9)
      throw std::invalid_argument("tau override must be a probability vector");
  } else {
    rep.tau = perron;
    rep.tau_is_perron = true;
  }

  const Matrix P_pi = induced_transition_matrix(config.mdp, config.target);
  const Vector r_pi = expected_reward(config.mdp, config.target);

  std::vector<AgentMoments> moments;
  moments.reserve(static_cast<std::size_t>(N));
  std::vector<Vector> d_list;
  for (int k = 0; k < N; ++k) {
    moments.push_back(agent_moments(config.mdp, config.target, config.behaviors[k],
                                    config.features, config.gamma, config.eta));
    d_list.push_back(moments.back().d);
  }
  rep.d_bar = in_network_distribution(rep.tau, d_list);
  rep.dbar_positive = rep.d_bar.minCoeff() > 0.0;

  rep.agent_identifiable.assign(N, 1);
  for (int k = 0; k < N; ++k) {
    try {
      const ObjectiveContext ctx =
          ObjectiveContext::make(config.features, d_list[k], P_pi, r_pi, config.gamma);
      (void)optimal_w(ctx);
    } catch (const SingularSystemError&) {
      rep.agent_identifiable[k] = 0;
    }
  }

  const SaddlePoint sp =
      saddle_point(config.features, rep.d_bar, P_pi, r_pi, config.gamma);
  rep.w_o = sp.w_o;
  rep.theta_o = sp.theta_o;
  rep.alpha_o = Vector::Zero(2 * M);
  rep.alpha_o.tail(M) = sp.w_o;
  rep.cooperation_required =
      std::find(rep.agent_identifiable.begin(), rep.agent_identifiable.end(), 0) !=
      rep.agent_identifiable.end();

  try {
    const Vector d_pi = stationary_distribution(P_pi);
    const ObjectiveContext on_policy =
        ObjectiveContext::make(config.features, d_pi, P_pi, r_pi, config.gamma);
    rep.w_pi = optimal_w(on_policy);
  } catch (const std::exception&) {
    rep.w_pi = Vector();
  }

  const MeanStability ms = mean_stability(config.C, moments, rep.alpha_o, config.mu);
  rep.rho_mean = ms.rho;
  rep.mean_stable = ms.stable;
  if (ms.stable) {
    rep.alpha_tilde_inf = ms.alpha_tilde_inf;
    rep.bias_norm = ms.alpha_tilde_inf.norm();
  }

  std::vector<Matrix> Gs;
  for (const auto& am : moments) Gs.push_back(am.G);
  const StepSizeBound bound = step_size_bound(config.C, Gs, perron);
  rep.mu_o = bound.mu_o;
  rep.mu_o_params = bound.params;
  rep.mu_o_schur_fallback = bound.schur_fallback;

  const long total = static_cast<long>(N) * config.mdp.num_states *
                     config.mdp.num_states * config.mdp.num_actions;
  if (!ms.stable) {
    rep.msd_note = "mean recursion unstable at this step-size";
  } else if (L > config.limits.max_dimension) {
    rep.msd_note = "2MN = " + std::to_string(L) +
                   " exceeds the dense second-order cap; MSD not evaluated";
  } else if (total > config.limits.max_total_samples) {
    rep.msd_note = "enumeration cap exceeded; MSD not evaluated";
  } else {
    const SecondOrderMoments som = second_order_moments(
        config.mdp, config.target, config.behaviors, config.features, config.gamma,
        config.eta, config.C, rep.alpha_o, config.mu, config.limits);
    rep.rho_F = som.rho_F_exact;
    if (som.rho_F_exact < 1.0 && som.q.size() > 0) {
      rep.msd_network = steady_state_msd(som.F_exact, som.q, MsdSelector::network, N);
      rep.msd_per_node = Vector::Zero(N);
      for (int k = 0; k < N; ++k)
        rep.msd_per_node(k) = steady_state_msd(som.F_exact, som.q, MsdSelector::node, N, k);
      rep.msd_available = true;
    } else {
      rep.msd_note = "rho(F) >= 1: mean-square unstable at this step-size";
    }
  }
  return rep;
}

namespace {

void write_scalar(std::FILE* f, const char* name, double v) {
  std::fprintf(f, "scalar %s %.17g\n", name, v);
}

void write_flag(std::FILE* f, const char* name, bool v) {
  std::fprintf(f, "flag %s %d\n", name, v ? 1 : 0);
}

void write_vector(std::FILE* f, const char* name, const Vector& v) {
  std::fprintf(f, "vector %s %ld\n", name, static_cast<long>(v.size()));
  for (long i = 0; i < v.size(); ++i)
    std::fprintf(f, i == 0 ? "%.17g" : " %.17g", v(i));
  if (v.size() > 0) std::fputc('\n', f);
}

}  // namespace

void save_report(const AnalysisReport& rep, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fprintf(f, "# diffusion GTD analysis report\n");
  write_scalar(f, "num_agents", rep.num_agents);
  write_scalar(f, "num_features", rep.num_features);
  write_scalar(f, "num_states", rep.num_states);
  write_scalar(f, "gamma", rep.gamma);
  write_scalar(f, "eta", rep.eta);
  write_scalar(f, "mu", rep.mu);
  write_flag(f, "tau_is_perron", rep.tau_is_perron);
  write_vector(f, "tau", rep.tau);
  write_vector(f, "w_o", rep.w_o);
  write_vector(f, "theta_o", rep.theta_o);
  write_vector(f, "w_pi", rep.w_pi);
  write_vector(f, "d_bar", rep.d_bar);
  write_flag(f, "dbar_positive", rep.dbar_positive);
  write_flag(f, "cooperation_required", rep.cooperation_required);
  {
    Vector ident(rep.agent_identifiable.size());
    for (std::size_t k = 0; k < rep.agent_identifiable.size(); ++k)
      ident(static_cast<long>(k)) = rep.agent_identifiable[k];
    write_vector(f, "agent_identifiable", ident);
  }
  write_scalar(f, "rho_mean", rep.rho_mean);
  write_flag(f, "mean_stable", rep.mean_stable);
  write_scalar(f, "bias_norm", rep.bias_norm);
  write_vector(f, "alpha_tilde_inf", rep.alpha_tilde_inf);
  write_scalar(f, "mu_o", rep.mu_o);
  write_scalar(f, "mu_o_epsilon", rep.mu_o_params.epsilon);
  write_scalar(f, "mu_o_beta", rep.mu_o_params.beta);
  write_scalar(f, "mu_o_sigma", rep.mu_o_params.sigma);
  write_flag(f, "mu_o_schur_fallback", rep.mu_o_schur_fallback);
  write_flag(f, "msd_available", rep.msd_available);
  if (rep.msd_available) {
    write_scalar(f, "rho_F", rep.rho_F);
    write_scalar(f, "msd_network", rep.msd_network);
    write_vector(f, "msd_per_node", rep.msd_per_node);
  } else {
    std::fprintf(f, "note msd %s\n", rep.msd_note.c_str());
  }
  std::fclose(f);
}

}  // namespace dgtd
