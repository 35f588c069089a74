#include "robform/certifier.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace robform;

namespace {

Polynomial unit_disk(int r) {
  Polynomial s = Polynomial::constant(r, 1.0);
  for (int k = 0; k < r; ++k) s -= Polynomial::variable(r, k) * Polynomial::variable(r, k);
  return s;
}

/// K2 with the given edge weight over Omega = {1 - t^2 >= 0}.
UncertainAdjacency two_agents(const Polynomial& w) {
  UncertainAdjacency g;
  g.N = 2;
  g.G = MatrixPolynomial(2, 2, 1);
  g.G(0, 1) = w;
  g.G(1, 0) = w;
  g.omega = {unit_disk(1)};
  g.box = {{-1.0, 1.0}};
  return g;
}

Eigen::MatrixXd path3() {
  Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
  g(0, 1) = g(1, 0) = g(1, 2) = g(2, 1) = 1.0;
  return g;
}

}  // namespace

TEST(Plan, DefaultDegrees) {
  const UncertainAdjacency g = two_agents(Polynomial::constant(1, 1.0) + 0.5 * Polynomial::variable(1, 0));
  const MatrixPolynomial lh = reduced_laplacian(g);
  const DegreePlan p = default_plan(lh, g.omega);
  EXPECT_EQ(p.d_P, 0);
  EXPECT_EQ(p.d_H, 1);
  ASSERT_EQ(p.d_R.size(), 1u);
  EXPECT_EQ(p.d_R[0], 0);
  const DegreePlan p1 = default_plan(lh, g.omega, 1);
  EXPECT_EQ(p1.d_H, 2);
  EXPECT_EQ(p1.d_R[0], 1);

  DegreePlan bad = p;
  bad.d_H = 0;
  EXPECT_THROW(assemble(lh, g.omega, bad), std::invalid_argument);
}

TEST(Assemble, ScalarInstance) {
  MatrixPolynomial lh(1, 1, 1);
  lh(0, 0) = Polynomial::constant(1, 2.0);
  const CertificateProgram cp = assemble(lh, {}, default_plan(lh, {}));
  EXPECT_EQ(cp.p_block.size, 1);
  EXPECT_EQ(cp.delta_count, 0);
  const sdp::Solution s = sdp::solve(cp.problem);
  ASSERT_EQ(s.status, sdp::Status::optimal);
  EXPECT_NEAR(s.objective_value, 4.0, 1e-7);
}

TEST(Assemble, SizesFollowMonomialCounts) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  const int n = 4, r = 2;
  UncertainAdjacency g;
  g.N = n;
  g.G = MatrixPolynomial(n, n, r);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      g.G(i, j) = Polynomial::constant(r, u(rng)) + 0.2 * Polynomial::variable(r, 0) * Polynomial::variable(r, 1);
      g.G(j, i) = g.G(i, j);
    }
  }
  g.omega = {unit_disk(r)};
  g.box = {{-1, 1}, {-1, 1}};
  const MatrixPolynomial lh = reduced_laplacian(g);
  for (int d_P = 0; d_P <= 1; ++d_P) {
    const DegreePlan plan = default_plan(lh, g.omega, d_P);
    const CertificateProgram cp = assemble(lh, g.omega, plan);
    const int s = n - 1;
    EXPECT_EQ(cp.p_block.size, monomial_count(r, plan.d_P) * s);
    EXPECT_EQ(cp.r_blocks[0].size, monomial_count(r, plan.d_R[0]) * s);
    EXPECT_EQ(cp.problem.lmis()[cp.main_lmi].size, monomial_count(r, plan.d_H) * s);
    EXPECT_EQ(cp.delta_count, static_cast<int>(gram_null_basis(r, plan.d_H, s).size()));
  }
}

TEST(Certify, PathIsCertified) {
  const CertifyResult res = certify(constant_adjacency(path3()));
  ASSERT_EQ(res.status, CertifyStatus::certified) << res.message;
  EXPECT_GT(res.certificate.c_star, 1e-6);
  EXPECT_NEAR(res.certificate.P_bar.trace(), 1.0, 1e-8);
}

TEST(Certify, DisconnectedIsInconclusive) {
  Eigen::Matrix4d g = Eigen::Matrix4d::Zero();
  g(0, 1) = g(1, 0) = 1.0;
  g(2, 3) = g(3, 2) = 1.0;
  const CertifyResult res = certify(constant_adjacency(g));
  EXPECT_EQ(res.status, CertifyStatus::inconclusive) << res.message;
  EXPECT_LE(res.best_c, 1e-6);
}

TEST(Certify, PositiveWeightOverInterval) {
  const UncertainAdjacency g = two_agents(Polynomial::constant(1, 1.0) + 0.5 * Polynomial::variable(1, 0));
  const CertifyResult res = certify(g);
  ASSERT_EQ(res.status, CertifyStatus::certified) << res.message;
  // Hand solution: Gram [[R, 1], [1, 4 - R]] - c I is best at R = 2, c = 1.
  EXPECT_NEAR(res.certificate.c_star, 1.0, 1e-6);
  EXPECT_TRUE(res.verification.pass);
}

TEST(Certify, SignChangingWeightNotCertified) {
  const UncertainAdjacency g = two_agents(Polynomial::variable(1, 0));
  const CertifyResult res = certify(g);
  EXPECT_NE(res.status, CertifyStatus::certified);
  EXPECT_LE(res.best_c, 1e-6);
}

TEST(Verify, DoubledBoundFails) {
  const UncertainAdjacency g = two_agents(Polynomial::constant(1, 1.0) + 0.5 * Polynomial::variable(1, 0));
  const CertifyResult res = certify(g);
  ASSERT_EQ(res.status, CertifyStatus::certified);
  const MatrixPolynomial lh = reduced_laplacian(g);
  const VerificationReport ok = verify_certificate(res.certificate, lh, g, 2000, 5);
  EXPECT_TRUE(ok.pass);
  EXPECT_GT(ok.worst_P, 0.0);
  EXPECT_GT(ok.worst_PL, 0.0);
  Certificate doubled = res.certificate;
  doubled.c_star *= 2.0;
  const VerificationReport bad = verify_certificate(doubled, lh, g, 2000, 5);
  EXPECT_FALSE(bad.pass);
  EXPECT_LT(bad.worst_H, -1e-3);
}

TEST(Verify, ConstantCaseMatchesEigencheck) {
  const UncertainAdjacency g = constant_adjacency(path3());
  const CertifyResult res = certify(g);
  ASSERT_EQ(res.status, CertifyStatus::certified);
  const MatrixPolynomial lh = reduced_laplacian(g);
  const VerificationReport rep = verify_certificate(res.certificate, lh, g, 100, 1);
  EXPECT_EQ(rep.samples, 1);
  const double zero[] = {0.0};
  const Eigen::MatrixXd p = res.certificate.P_at(zero);
  const Eigen::MatrixXd l = lh.eval(Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(rep.worst_PL, sym_eigenvalues(p * l + l * p)(0), 1e-12);
}

TEST(Lambda2, KnownSpectra) {
  EXPECT_NEAR(sample_lambda2(constant_adjacency(path3()), 10, 1).min_lambda2, 1.0, 1e-12);
  Eigen::MatrixXd k4 = Eigen::MatrixXd::Ones(4, 4);
  k4.diagonal().setZero();
  EXPECT_NEAR(sample_lambda2(constant_adjacency(k4), 10, 1).min_lambda2, 4.0, 1e-12);
}

TEST(Lambda2, IntervalMinimumAtLeftEnd) {
  const UncertainAdjacency g = two_agents(Polynomial::constant(1, 1.0) + 0.5 * Polynomial::variable(1, 0));
  const Lambda2Sample s = sample_lambda2(g, 20000, 9);
  EXPECT_EQ(s.samples, 20000);
  EXPECT_NEAR(s.min_lambda2, 1.0, 1e-3);
  EXPECT_NEAR(s.argmin(0), -1.0, 1e-3);
}

TEST(Lambda2, DeterministicAcrossWorkerCounts) {
  UncertainAdjacency g = two_agents(Polynomial::constant(1, 1.0) + 0.5 * Polynomial::variable(1, 0));
  const ThetaSamples a = sample_omega(g, 3000, 42);
  setenv("RF_THREADS", "3", 1);
  const ThetaSamples b = sample_omega(g, 3000, 42);
  unsetenv("RF_THREADS");
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t k = 0; k < a.points.size(); ++k) EXPECT_EQ(a.points[k], b.points[k]);
}

TEST(Lambda2, ThinSetRejected) {
  UncertainAdjacency g = two_agents(Polynomial::constant(1, 1.0));
  // 1e-8 - t^2 >= 0 inside [-1, 1]: acceptance far below 0.1%.
  g.omega = {Polynomial::constant(1, 1e-8) - Polynomial::variable(1, 0) * Polynomial::variable(1, 0)};
  EXPECT_THROW(sample_lambda2(g, 100, 1), SamplingError);
}

TEST(Certify, ReductionConsistencyRandomGraphs) {
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> w(0.1, 2.0);
  std::bernoulli_distribution edge(0.35);
  int disagreements = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 7;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (edge(rng)) g(i, j) = g(j, i) = w(rng);
      }
    }
    const bool connected = algebraic_connectivity(laplacian(g)) > 1e-3;
    const CertifyResult res = certify(constant_adjacency(g));
    const bool certified = res.status == CertifyStatus::certified;
    if (connected != certified) ++disagreements;
  }
  EXPECT_EQ(disagreements, 0);
}
