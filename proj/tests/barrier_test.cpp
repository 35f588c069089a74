#include "robform/barrier.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>

using namespace robform;

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& y, double h = 1e-6) {
  Eigen::VectorXd g(y.size());
  for (int k = 0; k < y.size(); ++k) {
    Eigen::VectorXd a = y, b = y;
    a(k) += h;
    b(k) -= h;
    g(k) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

Eigen::VectorXd random_direction(std::mt19937& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(2);
  v << n(rng), n(rng);
  return v.normalized();
}

/// Regular polygon offsets with the given side length.
Eigen::MatrixXd polygon(int n, double side) {
  const double rad = side / (2.0 * std::sin(kPi / n));
  Eigen::MatrixXd tau(n, 2);
  for (int i = 0; i < n; ++i) tau.row(i) << rad * std::cos(2 * kPi * i / n), rad * std::sin(2 * kPi * i / n);
  return tau;
}

TopologyState ring_topology(int n, const Eigen::MatrixXd& x, const AgentGeometry& geom) {
  TopologyState t;
  for (int i = 0; i < n; ++i) t.formation_edges.insert(make_pair_sorted(i, (i + 1) % n));
  t.edges = t.formation_edges;
  return update_edges(x, t, geom);
}

}  // namespace

TEST(PsiE, CapAndZero) {
  for (double r_hat : {0.5, 2.0, 5.2}) {
    for (double mu : {0.1, 3.0, 1e4}) {
      EXPECT_NEAR(psi_e(r_hat, r_hat, mu), mu, 1e-12 * mu);
    }
  }
  EXPECT_EQ(psi_e(0.0, 3.0, 10.0), 0.0);
  EXPECT_EQ(grad_psi_e(Eigen::Vector2d::Zero(), 3.0, 10.0).norm(), 0.0);
}

TEST(PsiE, DomainViolation) {
  // Denominator vanishes at q = r^ + r^^2 / mu.
  EXPECT_THROW(psi_e(3.0 + 9.0 / 10.0 + 1e-9, 3.0, 10.0), DomainViolation);
  EXPECT_THROW(psi_e(5.0, 3.0, 10.0), DomainViolation);
  EXPECT_THROW(grad_psi_e(Eigen::Vector2d(5.0, 0.0), 3.0, 10.0), DomainViolation);
  EXPECT_NO_THROW(psi_e(3.5, 3.0, 10.0));
}

TEST(PsiE, GradientMatchesFiniteDifferences) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double r_hat = 0.5 + 5.0 * u(rng);
    const double mu = std::pow(10.0, -1.0 + 4.0 * u(rng));
    const double q = (0.01 + 0.98 * u(rng)) * r_hat;
    const Eigen::VectorXd y = q * random_direction(rng);
    const Eigen::VectorXd g = grad_psi_e(y, r_hat, mu);
    const Eigen::VectorXd fd = fd_gradient([&](const Eigen::VectorXd& v) { return psi_e(v.norm(), r_hat, mu); }, y);
    EXPECT_LE((g - fd).norm(), 1e-6 * g.norm()) << "trial " << trial;
  }
}

TEST(PsiE, GradientRatioBoundedNearZero) {
  const double r_hat = 3.0, mu = 10.0;
  const double limit = 2.0 / (r_hat + r_hat * r_hat / mu);
  for (double q : {1e-3, 1e-6, 1e-9}) {
    const Eigen::Vector2d y(q, 0.0);
    const double ratio = grad_psi_e(y, r_hat, mu).norm() / q;
    EXPECT_TRUE(std::isfinite(ratio));
    EXPECT_NEAR(ratio, limit, 1e-2 * limit);
  }
}

TEST(PsiE, MonotoneOnDomain) {
  const double r_hat = 4.0, mu = 20.0;
  double prev = -1.0;
  for (int k = 0; k <= 200; ++k) {
    const double v = psi_e(r_hat * k / 200.0, r_hat, mu);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(PsiC, CapAndZero) {
  const double d_s = 1.875;
  for (double tn : {2.5, 2.8, 4.0}) {
    for (double mu : {0.1, 3.0, 1e4}) {
      EXPECT_NEAR(psi_c(d_s, tn, d_s, mu), mu, 1e-12 * mu);
    }
    EXPECT_EQ(psi_c(tn, tn, d_s, 5.0), 0.0);
    const Eigen::Vector2d tau(tn, 0.0);
    EXPECT_EQ(grad_psi_c(Eigen::Vector2d::Zero(), tau, d_s, 5.0).norm(), 0.0);
  }
}

TEST(PsiC, DomainViolationAndSingularity) {
  const double d_s = 1.875, tn = 2.8, mu = 5.0;
  const double edge = d_s - (d_s - tn) * (d_s - tn) / mu;
  EXPECT_THROW(psi_c(edge - 1e-9, tn, d_s, mu), DomainViolation);
  EXPECT_NO_THROW(psi_c(edge + 1e-6, tn, d_s, mu));
  const Eigen::Vector2d tau(tn, 0.0);
  EXPECT_THROW(grad_psi_c(-tau, tau, d_s, mu), DomainViolation);
}

TEST(PsiC, GradientMatchesFiniteDifferences) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const AgentGeometry geom;
  for (int trial = 0; trial < 100; ++trial) {
    const double tn = geom.r_z + (geom.r_s - geom.r_z) * u(rng);
    const double mu = std::pow(10.0, -1.0 + 4.0 * u(rng));
    const double p = geom.d_s + (geom.r_z - geom.d_s) * (0.01 + 0.98 * u(rng));
    const Eigen::VectorXd tau = tn * random_direction(rng);
    const Eigen::VectorXd x = p * random_direction(rng);
    const Eigen::VectorXd y = x - tau;
    const Eigen::VectorXd g = grad_psi_c(y, tau, geom.d_s, mu);
    const Eigen::VectorXd fd =
        fd_gradient([&](const Eigen::VectorXd& v) { return psi_c((v + tau).norm(), tn, geom.d_s, mu); }, y);
    EXPECT_LE((g - fd).norm(), 1e-6 * g.norm()) << "trial " << trial;
  }
}

TEST(PsiC, GradientRatioBoundedNearDesiredDistance) {
  const double d_s = 1.875, tn = 2.8, mu = 10.0;
  const Eigen::Vector2d tau(tn, 0.0);
  for (double e : {1e-3, 1e-6, 1e-9}) {
    const Eigen::Vector2d y(-e, 0.0);
    const double ratio = grad_psi_c(y, tau, d_s, mu).norm() / e;
    EXPECT_TRUE(std::isfinite(ratio));
    EXPECT_LT(ratio, 10.0);
    EXPECT_GT(ratio, 0.0);
  }
}

TEST(PsiC, MonotoneDecreasingTowardDesiredDistance) {
  const double d_s = 1.875, tn = 3.0, mu = 8.0;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 200; ++k) {
    const double p = d_s + (tn - d_s) * k / 200.0;
    const double v = psi_c(p, tn, d_s, mu);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Energy, ZeroAtEquilibrium) {
  const AgentGeometry geom;
  const Eigen::MatrixXd tau = polygon(6, 2.8);
  FormationState s{tau, Eigen::MatrixXd::Zero(6, 2)};
  const TopologyState topo = ring_topology(6, s.x, geom);
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(6, 6);
  g.diagonal().setZero();
  EXPECT_EQ(energy_W(s, tau, topo, masked_weights(g, topo), geom, {50.0, 50.0, 0.05}), 0.0);
}

TEST(Energy, QuadraticTermIsKroneckerForm) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::uniform_real_distribution<double> w(0.2, 2.0);
  const AgentGeometry geom;
  const int n = 6;
  const Eigen::MatrixXd tau = polygon(n, 2.8);
  FormationState s{tau, Eigen::MatrixXd::Zero(n, 2)};
  for (int i = 0; i < n; ++i) s.x.row(i) += Eigen::RowVector2d(u(rng), u(rng));
  const TopologyState topo = ring_topology(n, s.x, geom);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) g(i, j) = g(j, i) = w(rng);
  }
  const Eigen::MatrixXd gm = masked_weights(g, topo);
  const EnergyTerms e = energy_terms(s, tau, topo, gm, geom, {50.0, 50.0, 0.05});

  // y^T (L (x) I_2) y with y stacked agent by agent.
  const Eigen::MatrixXd l = laplacian(gm);
  Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) kron.block(2 * i, 2 * j, 2, 2) = l(i, j) * Eigen::Matrix2d::Identity();
  }
  Eigen::VectorXd y(2 * n);
  for (int i = 0; i < n; ++i) y.segment(2 * i, 2) = (s.x.row(i) - tau.row(i)).transpose();
  EXPECT_NEAR(e.quadratic, 0.5 * y.dot(kron * y), 1e-12);
  EXPECT_GT(e.connect, 0.0);
  EXPECT_EQ(e.kinetic, 0.0);
}

TEST(TuneMu, TwoAgentsAtRest) {
  const AgentGeometry geom;
  Eigen::MatrixXd tau(2, 2);
  tau << 0.0, 0.0, 3.0, 0.0;
  TuneInput in;
  in.state = {tau, Eigen::MatrixXd::Zero(2, 2)};
  in.tau = tau;
  in.topo.formation_edges = {{0, 1}};
  in.topo.edges = {{0, 1}};
  in.geom = geom;
  Eigen::MatrixXd g(2, 2);
  g << 0.0, 1.0, 1.0, 0.0;
  in.g_samples = {g};
  const TuneResult res = tune_mu(in);
  EXPECT_LE(res.iterations, 3);
  EXPECT_EQ(res.w0, 0.0);
  EXPECT_DOUBLE_EQ(res.mu_safe, res.entry_bound);
  EXPECT_NEAR(res.entry_bound, psi_c(geom.r_z, 3.0, geom.d_s, res.params.mu2), 1e-12);
  EXPECT_GT(res.params.mu1, res.mu_safe);
  EXPECT_EQ(res.params.mu1, res.params.mu2);
  EXPECT_LT(connect_margin_value(tau, in.topo, geom, res.params), res.params.mu1);
}

TEST(TuneMu, PerturbedHexagonSelfConsistent) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  std::uniform_real_distribution<double> v(-1.0, 1.0);
  const AgentGeometry geom;
  const int n = 6;
  const Eigen::MatrixXd tau = polygon(n, 2.8);
  TuneInput in;
  in.state = {tau, Eigen::MatrixXd::Zero(n, 2)};
  for (int i = 0; i < n; ++i) {
    in.state.x.row(i) += Eigen::RowVector2d(u(rng), u(rng));
    in.state.rho.row(i) << v(rng), v(rng);
  }
  in.tau = tau;
  in.topo = ring_topology(n, in.state.x, geom);
  in.geom = geom;
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(n, n);
  g.diagonal().setZero();
  in.g_samples = {g, 1.4 * g, 0.6 * g};
  const TuneResult res = tune_mu(in);
  ASSERT_GT(res.iterations, 1);
  const double mu = res.params.mu1;
  const auto [w0, entry] = detail::mu_safe_parts(in, mu);
  EXPECT_LT(w0 + entry, mu);
  EXPECT_LT(std::abs(mu - kMuDamping * (w0 + entry)), 1e-9 * mu);
  EXPECT_LT(connect_margin_value(tau, in.topo, geom, res.params), mu);
  for (std::size_t k = 1; k < res.trace.size(); ++k) EXPECT_LE(res.trace[k], res.trace[k - 1] * (1 + 1e-12));

  TuneInput faster = in;
  faster.state.rho *= 2.0;
  EXPECT_GT(tune_mu(faster).mu_safe, res.mu_safe);
}

TEST(TuneMu, RejectsBadInputs) {
  const AgentGeometry geom;
  Eigen::MatrixXd tau(2, 2);
  tau << 0.0, 0.0, 3.0, 0.0;
  TuneInput in;
  in.state = {tau, Eigen::MatrixXd::Zero(2, 2)};
  in.tau = tau;
  in.topo.formation_edges = {{0, 1}};
  in.topo.edges = {{0, 1}};
  in.geom = geom;
  EXPECT_THROW(tune_mu(in), std::invalid_argument);  // no samples
  in.g_samples = {Eigen::MatrixXd::Zero(2, 2)};
  in.eps_hat = 0.2;
  EXPECT_THROW(tune_mu(in), std::invalid_argument);
  in.eps_hat = 0.05;
  in.geom.d_s = 1.5;
  EXPECT_THROW(tune_mu(in), std::invalid_argument);
  in.geom = geom;
  in.state.x(1, 0) = 1.8;
  EXPECT_THROW(tune_mu(in), TuneError);
}
