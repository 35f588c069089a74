#include "robform/netgraph.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace robform;

namespace {

Eigen::MatrixXd random_laplacian(int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> w(-1.0, 2.0);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) g(i, j) = g(j, i) = w(rng);
  }
  return laplacian(g);
}

Eigen::MatrixXd line_positions(std::initializer_list<double> xs) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(xs.size()), 2);
  int i = 0;
  for (double v : xs) x(i++, 0) = v;
  return x;
}

}  // namespace

TEST(Laplacian, UnitEdge) {
  Eigen::Matrix2d g;
  g << 0, 1, 1, 0;
  Eigen::Matrix2d want;
  want << 1, -1, -1, 1;
  EXPECT_EQ(laplacian(Eigen::MatrixXd(g)), Eigen::MatrixXd(want));
}

TEST(Laplacian, PathSpectrum) {
  Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
  g(0, 1) = g(1, 0) = g(1, 2) = g(2, 1) = 1.0;
  const Eigen::VectorXd ev = sym_eigenvalues(laplacian(Eigen::MatrixXd(g)));
  EXPECT_NEAR(ev(0), 0.0, 1e-12);
  EXPECT_NEAR(ev(1), 1.0, 1e-12);
  EXPECT_NEAR(ev(2), 3.0, 1e-12);
}

TEST(Laplacian, SymbolicRowSumsVanish) {
  MatrixPolynomial g(2, 2, 1);
  g(0, 1) = Polynomial::constant(1, 1.0) + 0.5 * Polynomial::variable(1, 0);
  g(1, 0) = g(0, 1);
  const MatrixPolynomial l = laplacian(g);
  for (int i = 0; i < 2; ++i) EXPECT_TRUE((l(i, 0) + l(i, 1)).is_zero());
  EXPECT_TRUE(l.is_symmetric());
}

TEST(Laplacian, AsymmetricRejected) {
  Eigen::Matrix2d g;
  g << 0, 1, 2, 0;
  EXPECT_THROW(laplacian(Eigen::MatrixXd(g)), std::invalid_argument);
  MatrixPolynomial gp(2, 2, 1);
  gp(0, 1) = Polynomial::variable(1, 0);
  EXPECT_THROW(laplacian(gp), std::invalid_argument);
}

TEST(Laplacian, PsdForNonnegativeWeights) {
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> w(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 7;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) g(i, j) = g(j, i) = w(rng);
    }
    EXPECT_GE(sym_eigenvalues(laplacian(g))(0), -1e-10);
  }
}

TEST(ReducedBasis, TwoAgents) {
  const Eigen::MatrixXd m = reduced_basis(2);
  ASSERT_EQ(m.cols(), 1);
  EXPECT_NEAR(std::abs(m(0, 0)), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(m(0, 0), -m(1, 0), 1e-15);
  EXPECT_THROW(reduced_basis(1), std::invalid_argument);
}

TEST(ReducedBasis, DefiningProperties) {
  for (int n = 2; n <= 60; ++n) {
    const Eigen::MatrixXd m = reduced_basis(n);
    EXPECT_LT((m.transpose() * Eigen::VectorXd::Ones(n)).norm(), 1e-12);
    EXPECT_LT((m.transpose() * m - Eigen::MatrixXd::Identity(n - 1, n - 1)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ReducedBasis, SpectrumTransfer) {
  std::mt19937 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = trial == 0 ? 6 : 2 + trial % 9;
    const Eigen::MatrixXd l = random_laplacian(n, rng);
    const Eigen::MatrixXd m = reduced_basis(n);
    const Eigen::VectorXd full = sym_eigenvalues(l);
    const Eigen::VectorXd red = sym_eigenvalues(m.transpose() * l * m);
    // Remove the eigenvalue closest to zero from the full spectrum.
    Eigen::Index zero = 0;
    full.cwiseAbs().minCoeff(&zero);
    std::vector<double> rest;
    for (Eigen::Index k = 0; k < full.size(); ++k) {
      if (k != zero) rest.push_back(full(k));
    }
    ASSERT_EQ(static_cast<Eigen::Index>(rest.size()), red.size());
    for (Eigen::Index k = 0; k < red.size(); ++k) EXPECT_NEAR(red(k), rest[k], 1e-9);
  }
}

TEST(ReducedLaplacian, UnitEdge) {
  MatrixPolynomial g(2, 2, 1);
  g(0, 1) = g(1, 0) = Polynomial::constant(1, 1.0);
  const MatrixPolynomial lh = reduced_laplacian(laplacian(g), reduced_basis(2));
  ASSERT_EQ(lh.rows(), 1);
  EXPECT_NEAR(lh(0, 0).coeff({0}), 2.0, 1e-14);
  EXPECT_EQ(lh(0, 0).degree(), 0);
}

TEST(ReducedLaplacian, DisconnectedIsSingular) {
  MatrixPolynomial g(4, 4, 1);
  g(0, 1) = g(1, 0) = Polynomial::constant(1, 1.0) + Polynomial::variable(1, 0);
  g(2, 3) = g(3, 2) = Polynomial::constant(1, 2.0);
  const MatrixPolynomial lh = reduced_laplacian(laplacian(g), reduced_basis(4));
  for (double t : {-0.5, 0.0, 0.7}) {
    EXPECT_NEAR(sym_eigenvalues(lh.eval(Eigen::VectorXd::Constant(1, t)))(0), 0.0, 1e-12);
  }
}

TEST(ReducedLaplacian, EvaluationCommutes) {
  std::mt19937 rng(47);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 5;
  MatrixPolynomial g(n, n, 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      g(i, j) = Polynomial::constant(2, 1.0 + u(rng)) + u(rng) * Polynomial::variable(2, 0) +
                u(rng) * Polynomial::variable(2, 0) * Polynomial::variable(2, 1);
      g(j, i) = g(i, j);
    }
  }
  const MatrixPolynomial l = laplacian(g);
  const Eigen::MatrixXd m = reduced_basis(n);
  const MatrixPolynomial lh = reduced_laplacian(l, m);
  EXPECT_EQ(lh.rows(), n - 1);
  EXPECT_EQ(lh.degree(), l.degree());
  EXPECT_TRUE(lh.is_symmetric());
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector2d t(u(rng), u(rng));
    EXPECT_LT((lh.eval(t) - m.transpose() * l.eval(t) * m).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(reduced_laplacian(l, reduced_basis(4)), DimensionError);
}

TEST(UpdateEdges, HysteresisRules) {
  const AgentGeometry geom;
  TopologyState topo;
  const double add_at = geom.r_s - geom.eps;

  auto next = update_edges(line_positions({0.0, add_at - 0.01}), topo, geom);
  EXPECT_TRUE(next.has_edge(0, 1));

  next = update_edges(line_positions({0.0, geom.r_s - geom.eps / 2}), topo, geom);
  EXPECT_FALSE(next.has_edge(0, 1));

  topo.edges.insert({0, 1});
  std::vector<EdgeEvent> events;
  next = update_edges(line_positions({0.0, geom.r_s + 0.01}), topo, geom, 3.0, &events);
  EXPECT_FALSE(next.has_edge(0, 1));
  ASSERT_EQ(events.size(), 1u);
  EXPECT_FALSE(events[0].added);
  EXPECT_EQ(next.last_switch_time, 3.0);
}

TEST(UpdateEdges, FormationEdgesKept) {
  const AgentGeometry geom;
  TopologyState topo;
  topo.edges.insert({0, 1});
  topo.formation_edges.insert({0, 1});
  const auto next = update_edges(line_positions({0.0, geom.r_s + 5.0}), topo, geom);
  EXPECT_TRUE(next.has_edge(0, 1));
}

TEST(UpdateEdges, BandOscillationKeepsStatus) {
  const AgentGeometry geom;
  std::mt19937 rng(53);
  std::uniform_real_distribution<double> band(geom.r_s - geom.eps + 1e-9, geom.r_s);
  TopologyState with, without;
  with.edges.insert({0, 1});
  for (int k = 0; k < 200; ++k) {
    const Eigen::MatrixXd x = line_positions({0.0, band(rng)});
    with = update_edges(x, with, geom);
    without = update_edges(x, without, geom);
    EXPECT_TRUE(with.has_edge(0, 1));
    EXPECT_FALSE(without.has_edge(0, 1));
  }
}

TEST(NeighborSets, Cases) {
  const AgentGeometry geom;
  TopologyState topo;
  const Eigen::MatrixXd x = line_positions({0.0, geom.r_z - 0.1, 0.5 * (geom.r_z + geom.r_s)});
  auto ns = neighbor_sets(0, x, topo, geom);
  EXPECT_TRUE(ns.sensing.empty() && ns.formation.empty() && ns.collision.empty());

  topo.edges = {{0, 1}, {0, 2}};
  topo.formation_edges = {{0, 1}};
  ns = neighbor_sets(0, x, topo, geom);
  EXPECT_EQ(ns.sensing, (std::vector<int>{1, 2}));
  EXPECT_EQ(ns.formation, (std::vector<int>{1}));
  EXPECT_EQ(ns.collision, (std::vector<int>{1}));
}

TEST(Connectivity, UnionFind) {
  EXPECT_TRUE(is_connected(3, {{0, 1}, {1, 2}}));
  EXPECT_FALSE(is_connected(4, {{0, 1}, {2, 3}}));
  EXPECT_TRUE(is_connected(1, {}));
}

TEST(Geometry, Validation) {
  AgentGeometry g;
  EXPECT_TRUE(g.check().empty());
  g.d_s = 1.87;
  EXPECT_FALSE(g.check().empty());
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Assumptions, CircleFormationPasses) {
  const AgentGeometry geom;
  const int n = 6;
  Eigen::MatrixXd tau(n, 2);
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * i / n;
    tau.row(i) << 2.8 * std::cos(a), 2.8 * std::sin(a);
  }
  std::set<AgentPair> formation;
  for (int i = 0; i < n; ++i) formation.insert(make_pair_sorted(i, (i + 1) % n));
  // Initial positions: tau plus a common shift, so every formation edge is present.
  const Eigen::MatrixXd x0 = tau.rowwise() + Eigen::RowVector2d(4.0, -1.0);
  const TopologyState topo = update_edges(x0, TopologyState{}, geom);
  const AssumptionReport rep = validate_assumptions(tau, formation, topo.edges, geom);
  EXPECT_TRUE(rep.checks[0].pass);
  EXPECT_TRUE(rep.checks[1].pass);
  EXPECT_TRUE(rep.checks[2].pass);
}

TEST(Assumptions, CompatibilityViolation) {
  // 8 - 3.5 = 4.5 < 1.875 + 3.5 = 5.375.
  const AgentGeometry geom;
  Eigen::MatrixXd tau = line_positions({0.0, 3.5});
  const AssumptionReport rep = validate_assumptions(tau, {{0, 1}}, {{0, 1}}, geom, A3Scope::all_pairs);
  EXPECT_TRUE(rep.checks[0].pass);
  EXPECT_FALSE(rep.checks[2].pass);
  ASSERT_EQ(rep.checks[2].violations.size(), 1u);
  EXPECT_EQ(rep.checks[2].violations[0], (AgentPair{0, 1}));
  EXPECT_FALSE(rep.all_pass());
}

TEST(Assumptions, DistanceRangeViolationNamesPair) {
  const AgentGeometry geom;
  const Eigen::MatrixXd tau = line_positions({0.0, 2.9, 2.9 + geom.r_s});
  const AssumptionReport rep = validate_assumptions(tau, {{0, 1}, {1, 2}}, {{0, 1}}, geom);
  EXPECT_FALSE(rep.checks[0].pass);
  EXPECT_EQ(rep.checks[0].violations, (std::vector<AgentPair>{{1, 2}}));
  EXPECT_FALSE(rep.checks[1].pass);
}
