#pragma once

// Communication graph: uncertain Laplacian, the reduced Laplacian on the
// complement of the consensus direction, hysteresis edge switching and the
// neighbor sets used by the formation controller.

#include "robform/polynomial.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace robform {

/// Unordered agent pair, normalized so that first < second.
using AgentPair = std::pair<int, int>;

inline AgentPair make_pair_sorted(int i, int j) {
  if (i == j) throw std::invalid_argument("self-loop pair");
  return i < j ? AgentPair{i, j} : AgentPair{j, i};
}

/// Radii and margins of one agent (meters).
struct AgentGeometry {
  double r_a = 0.75;   ///< agent body radius
  double r_c = 0.9375; ///< collision region radius
  double r_z = 2.5;    ///< collision-avoidance activation radius
  double r_s = 8.0;    ///< sensing radius
  double d_s = 1.875;  ///< safety distance
  double eps = 0.1;    ///< hysteresis margin for adding edges

  /// Empty string when valid, otherwise the first violated relation.
  std::string check() const {
    if (!(r_a > 0.0)) return "r_a must be positive";
    if (!(r_a <= r_c)) return "r_a <= r_c violated";
    if (!(r_c < r_z)) return "r_c < r_z violated";
    if (!(r_z < r_s)) return "r_z < r_s violated";
    if (!(d_s >= 2.0 * r_c)) return "d_s >= 2 r_c violated";
    if (!(eps >= 0.0 && eps <= r_s - r_z)) return "0 <= eps <= r_s - r_z violated";
    return {};
  }

  void validate() const {
    if (auto msg = check(); !msg.empty()) throw std::invalid_argument("invalid agent geometry: " + msg);
  }
};

/// Weighted adjacency G(theta) plus the semialgebraic set
/// Omega = { theta : s_i(theta) >= 0 } and a box containing Omega.
struct UncertainAdjacency {
  int N = 0;
  MatrixPolynomial G;
  std::vector<Polynomial> omega;
  std::vector<std::pair<double, double>> box;

  int num_params() const { return G.num_vars(); }

  void validate() const {
    if (G.rows() != N || G.cols() != N) throw DimensionError("adjacency size differs from N");
    for (int i = 0; i < N; ++i) {
      if (!G(i, i).is_zero()) throw std::invalid_argument("adjacency must have a zero diagonal");
    }
    if (!G.is_symmetric()) throw std::invalid_argument("adjacency must be symmetric");
    for (const auto& s : omega) {
      if (s.num_vars() != G.num_vars()) throw DimensionError("constraint polynomial dimension differs from r");
    }
    if (static_cast<int>(box.size()) != G.num_vars()) throw DimensionError("bounding box dimension differs from r");
    for (const auto& [lo, hi] : box) {
      if (!(lo <= hi)) throw std::invalid_argument("bounding box has lo > hi");
    }
  }

  bool in_omega(std::span<const double> theta) const {
    for (const auto& s : omega) {
      if (s.eval(theta) < 0.0) return false;
    }
    return true;
  }
};

/// Uncertainty-free adjacency: one dummy parameter fixed at 0 by the box.
inline UncertainAdjacency constant_adjacency(const Eigen::MatrixXd& g) {
  UncertainAdjacency u;
  u.N = static_cast<int>(g.rows());
  u.G = MatrixPolynomial::from_constant(g, 1);
  u.box = {{0.0, 0.0}};
  return u;
}

/// L = diag(G 1) - G, symbolic.
inline MatrixPolynomial laplacian(const MatrixPolynomial& g) {
  if (g.rows() != g.cols()) throw DimensionError("adjacency must be square");
  if (!g.is_symmetric()) throw std::invalid_argument("laplacian requires a symmetric adjacency");
  const int n = g.rows();
  MatrixPolynomial l(n, n, g.num_vars());
  for (int i = 0; i < n; ++i) {
    Polynomial deg(g.num_vars());
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      deg += g(i, j);
      l(i, j) = -g(i, j);
    }
    l(i, i) = deg;
  }
  l.mark_symmetric();
  return l;
}

inline Eigen::MatrixXd laplacian(const Eigen::MatrixXd& g) {
  if (g.rows() != g.cols()) throw DimensionError("adjacency must be square");
  if (g.size() > 0 && (g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("laplacian requires a symmetric adjacency");
  }
  Eigen::MatrixXd off = g;
  off.diagonal().setZero();
  Eigen::MatrixXd l = -off;
  l.diagonal() = off.rowwise().sum();
  return l;
}

/// Orthonormal basis of ker(1^T) (Helmert columns), N x (N-1).
inline Eigen::MatrixXd reduced_basis(int n) {
  if (n < 2) throw std::invalid_argument("reduced_basis requires N >= 2");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n - 1);
  for (int k = 1; k < n; ++k) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
    for (int i = 0; i < k; ++i) m(i, k - 1) = scale;
    m(k, k - 1) = -k * scale;
  }
  return m;
}

/// M^T L(theta) M.
inline MatrixPolynomial reduced_laplacian(const MatrixPolynomial& l, const Eigen::MatrixXd& m) {
  if (l.rows() != l.cols() || l.rows() != m.rows()) throw DimensionError("reduced_laplacian size mismatch");
  MatrixPolynomial out = times(m.transpose(), l.times(m));
  out.mark_symmetric(1e-10);
  return out;
}

/// Ascending eigenvalues of a symmetric matrix.
inline Eigen::VectorXd sym_eigenvalues(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Second-smallest Laplacian eigenvalue.
inline double algebraic_connectivity(const Eigen::MatrixXd& l) {
  if (l.rows() < 2) return 0.0;
  return sym_eigenvalues(l)(1);
}

// ---------------------------------------------------------------------------
// Topology switching

struct TopologyState {
  std::set<AgentPair> edges;
  std::set<AgentPair> formation_edges;
  double last_switch_time = 0.0;

  bool has_edge(int i, int j) const { return edges.count(make_pair_sorted(i, j)) > 0; }
  bool is_formation(int i, int j) const { return formation_edges.count(make_pair_sorted(i, j)) > 0; }
};

struct EdgeEvent {
  double t = 0.0;
  AgentPair pair;
  bool added = false;
};

inline double pair_distance(const Eigen::MatrixXd& x, int i, int j) { return (x.row(i) - x.row(j)).norm(); }

/// Hysteresis update: a missing pair is added when its distance is <= r_s - eps;
/// a present non-formation pair is removed when its distance is > r_s.
/// Formation pairs are never removed. Events are appended in pair order.
inline TopologyState update_edges(const Eigen::MatrixXd& x, const TopologyState& topo, const AgentGeometry& geom, double t = 0.0,
                                  std::vector<EdgeEvent>* events = nullptr) {
  TopologyState next = topo;
  const int n = static_cast<int>(x.rows());
  const double add_at = geom.r_s - geom.eps;
  bool changed = false;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const AgentPair p{i, j};
      const double dist = pair_distance(x, i, j);
      const bool present = topo.edges.count(p) > 0;
      if (!present && dist <= add_at) {
        next.edges.insert(p);
        changed = true;
        if (events) events->push_back({t, p, true});
      } else if (present && dist > geom.r_s && topo.formation_edges.count(p) == 0) {
        next.edges.erase(p);
        changed = true;
        if (events) events->push_back({t, p, false});
      }
    }
  }
  if (changed) next.last_switch_time = t;
  return next;
}

/// Neighbor sets of one agent: all edges, edges that are formation edges, and
/// edges closer than r_z.
struct NeighborSets {
  std::vector<int> sensing;
  std::vector<int> formation;
  std::vector<int> collision;
};

inline NeighborSets neighbor_sets(int i, const Eigen::MatrixXd& x, const TopologyState& topo, const AgentGeometry& geom) {
  NeighborSets ns;
  const int n = static_cast<int>(x.rows());
  for (int j = 0; j < n; ++j) {
    if (j == i || !topo.has_edge(i, j)) continue;
    ns.sensing.push_back(j);
    if (topo.is_formation(i, j)) ns.formation.push_back(j);
    if (pair_distance(x, i, j) < geom.r_z) ns.collision.push_back(j);
  }
  return ns;
}

/// Union-find connectivity of the concrete edge set.
inline bool is_connected(int n, const std::set<AgentPair>& edges) {
  if (n <= 1) return true;
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  int components = n;
  for (const auto& [i, j] : edges) {
    const int a = find(i);
    const int b = find(j);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components == 1;
}

// ---------------------------------------------------------------------------
// Standing assumptions on the formation problem

struct AssumptionCheck {
  std::string name;
  bool pass = true;
  std::vector<AgentPair> violations;
  std::string detail;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.pass; });
  }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& c : checks) {
      os << c.name << ": " << (c.pass ? "pass" : "FAIL");
      if (!c.detail.empty()) os << " (" << c.detail << ")";
      for (const auto& [i, j] : c.violations) os << " [" << i << "," << j << "]";
      os << "\n";
    }
    return os.str();
  }
};

/// Which pairs the collision/connectedness compatibility condition
/// r_s - |tau_ij| > d_s + |tau_ij| is evaluated on.
enum class A3Scope { formation_pairs, all_pairs };

/// A1: r_z <= |tau_ij| <= r_s - eps on formation pairs.
/// A2: every formation pair is an edge of the initial graph.
/// A3: r_s - |tau_ij| > d_s + |tau_ij|.
inline AssumptionReport validate_assumptions(const Eigen::MatrixXd& tau, const std::set<AgentPair>& formation,
                                             const std::set<AgentPair>& initial_edges, const AgentGeometry& geom,
                                             A3Scope a3_scope = A3Scope::formation_pairs) {
  AssumptionReport rep;
  AssumptionCheck a1;
  a1.name = "A1 (formation distances in [r_z, r_s - eps])";
  AssumptionCheck a2;
  a2.name = "A2 (formation edges present at t0)";
  AssumptionCheck a3;
  a3.name = a3_scope == A3Scope::all_pairs ? "A3 (r_s - |tau_ij| > d_s + |tau_ij|, all pairs)"
                                           : "A3 (r_s - |tau_ij| > d_s + |tau_ij|, formation pairs)";
  const int n = static_cast<int>(tau.rows());
  for (const auto& p : formation) {
    const double dt = pair_distance(tau, p.first, p.second);
    if (dt < geom.r_z || dt > geom.r_s - geom.eps) {
      a1.pass = false;
      a1.violations.push_back(p);
    }
    if (initial_edges.count(p) == 0) {
      a2.pass = false;
      a2.violations.push_back(p);
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (a3_scope == A3Scope::formation_pairs && formation.count({i, j}) == 0) continue;
      const double dt = pair_distance(tau, i, j);
      if (!(geom.r_s - dt > geom.d_s + dt)) {
        a3.pass = false;
        a3.violations.push_back({i, j});
      }
    }
  }
  rep.checks = {a1, a2, a3};
  return rep;
}

}  // namespace robform
