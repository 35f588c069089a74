#pragma once

// Closed-loop simulation of double-integrator agents under the distributed
// barrier controller
//
//   u_i = - sum_{j in N_i^sf} grad Psi_e - sum_{j in N_i^sz} grad Psi_c
//         - sum_{j in N_i^s} G_ij (y_ij + rho_ij)
//
// with the uncertain parameter drawn once per run. Neighbor sets are frozen
// for the duration of one integration step; the topology is updated after the
// state update. Every step is checked against the safety, connectedness and
// energy invariants.

#include "robform/barrier.hpp"
#include "robform/certifier.hpp"
#include "robform/netgraph.hpp"
#include "robform/parallel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace robform {

enum class Integrator { rk4, euler };

inline const char* to_string(Integrator m) { return m == Integrator::rk4 ? "rk4" : "euler"; }

struct SimSettings {
  double dt = 1e-3;
  double T = 40.0;
  Integrator integrator = Integrator::rk4;
  int record_every = 100;
  /// Convergence thresholds on formation error and velocity disagreement.
  double converge_tol = 1e-2;
  /// Convergence is required only when the horizon reaches this time.
  double converge_by = 40.0;
  /// Allowed energy increase per step within a fixed topology, as a multiple of dt.
  double drift_factor = 1e-4;
  /// Stress mode: redraw the parameter every this many seconds (0 keeps it fixed).
  double resample_every = 0.0;
};

/// Everything the closed loop needs besides the settings.
struct FormationProblem {
  AgentGeometry geom;
  Eigen::MatrixXd tau;
  std::set<AgentPair> formation;
  Eigen::MatrixXd x0;
  Eigen::MatrixXd rho0;
  UncertainAdjacency g;
  BarrierParams params;

  int agents() const { return static_cast<int>(tau.rows()); }
  int dim() const { return static_cast<int>(tau.cols()); }
};

/// Edges present at t0: every pair closer than r_s.
inline TopologyState initial_topology(const Eigen::MatrixXd& x, const std::set<AgentPair>& formation, const AgentGeometry& geom) {
  TopologyState t;
  t.formation_edges = formation;
  const int n = static_cast<int>(x.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (pair_distance(x, i, j) < geom.r_s) t.edges.insert({i, j});
    }
  }
  return t;
}

struct SimState {
  double t = 0.0;
  Eigen::MatrixXd x;
  Eigen::MatrixXd rho;
  TopologyState topo;
  Eigen::VectorXd theta_star;
};

/// One neighbor as seen from agent i during a step.
struct Neighbor {
  int j = 0;
  double weight = 0.0;
  bool formation = false;
  bool collision = false;
  double r_hat = 0.0;
  Eigen::VectorXd tau_ij;
};

/// Frozen neighbor structure of one step.
struct ActiveSets {
  std::vector<std::vector<Neighbor>> nbrs;
  std::set<AgentPair> collision;

  static ActiveSets build(const Eigen::MatrixXd& x, const Eigen::MatrixXd& tau, const TopologyState& topo,
                          const Eigen::MatrixXd& weights, const AgentGeometry& geom) {
    ActiveSets a;
    const int n = static_cast<int>(x.rows());
    a.nbrs.resize(n);
    for (const auto& [i, j] : topo.edges) {
      const bool coll = pair_distance(x, i, j) < geom.r_z;
      if (coll) a.collision.insert({i, j});
      const bool form = topo.formation_edges.count({i, j}) > 0;
      const Eigen::VectorXd tij = (tau.row(i) - tau.row(j)).transpose();
      const double r_hat = geom.r_s - tij.norm();
      a.nbrs[i].push_back({j, weights(i, j), form, coll, r_hat, tij});
      a.nbrs[j].push_back({i, weights(i, j), form, coll, r_hat, -tij});
    }
    for (auto& v : a.nbrs) std::sort(v.begin(), v.end(), [](const Neighbor& p, const Neighbor& q) { return p.j < q.j; });
    return a;
  }
};

/// Control of agent i. Reads only agent i and its listed neighbors.
inline Eigen::VectorXd control_input(int i, const Eigen::MatrixXd& x, const Eigen::MatrixXd& rho, const Eigen::MatrixXd& tau,
                                     const std::vector<Neighbor>& nbrs, const AgentGeometry& geom, const BarrierParams& bp) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(x.cols());
  const Eigen::VectorXd y_i = (x.row(i) - tau.row(i)).transpose();
  for (const Neighbor& nb : nbrs) {
    const Eigen::VectorXd y_ij = y_i - (x.row(nb.j) - tau.row(nb.j)).transpose();
    const Eigen::VectorXd rho_ij = (rho.row(i) - rho.row(nb.j)).transpose();
    if (nb.formation) u -= grad_psi_e(y_ij, nb.r_hat, bp.mu1);
    if (nb.collision) u -= grad_psi_c(y_ij, nb.tau_ij, geom.d_s, bp.mu2);
    u -= nb.weight * (y_ij + rho_ij);
  }
  return u;
}

inline Eigen::MatrixXd control_all(const Eigen::MatrixXd& x, const Eigen::MatrixXd& rho, const Eigen::MatrixXd& tau,
                                   const ActiveSets& act, const AgentGeometry& geom, const BarrierParams& bp) {
  const int n = static_cast<int>(x.rows());
  Eigen::MatrixXd u(n, x.cols());
  auto one = [&](int i) { u.row(i) = control_input(i, x, rho, tau, act.nbrs[i], geom, bp).transpose(); };
  // Thread start-up dominates for small swarms.
  parallel_for(n, one, n >= 64 ? worker_count() : 1);
  return u;
}

/// Energy with frozen neighbor sets (collision terms follow the frozen set).
inline double energy_frozen(const Eigen::MatrixXd& x, const Eigen::MatrixXd& rho, const Eigen::MatrixXd& tau, const ActiveSets& act,
                            const AgentGeometry& geom, const BarrierParams& bp) {
  double w = 0.0;
  const int n = static_cast<int>(x.rows());
  for (int i = 0; i < n; ++i) {
    for (const Neighbor& nb : act.nbrs[i]) {
      if (nb.j < i) continue;
      const Eigen::VectorXd y_ij = (x.row(i) - tau.row(i) - x.row(nb.j) + tau.row(nb.j)).transpose();
      if (nb.formation) w += psi_e(y_ij.norm(), nb.r_hat, bp.mu1);
      if (nb.collision) w += psi_c((y_ij + nb.tau_ij).norm(), nb.tau_ij.norm(), geom.d_s, bp.mu2);
      w += 0.5 * nb.weight * y_ij.squaredNorm();
    }
  }
  return w + 0.5 * rho.squaredNorm();
}

/// One integration step with frozen neighbor sets. The topology is not touched.
inline void integrate(Eigen::MatrixXd& x, Eigen::MatrixXd& rho, double dt, Integrator method, const Eigen::MatrixXd& tau,
                      const ActiveSets& act, const AgentGeometry& geom, const BarrierParams& bp) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (method == Integrator::euler) {
    rho += dt * control_all(x, rho, tau, act, geom, bp);
    x += dt * rho;
    return;
  }
  const Eigen::MatrixXd k1x = rho;
  const Eigen::MatrixXd k1v = control_all(x, rho, tau, act, geom, bp);
  const Eigen::MatrixXd x2 = x + 0.5 * dt * k1x, v2 = rho + 0.5 * dt * k1v;
  const Eigen::MatrixXd k2v = control_all(x2, v2, tau, act, geom, bp);
  const Eigen::MatrixXd x3 = x + 0.5 * dt * v2, v3 = rho + 0.5 * dt * k2v;
  const Eigen::MatrixXd k3v = control_all(x3, v3, tau, act, geom, bp);
  const Eigen::MatrixXd x4 = x + dt * v3, v4 = rho + dt * k3v;
  const Eigen::MatrixXd k4v = control_all(x4, v4, tau, act, geom, bp);
  x += (dt / 6.0) * (k1x + 2.0 * v2 + 2.0 * v3 + v4);
  rho += (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
}

// ---------------------------------------------------------------------------
// Monitored run

struct TrajectoryLog {
  std::vector<double> t;
  std::vector<Eigen::MatrixXd> x;
  std::vector<Eigen::MatrixXd> rho;
  std::vector<Eigen::MatrixXd> u;
  std::vector<double> W;
  std::vector<double> min_distance;
  std::vector<double> formation_error;
  std::vector<double> velocity_disagreement;
  std::vector<std::vector<AgentPair>> edges;
  std::vector<EdgeEvent> events;

  std::size_t rows() const { return t.size(); }
};

struct Failure {
  std::string kind;
  double t = 0.0;
  AgentPair pair{-1, -1};
  std::string message;
  int exit_code = 4;
};

struct RunMetrics {
  double formation_error = 0.0;        ///< max |y_ij| over formation pairs at the end
  double velocity_disagreement = 0.0;  ///< max |rho_i - rho_j| at the end
  double min_distance = std::numeric_limits<double>::infinity();  ///< over every step
  int edge_switches = 0;
  double final_W = 0.0;
  double max_drift = 0.0;  ///< largest per-step energy increase within a fixed topology
  double max_jump = 0.0;   ///< largest energy jump at a switch
  double max_jump_allowance = 0.0;
  long steps = 0;
  bool converged = false;
  bool convergence_required = false;
};

struct RunResult {
  TrajectoryLog log;
  RunMetrics metrics;
  std::optional<Failure> failure;
  Eigen::VectorXd theta_star;
  int exit_code = 0;
};

struct PairExtreme {
  double value = std::numeric_limits<double>::infinity();
  AgentPair pair{-1, -1};
};

inline PairExtreme min_pair_distance(const Eigen::MatrixXd& x) {
  PairExtreme m;
  const int n = static_cast<int>(x.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = pair_distance(x, i, j);
      if (d < m.value) m = {d, {i, j}};
    }
  }
  return m;
}

inline double formation_error(const Eigen::MatrixXd& x, const Eigen::MatrixXd& tau, const std::set<AgentPair>& formation) {
  double e = 0.0;
  for (const auto& [i, j] : formation) e = std::max(e, (x.row(i) - tau.row(i) - x.row(j) + tau.row(j)).norm());
  return e;
}

inline double velocity_disagreement(const Eigen::MatrixXd& rho) {
  double e = 0.0;
  const int n = static_cast<int>(rho.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) e = std::max(e, (rho.row(i) - rho.row(j)).norm());
  }
  return e;
}

/// Summary of a log; `steps` and the drift bookkeeping come from the run.
inline RunMetrics metrics(const TrajectoryLog& log) {
  RunMetrics m;
  if (log.rows() == 0) return m;
  m.formation_error = log.formation_error.back();
  m.velocity_disagreement = log.velocity_disagreement.back();
  for (double d : log.min_distance) m.min_distance = std::min(m.min_distance, d);
  m.edge_switches = static_cast<int>(log.events.size());
  m.final_W = log.W.back();
  return m;
}

inline Eigen::VectorXd draw_theta(const UncertainAdjacency& g, std::uint64_t seed) { return sample_omega(g, 1, seed).points.at(0); }

inline RunResult run(const FormationProblem& prob, const SimSettings& st, std::uint64_t seed) {
  prob.geom.validate();
  prob.params.validate(prob.geom);
  if (!(st.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(st.T >= 0.0)) throw std::invalid_argument("T must be nonnegative");
  if (st.record_every < 1) throw std::invalid_argument("record_every must be >= 1");
  const int n = prob.agents();
  if (prob.x0.rows() != n || prob.rho0.rows() != n || prob.x0.cols() != prob.dim() || prob.rho0.cols() != prob.dim()) {
    throw DimensionError("initial state shape does not match tau");
  }
  if (prob.g.N != n) throw DimensionError("adjacency size does not match the number of agents");

  RunResult res;
  SimState s;
  s.x = prob.x0;
  s.rho = prob.rho0;
  s.topo = initial_topology(s.x, prob.formation, prob.geom);
  s.theta_star = draw_theta(prob.g, seed);
  res.theta_star = s.theta_star;
  Eigen::MatrixXd weights = prob.g.G.eval(s.theta_star);

  const long steps = std::lround(st.T / st.dt);
  const long resample_stride = st.resample_every > 0.0 ? std::max(1L, std::lround(st.resample_every / st.dt)) : 0;
  RunMetrics& m = res.metrics;
  TrajectoryLog& log = res.log;

  auto fail = [&](const std::string& kind, double t, AgentPair p, const std::string& msg, int code) {
    res.failure = Failure{kind, t, p, msg, code};
    res.exit_code = code;
  };

  ActiveSets act = ActiveSets::build(s.x, prob.tau, s.topo, weights, prob.geom);
  double w_now = 0.0;

  auto record = [&](const SimState& cur, const ActiveSets& a, double w) {
    log.t.push_back(cur.t);
    log.x.push_back(cur.x);
    log.rho.push_back(cur.rho);
    log.u.push_back(control_all(cur.x, cur.rho, prob.tau, a, prob.geom, prob.params));
    log.W.push_back(w);
    log.min_distance.push_back(n >= 2 ? min_pair_distance(cur.x).value : 0.0);
    log.formation_error.push_back(formation_error(cur.x, prob.tau, prob.formation));
    log.velocity_disagreement.push_back(velocity_disagreement(cur.rho));
    log.edges.emplace_back(cur.topo.edges.begin(), cur.topo.edges.end());
  };

  // Runtime invariants on a committed state.
  auto check_state = [&](const SimState& cur) -> bool {
    if (n >= 2) {
      const PairExtreme md = min_pair_distance(cur.x);
      m.min_distance = std::min(m.min_distance, md.value);
      if (!(md.value > prob.geom.d_s)) {
        fail("collision", cur.t, md.pair, "separation " + std::to_string(md.value) + " <= d_s", 4);
        return false;
      }
    }
    for (const auto& p : prob.formation) {
      if (!cur.topo.edges.count(p) || !(pair_distance(cur.x, p.first, p.second) < prob.geom.r_s)) {
        fail("formation_edge_break", cur.t, p, "formation pair reached the sensing radius", 4);
        return false;
      }
    }
    if (!is_connected(n, cur.topo.edges)) {
      fail("disconnected", cur.t, {-1, -1}, "concrete graph is disconnected", 4);
      return false;
    }
    return true;
  };

  try {
    w_now = energy_frozen(s.x, s.rho, prob.tau, act, prob.geom, prob.params);
    record(s, act, w_now);
    if (!check_state(s)) {
      m.steps = 0;
    } else {
      for (long k = 1; k <= steps; ++k) {
        integrate(s.x, s.rho, st.dt, st.integrator, prob.tau, act, prob.geom, prob.params);
        s.t = k * st.dt;
        if (!s.x.allFinite() || !s.rho.allFinite()) {
          fail("non_finite", s.t, {-1, -1}, "state became non-finite", 4);
          break;
        }
        const double w_frozen = energy_frozen(s.x, s.rho, prob.tau, act, prob.geom, prob.params);
        const double drift = w_frozen - w_now;
        m.max_drift = std::max(m.max_drift, drift);
        if (drift > st.drift_factor * st.dt) {
          fail("energy_increase", s.t, {-1, -1}, "energy rose by " + std::to_string(drift) + " within a fixed topology", 4);
          break;
        }

        // Topology and parameter updates after the state update.
        const std::size_t before = log.events.size();
        s.topo = update_edges(s.x, s.topo, prob.geom, s.t, &log.events);
        bool resampled = false;
        if (resample_stride > 0 && k % resample_stride == 0) {
          s.theta_star = draw_theta(prob.g, seed + static_cast<std::uint64_t>(k / resample_stride));
          weights = prob.g.G.eval(s.theta_star);
          resampled = true;
        }
        ActiveSets next = ActiveSets::build(s.x, prob.tau, s.topo, weights, prob.geom);
        const double w_next = energy_frozen(s.x, s.rho, prob.tau, next, prob.geom, prob.params);

        // Upward jumps are allowed only by terms that became active.
        const bool switched = log.events.size() != before || next.collision != act.collision;
        if (switched && !resampled) {
          double allowance = 0.0;
          for (std::size_t e = before; e < log.events.size(); ++e) {
            if (!log.events[e].added) continue;
            const auto [i, j] = log.events[e].pair;
            const Eigen::VectorXd y_ij = (s.x.row(i) - prob.tau.row(i) - s.x.row(j) + prob.tau.row(j)).transpose();
            allowance += 0.5 * weights(i, j) * y_ij.squaredNorm();
          }
          for (const auto& p : next.collision) {
            if (act.collision.count(p)) continue;
            const double tn = pair_distance(prob.tau, p.first, p.second);
            allowance += psi_c(pair_distance(s.x, p.first, p.second), tn, prob.geom.d_s, prob.params.mu2);
          }
          const double jump = w_next - w_frozen;
          m.max_jump = std::max(m.max_jump, jump);
          m.max_jump_allowance = std::max(m.max_jump_allowance, allowance);
          if (jump > allowance + 1e-9) {
            fail("energy_jump", s.t, {-1, -1}, "energy jump " + std::to_string(jump) + " exceeds the entry allowance", 4);
            break;
          }
        }
        act = std::move(next);
        w_now = w_next;
        m.steps = k;
        const bool ok = check_state(s);
        if (!ok || k % st.record_every == 0 || k == steps) record(s, act, w_now);
        if (!ok) break;
      }
    }
  } catch (const DomainViolation& e) {
    fail("domain_violation", s.t, {-1, -1}, e.what(), 5);
  }

  const RunMetrics summary = metrics(log);
  m.formation_error = summary.formation_error;
  m.velocity_disagreement = summary.velocity_disagreement;
  m.edge_switches = summary.edge_switches;
  m.final_W = summary.final_W;
  if (log.rows() > 0) m.min_distance = std::min(m.min_distance, summary.min_distance);
  m.convergence_required = st.T + 1e-12 >= st.converge_by;
  m.converged = m.formation_error <= st.converge_tol && m.velocity_disagreement <= st.converge_tol;
  if (!res.failure && m.convergence_required && !m.converged) {
    res.exit_code = 1;
    res.failure = Failure{"not_converged", s.t, {-1, -1}, "formation error or velocity disagreement above threshold", 1};
  }
  return res;
}

}  // namespace robform
