#pragma once

// Steps shared by the command-line tool and the acceptance suite: scenario
// validation, the simulation gates and barrier cap selection.

#include "robform/barrier.hpp"
#include "robform/certifier.hpp"
#include "robform/io.hpp"
#include "robform/simulate.hpp"

#include <string>

namespace robform {

/// Loads a scenario and applies the checks that make it well formed.
inline Scenario load_checked_scenario(const std::string& path) {
  Scenario sc = load_scenario(path);
  if (const std::string msg = sc.geom.check(); !msg.empty()) throw ScenarioError("/geometry", msg);
  if (!(sc.eps_hat > 0.0 && sc.eps_hat < sc.geom.eps)) throw ScenarioError("/barrier/eps_hat", "must lie in (0, eps)");
  if (const std::string msg = check_box(sc.g); !msg.empty()) throw ScenarioError("/uncertainty/box", msg);
  return sc;
}

inline AssumptionReport scenario_assumptions(const Scenario& sc, const FormationState& init) {
  const TopologyState topo = initial_topology(init.x, sc.formation, sc.geom);
  return validate_assumptions(sc.tau, sc.formation, topo.edges, sc.geom, sc.a3_scope);
}

/// True when a failing check is not covered by a waiver.
inline bool assumptions_block(const AssumptionReport& rep, const Scenario& sc) {
  for (const auto& c : rep.checks) {
    if (!c.pass && !sc.waived(c.name.substr(0, 2))) return true;
  }
  return false;
}

struct BarrierChoice {
  BarrierParams params;
  std::string source;  ///< "tuned" or "override"
  int iterations = 0;
  double mu_safe = 0.0;
};

/// Adjacency samples for tuning: G at theta* and at points of Omega.
inline std::vector<Eigen::MatrixXd> tuning_samples(const Scenario& sc, std::uint64_t seed, int extra = 64) {
  std::vector<Eigen::MatrixXd> out{sc.g.G.eval(draw_theta(sc.g, seed))};
  for (const auto& t : sample_omega(sc.g, extra, seed + 1).points) out.push_back(sc.g.G.eval(t));
  return out;
}

/// Tuned caps for the initial state; throws TuneError.
inline BarrierChoice tuned_barrier(const Scenario& sc, const FormationState& init, std::uint64_t seed) {
  TuneInput ti;
  ti.state = init;
  ti.tau = sc.tau;
  ti.topo = initial_topology(init.x, sc.formation, sc.geom);
  ti.geom = sc.geom;
  ti.eps_hat = sc.eps_hat;
  ti.g_samples = tuning_samples(sc, seed);
  const TuneResult tr = tune_mu(ti);
  return {tr.params, "tuned", tr.iterations, tr.mu_safe};
}

/// The scenario's override when present, otherwise tuned caps.
inline BarrierChoice choose_barrier(const Scenario& sc, const FormationState& init, std::uint64_t seed) {
  if (sc.barrier_override) return {*sc.barrier_override, "override", 0, 0.0};
  return tuned_barrier(sc, init, seed);
}

}  // namespace robform
