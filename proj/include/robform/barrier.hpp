#pragma once

// Barrier functions of the formation controller and the energy they bound.
//
//   connectedness:  Psi_e(q) = q^2 / (r^ - q + r^^2 / mu1),        q = |y_ij|, r^ = r_s - |tau_ij|
//   collision:      Psi_c(p) = (p - |tau|)^2 / (p - d_s + (d_s - |tau|)^2 / mu2),   p = |x_ij|
//
// Psi_e reaches mu1 at q = r^ and Psi_c reaches mu2 at p = d_s, so a bound on
// the total energy below these caps keeps formation edges shorter than r_s and
// every active pair farther apart than d_s.

#include "robform/netgraph.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace robform {

class DomainViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BarrierParams {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double eps_hat = 0.05;

  void validate(const AgentGeometry& geom) const {
    if (!(mu1 > 0.0) || !(mu2 > 0.0)) throw std::invalid_argument("barrier caps mu1, mu2 must be positive");
    if (!(eps_hat > 0.0 && eps_hat < geom.eps)) throw std::invalid_argument("eps_hat must lie in (0, eps)");
  }
};

// ---------------------------------------------------------------------------
// Connectedness barrier

inline double psi_e_denominator(double q, double r_hat, double mu1) { return r_hat - q + r_hat * r_hat / mu1; }

inline double psi_e(double q, double r_hat, double mu1) {
  if (q < 0.0) throw std::invalid_argument("psi_e requires q >= 0");
  const double d = psi_e_denominator(q, r_hat, mu1);
  if (!(d > 0.0)) throw DomainViolation("connectedness barrier outside its domain (q = " + std::to_string(q) + ")");
  return q * q / d;
}

/// Gradient with respect to y_i; the gradient with respect to y_j is its negative.
inline Eigen::VectorXd grad_psi_e(const Eigen::VectorXd& y_ij, double r_hat, double mu1) {
  const double q = y_ij.norm();
  const double d = psi_e_denominator(q, r_hat, mu1);
  if (!(d > 0.0)) throw DomainViolation("connectedness barrier outside its domain (q = " + std::to_string(q) + ")");
  return ((2.0 * d + q) / (d * d)) * y_ij;
}

// ---------------------------------------------------------------------------
// Collision barrier

inline double psi_c_denominator(double p, double tau_norm, double d_s, double mu2) {
  return p - d_s + (d_s - tau_norm) * (d_s - tau_norm) / mu2;
}

inline double psi_c(double p, double tau_norm, double d_s, double mu2) {
  const double d = psi_c_denominator(p, tau_norm, d_s, mu2);
  if (!(d > 0.0)) throw DomainViolation("collision barrier outside its domain (p = " + std::to_string(p) + ")");
  return (p - tau_norm) * (p - tau_norm) / d;
}

inline double dpsi_c_dp(double p, double tau_norm, double d_s, double mu2) {
  const double d = psi_c_denominator(p, tau_norm, d_s, mu2);
  if (!(d > 0.0)) throw DomainViolation("collision barrier outside its domain (p = " + std::to_string(p) + ")");
  const double e = p - tau_norm;
  return (2.0 * e * d - e * e) / (d * d);
}

/// Gradient with respect to y_i through p = |y_ij + tau_ij|.
inline Eigen::VectorXd grad_psi_c(const Eigen::VectorXd& y_ij, const Eigen::VectorXd& tau_ij, double d_s, double mu2) {
  const Eigen::VectorXd x_ij = y_ij + tau_ij;
  const double p = x_ij.norm();
  if (!(p > 0.0)) throw DomainViolation("collision barrier gradient undefined at zero separation");
  return (dpsi_c_dp(p, tau_ij.norm(), d_s, mu2) / p) * x_ij;
}

// ---------------------------------------------------------------------------
// Energy

/// Rows of x, rho, tau are agents. weights(i, j) is the concrete edge weight
/// used on current edges.
struct FormationState {
  Eigen::MatrixXd x;
  Eigen::MatrixXd rho;
};

struct EnergyTerms {
  double connect = 0.0;    ///< sum of Psi_e over formation edges
  double collision = 0.0;  ///< sum of Psi_c over edges closer than r_z
  double quadratic = 0.0;  ///< 1/2 y^T (L (x) I) y over current edges
  double kinetic = 0.0;    ///< 1/2 sum rho_i^T rho_i
  double total() const { return connect + collision + quadratic + kinetic; }
};

/// Each unordered pair contributes once (the half in front of the double sum
/// over ordered pairs cancels the double count).
inline EnergyTerms energy_terms(const FormationState& s, const Eigen::MatrixXd& tau, const TopologyState& topo,
                                const Eigen::MatrixXd& weights, const AgentGeometry& geom, const BarrierParams& bp) {
  EnergyTerms e;
  const Eigen::MatrixXd y = s.x - tau;
  for (const auto& [i, j] : topo.edges) {
    const Eigen::VectorXd y_ij = (y.row(i) - y.row(j)).transpose();
    const double tau_norm = (tau.row(i) - tau.row(j)).norm();
    if (topo.formation_edges.count({i, j})) e.connect += psi_e(y_ij.norm(), geom.r_s - tau_norm, bp.mu1);
    const double p = pair_distance(s.x, i, j);
    if (p < geom.r_z) e.collision += psi_c(p, tau_norm, geom.d_s, bp.mu2);
    e.quadratic += 0.5 * weights(i, j) * y_ij.squaredNorm();
  }
  e.kinetic = 0.5 * s.rho.squaredNorm();
  return e;
}

inline double energy_W(const FormationState& s, const Eigen::MatrixXd& tau, const TopologyState& topo, const Eigen::MatrixXd& weights,
                       const AgentGeometry& geom, const BarrierParams& bp) {
  return energy_terms(s, tau, topo, weights, geom, bp).total();
}

/// Weight matrix restricted to the current edge set.
inline Eigen::MatrixXd masked_weights(const Eigen::MatrixXd& g, const TopologyState& topo) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(g.rows(), g.cols());
  for (const auto& [i, j] : topo.edges) w(i, j) = w(j, i) = g(i, j);
  return w;
}

// ---------------------------------------------------------------------------
// Barrier cap selection

class TuneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TuneInput {
  FormationState state;
  Eigen::MatrixXd tau;
  TopologyState topo;
  AgentGeometry geom;
  /// Concrete adjacency matrices at the simulation parameter and at sampled
  /// parameters; the initial energy is taken at the worst of them.
  std::vector<Eigen::MatrixXd> g_samples;
  double eps_hat = 0.05;
};

struct TuneResult {
  BarrierParams params;
  double mu_safe = 0.0;     ///< bound evaluated at the returned caps
  double w0 = 0.0;          ///< worst initial energy at the returned caps
  double entry_bound = 0.0; ///< 1/2 N (N - 1) max_ij Psi_c(r_z)
  int iterations = 0;
  std::vector<double> trace;
};

namespace detail {

/// W(t0; mu) maximized over the adjacency samples, plus the entry allowance.
inline std::pair<double, double> mu_safe_parts(const TuneInput& in, double mu) {
  BarrierParams bp;
  bp.mu1 = bp.mu2 = mu;
  bp.eps_hat = in.eps_hat;
  double w0 = 0.0;
  for (const auto& g : in.g_samples) w0 = std::max(w0, energy_W(in.state, in.tau, in.topo, masked_weights(g, in.topo), in.geom, bp));
  const int n = static_cast<int>(in.tau.rows());
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double tn = (in.tau.row(i) - in.tau.row(j)).norm();
      worst = std::max(worst, psi_c(in.geom.r_z, tn, in.geom.d_s, mu));
    }
  }
  return {w0, 0.5 * n * (n - 1) * worst};
}

}  // namespace detail

inline constexpr double kMuDamping = 1.1;

/// Chooses mu1 = mu2 = mu with mu > W(t0; mu) + 1/2 N (N - 1) max Psi_c(r_z; mu).
///
/// mu_safe(mu) grows with mu, so starting from the mu -> infinity bound the
/// iteration mu <- 1.1 mu_safe(mu) decreases monotonically and every iterate
/// satisfies the inequality. When the initial energy carries no mu-independent
/// part and the bound grows slower than mu near zero, no positive fixed point
/// exists and the starting value is returned.
inline TuneResult tune_mu(const TuneInput& in, int max_iter = 100, double rel_tol = 1e-9) {
  in.geom.validate();
  if (in.g_samples.empty()) throw std::invalid_argument("tune_mu needs at least one adjacency sample");
  if (!(in.eps_hat > 0.0 && in.eps_hat < in.geom.eps)) throw std::invalid_argument("eps_hat must lie in (0, eps)");
  const int n = static_cast<int>(in.tau.rows());
  for (const auto& [i, j] : in.topo.formation_edges) {
    const double r_hat = in.geom.r_s - (in.tau.row(i) - in.tau.row(j)).norm();
    if (!(r_hat > 0.0)) throw TuneError("formation pair has |tau_ij| >= r_s");
    if ((in.state.x.row(i) - in.tau.row(i) - in.state.x.row(j) + in.tau.row(j)).norm() >= r_hat) {
      throw TuneError("initial formation error already at the connectedness cap");
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (pair_distance(in.state.x, i, j) <= in.geom.d_s) throw TuneError("initial separation at or below d_s");
    }
  }

  // mu -> infinity limit: the r^2 / mu terms vanish.
  const double big = std::numeric_limits<double>::max() / 4;
  auto [w_inf, entry_inf] = detail::mu_safe_parts(in, big);
  TuneResult res;
  double mu = kMuDamping * (w_inf + entry_inf);
  if (!(mu > 0.0)) throw TuneError("degenerate barrier bound (zero energy and zero entry allowance)");
  res.trace.push_back(mu);

  // Constant part of mu_safe as mu -> 0 and its slope there.
  const double tiny = 1e-12 * mu;
  auto [w_tiny, entry_tiny] = detail::mu_safe_parts(in, tiny);
  BarrierParams bp0;
  bp0.mu1 = bp0.mu2 = tiny;
  double constant = 0.0;
  for (const auto& g : in.g_samples) {
    const EnergyTerms e = energy_terms(in.state, in.tau, in.topo, masked_weights(g, in.topo), in.geom, bp0);
    constant = std::max(constant, e.quadratic + e.kinetic);
  }
  const double slope = (w_tiny - constant + entry_tiny) / tiny;

  if (constant <= 1e-300 && kMuDamping * slope <= 1.0) {
    auto [w0, entry] = detail::mu_safe_parts(in, mu);
    res.params = {mu, mu, in.eps_hat};
    res.mu_safe = w0 + entry;
    res.w0 = w0;
    res.entry_bound = entry;
    res.iterations = 1;
    return res;
  }

  for (int it = 1; it <= max_iter; ++it) {
    auto [w0, entry] = detail::mu_safe_parts(in, mu);
    const double next = kMuDamping * (w0 + entry);
    res.trace.push_back(next);
    const bool done = std::abs(next - mu) <= rel_tol * mu;
    // Keep the larger of the two so the returned cap satisfies the bound.
    if (done) {
      auto [w_fin, entry_fin] = detail::mu_safe_parts(in, mu);
      res.params = {mu, mu, in.eps_hat};
      res.mu_safe = w_fin + entry_fin;
      res.w0 = w_fin;
      res.entry_bound = entry_fin;
      res.iterations = it;
      return res;
    }
    mu = next;
  }
  std::ostringstream os;
  os << "barrier cap iteration did not converge in " << max_iter << " steps; trace:";
  for (double v : res.trace) os << ' ' << v;
  throw TuneError(os.str());
}

/// Largest Psi_e(r^ - eps_hat) over formation pairs (must stay below mu1).
inline double connect_margin_value(const Eigen::MatrixXd& tau, const TopologyState& topo, const AgentGeometry& geom,
                                   const BarrierParams& bp) {
  double worst = 0.0;
  for (const auto& [i, j] : topo.formation_edges) {
    const double r_hat = geom.r_s - (tau.row(i) - tau.row(j)).norm();
    worst = std::max(worst, psi_e(r_hat - bp.eps_hat, r_hat, bp.mu1));
  }
  return worst;
}

}  // namespace robform
