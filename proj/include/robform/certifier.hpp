#pragma once

// Robust connectedness certificate for an uncertain graph.
//
// With L^(theta) = M^T L(theta) M, the graph is connected for every theta in
// Omega if some P(theta) > 0 makes P L^ + L^ P positive definite on Omega. P and
// the Positivstellensatz multipliers R_i are searched as Gram matrices:
//
//   maximize c  s.t.  P_bar >= 0, R_bar_i >= 0, trace(P_bar) = 1,
//                     Gram(P L^ + L^ P) + D(delta) - c I - sum pad(Gram(R_i s_i)) >= 0.
//
// c* > 0 is sufficient for connectedness; c* <= 0 is inconclusive.

#include "robform/netgraph.hpp"
#include "robform/parallel.hpp"
#include "robform/sdp.hpp"
#include "robform/smr.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace robform {

struct DegreePlan {
  int d_P = 0;
  std::vector<int> d_R;
  int d_H = 0;
};

inline int ceil_half(int v) { return (v + 1) / 2; }

/// Smallest consistent plan for the given d_P.
inline DegreePlan default_plan(const MatrixPolynomial& l_hat, const std::vector<Polynomial>& omega, int d_P = 0) {
  if (d_P < 0) throw std::invalid_argument("d_P must be non-negative");
  DegreePlan plan;
  plan.d_P = d_P;
  plan.d_H = ceil_half(l_hat.degree() + 2 * d_P);
  for (const auto& s : omega) plan.d_H = std::max(plan.d_H, ceil_half(s.degree()));
  for (const auto& s : omega) plan.d_R.push_back((2 * plan.d_H - s.degree()) / 2);
  return plan;
}

inline void check_plan(const DegreePlan& plan, const MatrixPolynomial& l_hat, const std::vector<Polynomial>& omega) {
  if (plan.d_P < 0 || plan.d_H < 0) throw std::invalid_argument("degree plan has negative entries");
  if (plan.d_R.size() != omega.size()) throw std::invalid_argument("degree plan needs one multiplier degree per constraint");
  if (2 * plan.d_H < l_hat.degree() + 2 * plan.d_P) throw std::invalid_argument("degree plan violates 2 d_H >= Deg(P L^ + L^ P)");
  for (std::size_t i = 0; i < omega.size(); ++i) {
    if (plan.d_R[i] < 0) throw std::invalid_argument("degree plan has a negative multiplier degree");
    if (2 * plan.d_H < 2 * plan.d_R[i] + omega[i].degree()) {
      throw std::invalid_argument("degree plan violates 2 d_H >= Deg(R_i) + deg(s_i) for constraint " + std::to_string(i));
    }
  }
}

/// The SDP together with the variable layout needed to read a certificate back.
struct CertificateProgram {
  sdp::Problem problem;
  int r = 0;
  int s = 0;
  DegreePlan plan;
  int c_var = -1;
  sdp::PsdBlock p_block;
  std::vector<sdp::PsdBlock> r_blocks;
  int delta_first = 0;
  int delta_count = 0;
  int main_lmi = -1;
};

namespace detail {

/// Full (row, col, value) entries of the s x s matrix polynomial obtained by
/// expanding the Gram basis element E_ab (a <= b) at half-degree d.
inline std::vector<PolyEntry> gram_basis_entries(const PowerVector& phi, int s, int a, int b) {
  const int alpha = a / s, i = a % s;
  const int beta = b / s, j = b % s;
  const Exponents mono = multiply(phi.monos[alpha], phi.monos[beta]);
  double w = 1.0;
  if (a != b && i == j) w = 2.0;
  std::vector<PolyEntry> out;
  const Polynomial p = Polynomial::monomial(mono, w);
  out.push_back({i, j, p});
  if (i != j) out.push_back({j, i, p});
  return out;
}

/// Upper-triangle entries of P L^ + L^ P for P given by full entries.
inline std::vector<PolyEntry> lyapunov_image(const std::vector<PolyEntry>& p_entries, const MatrixPolynomial& l_hat) {
  const int s = l_hat.rows();
  std::map<std::pair<int, int>, Polynomial> acc;
  for (const auto& pe : p_entries) {
    for (int m = 0; m < s; ++m) {
      const Polynomial& l = l_hat(pe.col, m);
      if (l.is_zero()) continue;
      // X(k, m) with k = pe.row adds to H(k, m) and H(m, k).
      const Polynomial v = pe.value * l;
      const int k = pe.row;
      const auto key = std::minmax(k, m);
      auto [it, inserted] = acc.try_emplace({key.first, key.second}, Polynomial(l_hat.num_vars()));
      it->second += v;
      if (k == m) it->second += v;
    }
  }
  std::vector<PolyEntry> out;
  for (auto& [key, poly] : acc) {
    if (!poly.is_zero()) out.push_back({key.first, key.second, std::move(poly)});
  }
  return out;
}

}  // namespace detail

inline CertificateProgram assemble(const MatrixPolynomial& l_hat, const std::vector<Polynomial>& omega, const DegreePlan& plan) {
  if (l_hat.rows() != l_hat.cols()) throw DimensionError("reduced Laplacian must be square");
  if (!l_hat.is_symmetric(1e-10)) throw std::invalid_argument("reduced Laplacian must be symmetric");
  for (const auto& s : omega) {
    if (s.num_vars() != l_hat.num_vars()) throw DimensionError("constraint polynomial dimension differs from r");
  }
  check_plan(plan, l_hat, omega);

  CertificateProgram cp;
  cp.r = l_hat.num_vars();
  cp.s = l_hat.rows();
  cp.plan = plan;
  const int r = cp.r, s = cp.s;
  const ProductTable table_h(r, plan.d_H);
  const int n_h = table_h.phi.size() * s;
  auto& prob = cp.problem;

  cp.c_var = prob.add_free("c");
  prob.set_objective(cp.c_var, 1.0);

  const PowerVector phi_p = power_vector(r, plan.d_P);
  cp.p_block = prob.add_psd_block("P_bar", phi_p.size() * s);
  std::vector<std::pair<int, double>> trace;
  for (int a = 0; a < cp.p_block.size; ++a) trace.push_back({cp.p_block.var(a, a), 1.0});
  prob.add_equality(std::move(trace), 1.0);

  for (std::size_t i = 0; i < omega.size(); ++i) {
    const PowerVector phi_r = power_vector(r, plan.d_R[i]);
    cp.r_blocks.push_back(prob.add_psd_block("R_bar_" + std::to_string(i + 1), phi_r.size() * s));
  }

  const std::vector<SymSparse> null_basis = gram_null_basis(r, plan.d_H, s);
  cp.delta_first = prob.num_vars();
  cp.delta_count = static_cast<int>(null_basis.size());
  for (int k = 0; k < cp.delta_count; ++k) prob.add_free("delta_" + std::to_string(k));

  cp.main_lmi = prob.add_lmi("H_bar + D(delta) - c I - sum R_i s_i", n_h);

  // -c I
  SymSparse minus_i(n_h);
  for (int k = 0; k < n_h; ++k) minus_i.add(k, k, -1.0);
  prob.add_lmi_term(cp.main_lmi, cp.c_var, std::move(minus_i));

  // Gram image of P L^ + L^ P per P_bar coordinate.
  for (int b = 0; b < cp.p_block.size; ++b) {
    for (int a = 0; a <= b; ++a) {
      const auto p_entries = detail::gram_basis_entries(phi_p, s, a, b);
      const auto image = detail::lyapunov_image(p_entries, l_hat);
      SymSparse g = gram_canonical_sparse(image, table_h, s);
      if (!g.entries.empty()) prob.add_lmi_term(cp.main_lmi, cp.p_block.var(a, b), std::move(g));
    }
  }

  // -pad(Gram(R_i s_i)) per R_bar_i coordinate.
  for (std::size_t i = 0; i < omega.size(); ++i) {
    const PowerVector phi_r = power_vector(r, plan.d_R[i]);
    const int d_rs = ceil_half(2 * plan.d_R[i] + omega[i].degree());
    const ProductTable table_rs(r, d_rs);
    const sdp::PsdBlock& blk = cp.r_blocks[i];
    for (int b = 0; b < blk.size; ++b) {
      for (int a = 0; a <= b; ++a) {
        std::vector<PolyEntry> upper;
        for (const auto& e : detail::gram_basis_entries(phi_r, s, a, b)) {
          if (e.row <= e.col) upper.push_back({e.row, e.col, e.value * omega[i] * -1.0});
        }
        SymSparse g = gram_pad(gram_canonical_sparse(upper, table_rs, s), r, d_rs, plan.d_H, s);
        if (!g.entries.empty()) prob.add_lmi_term(cp.main_lmi, blk.var(a, b), std::move(g));
      }
    }
  }

  for (int k = 0; k < cp.delta_count; ++k) prob.add_lmi_term(cp.main_lmi, cp.delta_first + k, null_basis[k]);
  return cp;
}

struct Certificate {
  double c_star = 0.0;
  DegreePlan plan;
  int r = 0;
  int s = 0;
  Eigen::MatrixXd P_bar;
  std::vector<Eigen::MatrixXd> R_bars;
  std::vector<double> delta;

  /// P(theta) = (phi (x) I)^T P_bar (phi (x) I).
  Eigen::MatrixXd P_at(std::span<const double> theta) const {
    const Eigen::MatrixXd lift = lifted_power_vector(power_vector(r, plan.d_P), s, theta);
    return lift.transpose() * P_bar * lift;
  }
  Eigen::MatrixXd R_at(std::size_t i, std::span<const double> theta) const {
    const Eigen::MatrixXd lift = lifted_power_vector(power_vector(r, plan.d_R.at(i)), s, theta);
    return lift.transpose() * R_bars.at(i) * lift;
  }
};

inline Certificate extract_certificate(const CertificateProgram& cp, const sdp::Solution& sol) {
  Certificate c;
  c.c_star = sol.y(cp.c_var);
  c.plan = cp.plan;
  c.r = cp.r;
  c.s = cp.s;
  c.P_bar = sol.block_value(cp.p_block);
  for (const auto& b : cp.r_blocks) c.R_bars.push_back(sol.block_value(b));
  for (int k = 0; k < cp.delta_count; ++k) c.delta.push_back(sol.y(cp.delta_first + k));
  return c;
}

// ---------------------------------------------------------------------------
// Sampling over Omega

struct ThetaSamples {
  std::vector<Eigen::VectorXd> points;
  long attempts = 0;
};

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSampleChunk = 512;

/// Rejection sampling of n points of Omega from its bounding box. Chunk k uses
/// a generator seeded by (seed, k), so the result does not depend on the
/// number of workers. A degenerate box (lo == hi everywhere) yields one point.
inline ThetaSamples sample_omega(const UncertainAdjacency& g, int n, std::uint64_t seed) {
  const int r = g.num_params();
  if (static_cast<int>(g.box.size()) != r) throw DimensionError("bounding box dimension differs from r");
  ThetaSamples out;
  bool degenerate = true;
  for (const auto& [lo, hi] : g.box) degenerate = degenerate && lo == hi;
  if (degenerate) {
    Eigen::VectorXd t(r);
    for (int k = 0; k < r; ++k) t(k) = g.box[k].first;
    out.attempts = 1;
    if (!g.in_omega(std::span<const double>(t.data(), r))) throw SamplingError("degenerate box point lies outside Omega");
    out.points.push_back(t);
    return out;
  }
  if (n <= 0) return out;
  const int chunks = (n + kSampleChunk - 1) / kSampleChunk;
  std::vector<std::vector<Eigen::VectorXd>> parts(chunks);
  std::vector<long> tries(chunks, 0);
  parallel_for(chunks, [&](int c) {
    const int want = std::min(kSampleChunk, n - c * kSampleChunk);
    std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(c)};
    std::mt19937_64 rng(sq);
    std::vector<std::uniform_real_distribution<double>> dist;
    for (const auto& [lo, hi] : g.box) dist.emplace_back(lo, hi);
    Eigen::VectorXd t(r);
    long attempts = 0;
    while (static_cast<int>(parts[c].size()) < want) {
      for (int k = 0; k < r; ++k) t(k) = dist[k](rng);
      ++attempts;
      if (g.in_omega(std::span<const double>(t.data(), r))) parts[c].push_back(t);
      if (attempts >= 10000 && static_cast<double>(parts[c].size()) < 1e-3 * attempts) {
        throw SamplingError("rejection sampling acceptance below 0.1%: Omega too thin for its bounding box");
      }
    }
    tries[c] = attempts;
  });
  for (int c = 0; c < chunks; ++c) {
    out.attempts += tries[c];
    for (auto& p : parts[c]) out.points.push_back(std::move(p));
  }
  return out;
}

struct Lambda2Sample {
  double min_lambda2 = std::numeric_limits<double>::infinity();
  Eigen::VectorXd argmin;
  int samples = 0;
};

/// Minimum algebraic connectivity of L(theta) over sampled theta in Omega.
inline Lambda2Sample sample_lambda2(const UncertainAdjacency& g, int n, std::uint64_t seed) {
  const ThetaSamples ts = sample_omega(g, n, seed);
  const int m = static_cast<int>(ts.points.size());
  std::vector<double> lam(m);
  parallel_for(m, [&](int k) {
    const Eigen::VectorXd& t = ts.points[k];
    lam[k] = algebraic_connectivity(laplacian(g.G.eval(t)));
  });
  Lambda2Sample out;
  out.samples = m;
  for (int k = 0; k < m; ++k) {
    if (lam[k] < out.min_lambda2) {
      out.min_lambda2 = lam[k];
      out.argmin = ts.points[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Certificate verification

struct VerificationReport {
  int samples = 0;
  double worst_P = std::numeric_limits<double>::infinity();    ///< min lambda(P(theta))
  double worst_H = std::numeric_limits<double>::infinity();    ///< min lambda(H - c* phi^T phi I)
  double worst_PL = std::numeric_limits<double>::infinity();   ///< min lambda(P L^ + L^ P)
  Eigen::VectorXd worst_theta;
  bool pass = false;
};

inline constexpr double kVerifyHTolerance = 1e-6;

/// Evaluates the certificate conditions at sampled points of Omega.
inline VerificationReport verify_certificate(const Certificate& cert, const MatrixPolynomial& l_hat, const UncertainAdjacency& g,
                                             int n_samples, std::uint64_t seed) {
  if (l_hat.rows() != cert.s || l_hat.num_vars() != cert.r) throw DimensionError("certificate does not match the reduced Laplacian");
  if (cert.R_bars.size() != g.omega.size()) throw DimensionError("certificate multiplier count differs from constraint count");
  const ThetaSamples ts = sample_omega(g, n_samples, seed);
  const PowerVector phi_h = power_vector(cert.r, cert.plan.d_H);
  const int m = static_cast<int>(ts.points.size());
  std::vector<Eigen::Vector3d> margins(m);
  parallel_for(m, [&](int k) {
    const Eigen::VectorXd& t = ts.points[k];
    const std::span<const double> th(t.data(), t.size());
    const Eigen::MatrixXd p = cert.P_at(th);
    const Eigen::MatrixXd l = l_hat.eval(t);
    const Eigen::MatrixXd pl = p * l + l.transpose() * p;
    Eigen::MatrixXd h = pl;
    for (std::size_t i = 0; i < g.omega.size(); ++i) h -= cert.R_at(i, th) * g.omega[i].eval(t);
    const double phi2 = phi_h.eval(th).squaredNorm();
    h.diagonal().array() -= cert.c_star * phi2;
    margins[k] = {sym_eigenvalues(p)(0), sym_eigenvalues(h)(0), sym_eigenvalues(pl)(0)};
  });
  VerificationReport rep;
  rep.samples = m;
  for (int k = 0; k < m; ++k) {
    if (margins[k](1) < rep.worst_H) rep.worst_theta = ts.points[k];
    rep.worst_P = std::min(rep.worst_P, margins[k](0));
    rep.worst_H = std::min(rep.worst_H, margins[k](1));
    rep.worst_PL = std::min(rep.worst_PL, margins[k](2));
  }
  rep.pass = m > 0 && rep.worst_P > 0.0 && rep.worst_H >= -kVerifyHTolerance && rep.worst_PL > 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Top-level certification

enum class CertifyStatus { certified, inconclusive, solver_failure };

inline const char* to_string(CertifyStatus s) {
  switch (s) {
    case CertifyStatus::certified:
      return "certified";
    case CertifyStatus::inconclusive:
      return "inconclusive";
    case CertifyStatus::solver_failure:
      return "solver_failure";
  }
  return "unknown";
}

struct CertifyOptions {
  std::optional<DegreePlan> plan;  ///< default_plan(d_P) when empty
  int d_P = 0;
  sdp::Settings solver;
  double threshold = 1e-6;
  int verify_samples = 500;
  std::uint64_t verify_seed = 1;
};

struct CertifyResult {
  CertifyStatus status = CertifyStatus::solver_failure;
  sdp::Status solver_status = sdp::Status::numerical_failure;
  Certificate certificate;
  VerificationReport verification;
  double best_c = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  int lmi_size = 0;
  int num_vars = 0;
  double seconds = 0.0;
  std::string message;
};

inline CertifyResult certify_reduced(const MatrixPolynomial& l_hat, const UncertainAdjacency& g, const CertifyOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  const DegreePlan plan = opt.plan ? *opt.plan : default_plan(l_hat, g.omega, opt.d_P);
  const CertificateProgram cp = assemble(l_hat, g.omega, plan);
  CertifyResult res;
  res.lmi_size = cp.problem.lmis()[cp.main_lmi].size;
  res.num_vars = cp.problem.num_vars();
  const sdp::Solution sol = sdp::solve(cp.problem, opt.solver);
  res.solver_status = sol.status;
  res.iterations = sol.iterations;
  res.certificate = extract_certificate(cp, sol);
  res.best_c = sol.y(cp.c_var);
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  if (sol.status != sdp::Status::optimal) {
    res.status = CertifyStatus::solver_failure;
    res.message = std::string("solver returned ") + sdp::to_string(sol.status) + (sol.diagnostic.empty() ? "" : ": " + sol.diagnostic);
    res.seconds = elapsed();
    return res;
  }
  if (!(res.certificate.c_star > opt.threshold)) {
    res.status = CertifyStatus::inconclusive;
    char buf[96];
    std::snprintf(buf, sizeof buf, "c* = %.3g is not above the threshold %.3g; try a larger d_P", res.certificate.c_star, opt.threshold);
    res.message = buf;
    res.seconds = elapsed();
    return res;
  }
  res.verification = verify_certificate(res.certificate, l_hat, g, opt.verify_samples, opt.verify_seed);
  if (!res.verification.pass) {
    res.status = CertifyStatus::inconclusive;
    res.message = "certificate failed sampled verification";
  } else {
    res.status = CertifyStatus::certified;
  }
  res.seconds = elapsed();
  return res;
}

/// Reduced Laplacian of an uncertain adjacency.
inline MatrixPolynomial reduced_laplacian(const UncertainAdjacency& g) {
  return reduced_laplacian(laplacian(g.G), reduced_basis(g.N));
}

inline CertifyResult certify(const UncertainAdjacency& g, const CertifyOptions& opt = {}) {
  g.validate();
  return certify_reduced(reduced_laplacian(g), g, opt);
}

}  // namespace robform
