#pragma once

// Scenario files and certificate documents (JSON).
//
// A polynomial is written either as a number (constant) or as a term list
// [{"exponents": [...], "coeff": coefficient}, ...].

#include "robform/certifier.hpp"
#include "robform/simulate.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace robform {

using json = nlohmann::json;

/// Malformed or inconsistent scenario; `where` is a JSON pointer or byte offset.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Polynomials

inline json polynomial_to_json(const Polynomial& p) {
  json terms = json::array();
  for (const auto& [e, c] : p.terms()) terms.push_back({{"exponents", e}, {"coeff", c}});
  return terms;
}

inline Polynomial polynomial_from_json(const json& j, int r, const std::string& where) {
  if (j.is_number()) return Polynomial::constant(r, j.get<double>());
  if (!j.is_array()) throw ScenarioError(where, "polynomial must be a number or a term list");
  Polynomial p(r);
  for (std::size_t k = 0; k < j.size(); ++k) {
    const json& t = j[k];
    const std::string at = where + "/" + std::to_string(k);
    if (!t.is_object() || !t.contains("coeff") || !t.contains("exponents") || !t["coeff"].is_number() || !t["exponents"].is_array()) {
      throw ScenarioError(at, "term must be {\"exponents\": [...], \"coeff\": number}");
    }
    Exponents e;
    for (const auto& v : t["exponents"]) {
      if (!v.is_number_integer() || v.get<int>() < 0) throw ScenarioError(at + "/exponents", "exponents must be non-negative integers");
      e.push_back(v.get<int>());
    }
    if (static_cast<int>(e.size()) != r) throw ScenarioError(at + "/exponents", "expected " + std::to_string(r) + " exponents");
    p.add_term(e, t["coeff"].get<double>());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Scenario

struct AssumptionWaiver {
  std::string check;  ///< "A1", "A2" or "A3"
  std::string reason;
};

struct InitialSpec {
  std::optional<Eigen::MatrixXd> x;
  std::optional<Eigen::MatrixXd> rho;
  Eigen::VectorXd offset;
  double position_jitter = 0.0;
  double velocity_lo = 0.0;
  double velocity_hi = 0.0;
};

struct Scenario {
  std::string name;
  int n = 2;
  AgentGeometry geom;
  Eigen::MatrixXd tau;
  std::set<AgentPair> formation;
  InitialSpec initial;
  UncertainAdjacency g;  ///< weights of every pair that may become an edge
  int d_P = 0;
  int lambda_samples = 10000;
  int verify_samples = 500;
  double tol = 1e-8;
  SimSettings sim;
  double eps_hat = 0.05;
  std::optional<BarrierParams> barrier_override;
  A3Scope a3_scope = A3Scope::formation_pairs;
  std::vector<AssumptionWaiver> waivers;
  std::string certificate;  ///< precomputed certificate, relative to the scenario file
  std::uint64_t hash = 0;

  int agents() const { return static_cast<int>(tau.rows()); }
  bool waived(const std::string& check) const {
    for (const auto& w : waivers) {
      if (w.check == check) return true;
    }
    return false;
  }
};

namespace detail {

inline const json& need(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ScenarioError(where, std::string("missing field '") + key + "'");
  return j.at(key);
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ScenarioError(where, "expected a number");
  return j.get<double>();
}

inline double number_or(const json& j, const char* key, double fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return number(j.at(key), where + "/" + key);
}

inline int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ScenarioError(where, "expected an integer");
  return j.get<int>();
}

inline Eigen::MatrixXd matrix_rows(const json& j, int cols, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ScenarioError(where, "expected a non-empty list of rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = where + "/" + std::to_string(i);
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols) {
      throw ScenarioError(at, "expected a row of length " + std::to_string(cols));
    }
    for (int k = 0; k < cols; ++k) m(static_cast<Eigen::Index>(i), k) = number(j[i][k], at + "/" + std::to_string(k));
  }
  return m;
}

inline AgentPair pair(const json& j, int n, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ScenarioError(where, "pair must be [i, j]");
  const int a = integer(j[0], where + "/0"), b = integer(j[1], where + "/1");
  if (a < 0 || b < 0 || a >= n || b >= n || a == b) throw ScenarioError(where, "pair indices out of range or equal");
  return make_pair_sorted(a, b);
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError("byte " + std::to_string(e.byte), e.what());
  }
  if (!doc.is_object()) throw ScenarioError("/", "scenario must be a JSON object");
  Scenario sc;
  sc.hash = fnv1a(text);
  if (doc.contains("name") && !doc["name"].is_string()) throw ScenarioError("/name", "expected a string");
  sc.name = doc.value("name", std::string("scenario"));
  if (doc.contains("certificate")) {
    if (!doc["certificate"].is_string()) throw ScenarioError("/certificate", "expected a file path");
    sc.certificate = doc["certificate"].get<std::string>();
  }
  if (doc.contains("dimension")) sc.n = detail::integer(doc["dimension"], "/dimension");
  if (sc.n < 1) throw ScenarioError("/dimension", "must be positive");

  if (doc.contains("geometry")) {
    const json& g = doc["geometry"];
    sc.geom.r_a = detail::number_or(g, "r_a", sc.geom.r_a, "/geometry");
    sc.geom.r_c = detail::number_or(g, "r_c", sc.geom.r_c, "/geometry");
    sc.geom.r_z = detail::number_or(g, "r_z", sc.geom.r_z, "/geometry");
    sc.geom.r_s = detail::number_or(g, "r_s", sc.geom.r_s, "/geometry");
    sc.geom.d_s = detail::number_or(g, "d_s", sc.geom.d_s, "/geometry");
    sc.geom.eps = detail::number_or(g, "eps", sc.geom.eps, "/geometry");
  }

  sc.tau = detail::matrix_rows(detail::need(doc, "tau", "/"), sc.n, "/tau");
  const int N = sc.agents();
  if (N < 2) throw ScenarioError("/tau", "at least two agents are required");
  const json& fe = detail::need(doc, "formation_edges", "/");
  if (!fe.is_array()) throw ScenarioError("/formation_edges", "expected a list of pairs");
  for (std::size_t k = 0; k < fe.size(); ++k) sc.formation.insert(detail::pair(fe[k], N, "/formation_edges/" + std::to_string(k)));

  sc.initial.offset = Eigen::VectorXd::Zero(sc.n);
  if (doc.contains("initial")) {
    const json& in = doc["initial"];
    if (in.contains("x")) sc.initial.x = detail::matrix_rows(in["x"], sc.n, "/initial/x");
    if (in.contains("rho")) sc.initial.rho = detail::matrix_rows(in["rho"], sc.n, "/initial/rho");
    if (sc.initial.x && sc.initial.x->rows() != N) throw ScenarioError("/initial/x", "one row per agent expected");
    if (sc.initial.rho && sc.initial.rho->rows() != N) throw ScenarioError("/initial/rho", "one row per agent expected");
    if (in.contains("offset")) sc.initial.offset = detail::matrix_rows(json::array({in["offset"]}), sc.n, "/initial/offset").row(0).transpose();
    sc.initial.position_jitter = detail::number_or(in, "position_jitter", 0.0, "/initial");
    if (in.contains("velocity_range")) {
      const json& vr = in["velocity_range"];
      if (!vr.is_array() || vr.size() != 2) throw ScenarioError("/initial/velocity_range", "expected [lo, hi]");
      sc.initial.velocity_lo = detail::number(vr[0], "/initial/velocity_range/0");
      sc.initial.velocity_hi = detail::number(vr[1], "/initial/velocity_range/1");
      if (sc.initial.velocity_lo > sc.initial.velocity_hi) throw ScenarioError("/initial/velocity_range", "lo > hi");
    }
    if (sc.initial.position_jitter < 0.0) throw ScenarioError("/initial/position_jitter", "must be non-negative");
  }

  const json& un = detail::need(doc, "uncertainty", "/");
  const int r = detail::integer(detail::need(un, "params", "/uncertainty"), "/uncertainty/params");
  if (r < 1) throw ScenarioError("/uncertainty/params", "at least one parameter is required");
  sc.g.N = N;
  sc.g.G = MatrixPolynomial(N, N, r);
  if (un.contains("omega")) {
    if (!un["omega"].is_array()) throw ScenarioError("/uncertainty/omega", "expected a list of polynomials");
    for (std::size_t k = 0; k < un["omega"].size(); ++k) {
      sc.g.omega.push_back(polynomial_from_json(un["omega"][k], r, "/uncertainty/omega/" + std::to_string(k)));
    }
  }
  const json& box = detail::need(un, "box", "/uncertainty");
  const Eigen::MatrixXd b = detail::matrix_rows(box, 2, "/uncertainty/box");
  if (b.rows() != r) throw ScenarioError("/uncertainty/box", "one interval per parameter expected");
  for (int k = 0; k < r; ++k) {
    if (b(k, 0) > b(k, 1)) throw ScenarioError("/uncertainty/box/" + std::to_string(k), "lo > hi");
    sc.g.box.push_back({b(k, 0), b(k, 1)});
  }
  const Polynomial fallback =
      un.contains("default_weight") ? polynomial_from_json(un["default_weight"], r, "/uncertainty/default_weight") : Polynomial::constant(r, 1.0);
  for (int i = 0; i < N; ++i) {
    for (int j = i + 1; j < N; ++j) {
      sc.g.G(i, j) = fallback;
      sc.g.G(j, i) = fallback;
    }
  }
  if (un.contains("weights")) {
    const json& ws = un["weights"];
    if (!ws.is_array()) throw ScenarioError("/uncertainty/weights", "expected a list");
    for (std::size_t k = 0; k < ws.size(); ++k) {
      const std::string at = "/uncertainty/weights/" + std::to_string(k);
      const AgentPair p = detail::pair(detail::need(ws[k], "pair", at), N, at + "/pair");
      const Polynomial w = polynomial_from_json(detail::need(ws[k], "w", at), r, at + "/w");
      sc.g.G(p.first, p.second) = w;
      sc.g.G(p.second, p.first) = w;
    }
  }
  sc.g.G.mark_symmetric();

  if (doc.contains("certify")) {
    const json& c = doc["certify"];
    if (c.contains("d_P")) sc.d_P = detail::integer(c["d_P"], "/certify/d_P");
    if (c.contains("samples")) sc.lambda_samples = detail::integer(c["samples"], "/certify/samples");
    if (c.contains("verify_samples")) sc.verify_samples = detail::integer(c["verify_samples"], "/certify/verify_samples");
    sc.tol = detail::number_or(c, "tol", sc.tol, "/certify");
    if (sc.d_P < 0) throw ScenarioError("/certify/d_P", "must be non-negative");
    if (sc.lambda_samples < 1 || sc.verify_samples < 1) throw ScenarioError("/certify", "sample counts must be positive");
  }

  if (doc.contains("simulation")) {
    const json& s = doc["simulation"];
    sc.sim.dt = detail::number_or(s, "dt", sc.sim.dt, "/simulation");
    sc.sim.T = detail::number_or(s, "T", sc.sim.T, "/simulation");
    sc.sim.converge_tol = detail::number_or(s, "converge_tol", sc.sim.converge_tol, "/simulation");
    sc.sim.converge_by = detail::number_or(s, "converge_by", sc.sim.converge_by, "/simulation");
    sc.sim.drift_factor = detail::number_or(s, "drift_factor", sc.sim.drift_factor, "/simulation");
    sc.sim.resample_every = detail::number_or(s, "resample_every", sc.sim.resample_every, "/simulation");
    if (s.contains("record_every")) sc.sim.record_every = detail::integer(s["record_every"], "/simulation/record_every");
    if (s.contains("integrator")) {
      const std::string m = s["integrator"].is_string() ? s["integrator"].get<std::string>() : "";
      if (m == "rk4") {
        sc.sim.integrator = Integrator::rk4;
      } else if (m == "euler") {
        sc.sim.integrator = Integrator::euler;
      } else {
        throw ScenarioError("/simulation/integrator", "expected \"rk4\" or \"euler\"");
      }
    }
    if (!(sc.sim.dt > 0.0)) throw ScenarioError("/simulation/dt", "must be positive");
    if (!(sc.sim.T >= 0.0)) throw ScenarioError("/simulation/T", "must be non-negative");
    if (sc.sim.record_every < 1) throw ScenarioError("/simulation/record_every", "must be >= 1");
  }

  if (doc.contains("barrier")) {
    const json& bj = doc["barrier"];
    sc.eps_hat = detail::number_or(bj, "eps_hat", sc.eps_hat, "/barrier");
    if (bj.contains("mu1") || bj.contains("mu2")) {
      BarrierParams bp;
      bp.mu1 = detail::number(detail::need(bj, "mu1", "/barrier"), "/barrier/mu1");
      bp.mu2 = detail::number(detail::need(bj, "mu2", "/barrier"), "/barrier/mu2");
      bp.eps_hat = sc.eps_hat;
      sc.barrier_override = bp;
    }
  }

  if (doc.contains("assumptions")) {
    const json& a = doc["assumptions"];
    if (a.contains("a3_scope")) {
      const std::string s = a["a3_scope"].is_string() ? a["a3_scope"].get<std::string>() : "";
      if (s == "formation_pairs") {
        sc.a3_scope = A3Scope::formation_pairs;
      } else if (s == "all_pairs") {
        sc.a3_scope = A3Scope::all_pairs;
      } else {
        throw ScenarioError("/assumptions/a3_scope", "expected \"formation_pairs\" or \"all_pairs\"");
      }
    }
    if (a.contains("waive")) {
      for (std::size_t k = 0; k < a["waive"].size(); ++k) {
        const std::string at = "/assumptions/waive/" + std::to_string(k);
        const json& w = a["waive"][k];
        const std::string check = detail::need(w, "check", at).is_string() ? w["check"].get<std::string>() : "";
        if (check != "A1" && check != "A2" && check != "A3") throw ScenarioError(at + "/check", "expected A1, A2 or A3");
        sc.waivers.push_back({check, w.value("reason", std::string())});
      }
    }
  }
  return sc;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline Scenario load_scenario(const std::string& path) { return parse_scenario(read_file(path)); }

/// Initial positions and velocities; generated parts depend only on the seed.
inline FormationState initial_state(const Scenario& sc, std::uint64_t seed) {
  const int N = sc.agents();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1717u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  std::uniform_real_distribution<double> vel(sc.initial.velocity_lo, std::nextafter(sc.initial.velocity_hi, INFINITY));
  FormationState s;
  if (sc.initial.x) {
    s.x = *sc.initial.x;
  } else {
    s.x = sc.tau;
    for (int i = 0; i < N; ++i) {
      for (int k = 0; k < sc.n; ++k) s.x(i, k) += sc.initial.offset(k) + sc.initial.position_jitter * jitter(rng);
    }
  }
  if (sc.initial.rho) {
    s.rho = *sc.initial.rho;
  } else {
    s.rho = Eigen::MatrixXd::Zero(N, sc.n);
    if (sc.initial.velocity_hi > sc.initial.velocity_lo) {
      for (int i = 0; i < N; ++i) {
        for (int k = 0; k < sc.n; ++k) s.rho(i, k) = vel(rng);
      }
    } else {
      s.rho.setConstant(sc.initial.velocity_lo);
    }
  }
  return s;
}

/// G(t0, theta): scenario weights restricted to the edges present at t0.
inline UncertainAdjacency initial_adjacency(const Scenario& sc, const Eigen::MatrixXd& x0) {
  const TopologyState topo = initial_topology(x0, sc.formation, sc.geom);
  UncertainAdjacency g = sc.g;
  const int N = sc.agents();
  for (int i = 0; i < N; ++i) {
    for (int j = i + 1; j < N; ++j) {
      if (topo.edges.count({i, j})) continue;
      g.G(i, j) = Polynomial(g.num_params());
      g.G(j, i) = Polynomial(g.num_params());
    }
  }
  g.G.mark_symmetric();
  return g;
}

inline FormationProblem make_problem(const Scenario& sc, const FormationState& init, const BarrierParams& bp) {
  FormationProblem p;
  p.geom = sc.geom;
  p.tau = sc.tau;
  p.formation = sc.formation;
  p.x0 = init.x;
  p.rho0 = init.rho;
  p.g = sc.g;
  p.params = bp;
  return p;
}

/// Necessary-condition check that the sampling box contains Omega: no point
/// just outside the box may satisfy every s_i > 0, and some interior point
/// must satisfy every s_i >= 0. Empty string when the check passes.
inline std::string check_box(const UncertainAdjacency& g, std::uint64_t seed = 1) {
  const int r = g.num_params();
  auto inside = [&](const Eigen::VectorXd& t, bool strict) {
    for (const auto& s : g.omega) {
      const double v = s.eval(t);
      if (strict ? !(v > 0.0) : !(v >= 0.0)) return false;
    }
    return true;
  };
  Eigen::VectorXd lo(r), hi(r);
  for (int k = 0; k < r; ++k) {
    lo(k) = g.box[k].first;
    hi(k) = g.box[k].second;
  }
  const Eigen::VectorXd margin = 1e-6 + 0.01 * (hi - lo).array();
  if (!g.omega.empty()) {
    for (int mask = 0; mask < (1 << std::min(r, 16)); ++mask) {
      Eigen::VectorXd c(r);
      for (int k = 0; k < r; ++k) c(k) = ((mask >> k) & 1) ? hi(k) + margin(k) : lo(k) - margin(k);
      if (inside(c, true)) return "Omega extends past a corner of the sampling box";
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool any_inside = false;
  for (int trial = 0; trial < 2000; ++trial) {
    Eigen::VectorXd t(r);
    for (int k = 0; k < r; ++k) t(k) = lo(k) + (hi(k) - lo(k)) * u(rng);
    if (inside(t, false)) any_inside = true;
    // Push one coordinate just outside its face.
    if (!g.omega.empty()) {
      const int k = trial % r;
      Eigen::VectorXd o = t;
      o(k) = (trial / r) % 2 ? hi(k) + margin(k) : lo(k) - margin(k);
      if (inside(o, true)) return "Omega extends past a face of the sampling box";
    }
  }
  if (!any_inside) return "no sampled point of the box lies in Omega";
  return {};
}

// ---------------------------------------------------------------------------
// Certificates

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw std::runtime_error("matrix must be a list of rows");
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != static_cast<std::size_t>(m.cols())) throw std::runtime_error("ragged matrix");
    for (std::size_t k = 0; k < j[i].size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
  }
  return m;
}

inline json certificate_to_json(const Certificate& c) {
  json d;
  d["c_star"] = c.c_star;
  d["degree_plan"] = {{"d_P", c.plan.d_P}, {"d_R", c.plan.d_R}, {"d_H", c.plan.d_H}};
  d["r"] = c.r;
  d["s"] = c.s;
  d["P_bar"] = matrix_to_json(c.P_bar);
  json rs = json::array();
  for (const auto& m : c.R_bars) rs.push_back(matrix_to_json(m));
  d["R_bars"] = rs;
  d["delta"] = c.delta;
  return d;
}

inline Certificate certificate_from_json(const json& d) {
  Certificate c;
  c.c_star = d.at("c_star").get<double>();
  c.plan.d_P = d.at("degree_plan").at("d_P").get<int>();
  c.plan.d_R = d.at("degree_plan").at("d_R").get<std::vector<int>>();
  c.plan.d_H = d.at("degree_plan").at("d_H").get<int>();
  c.r = d.at("r").get<int>();
  c.s = d.at("s").get<int>();
  c.P_bar = matrix_from_json(d.at("P_bar"));
  for (const auto& m : d.at("R_bars")) c.R_bars.push_back(matrix_from_json(m));
  c.delta = d.at("delta").get<std::vector<double>>();
  return c;
}

}  // namespace robform
