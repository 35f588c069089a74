#pragma once

// Run directory layout:
//   trajectory.csv  t,agent,x1..xn,v1..vn,u1..un (one row per agent and logged time)
//   series.csv      t,W,min_distance,formation_error,velocity_disagreement,edges
//   events.jsonl    edge switches and the failure record, one JSON object per line
//   metrics.json    run summary and exit code
//   manifest.json   everything needed to replay the run

#include "robform/io.hpp"
#include "robform/simulate.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace robform {

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

inline std::string edges_field(const std::vector<AgentPair>& edges) {
  std::string s;
  for (const auto& [i, j] : edges) {
    if (!s.empty()) s += ' ';
    s += std::to_string(i) + "-" + std::to_string(j);
  }
  return s;
}

inline std::string trajectory_csv(const TrajectoryLog& log, int n) {
  std::ostringstream os;
  os << "t,agent";
  for (const char* tag : {"x", "v", "u"}) {
    for (int k = 1; k <= n; ++k) os << ',' << tag << k;
  }
  os << '\n';
  for (std::size_t r = 0; r < log.rows(); ++r) {
    for (Eigen::Index i = 0; i < log.x[r].rows(); ++i) {
      os << fmt_num(log.t[r]) << ',' << i;
      for (const Eigen::MatrixXd* m : {&log.x[r], &log.rho[r], &log.u[r]}) {
        for (int k = 0; k < n; ++k) os << ',' << fmt_num((*m)(i, k));
      }
      os << '\n';
    }
  }
  return os.str();
}

inline std::string series_csv(const TrajectoryLog& log) {
  std::ostringstream os;
  os << "t,W,min_distance,formation_error,velocity_disagreement,edges\n";
  for (std::size_t r = 0; r < log.rows(); ++r) {
    os << fmt_num(log.t[r]) << ',' << fmt_num(log.W[r]) << ',' << fmt_num(log.min_distance[r]) << ','
       << fmt_num(log.formation_error[r]) << ',' << fmt_num(log.velocity_disagreement[r]) << ',' << edges_field(log.edges[r]) << '\n';
  }
  return os.str();
}

inline std::string events_jsonl(const RunResult& res) {
  std::ostringstream os;
  for (const auto& e : res.log.events) {
    json j = {{"t", e.t}, {"pair", {e.pair.first, e.pair.second}}, {"action", e.added ? "add" : "remove"}};
    os << j.dump() << '\n';
  }
  if (res.failure) {
    const Failure& f = *res.failure;
    json j = {{"t", f.t}, {"action", "failure"}, {"kind", f.kind}, {"message", f.message}, {"exit_code", f.exit_code}};
    if (f.pair.first >= 0) j["pair"] = {f.pair.first, f.pair.second};
    os << j.dump() << '\n';
  }
  return os.str();
}

inline json metrics_json(const RunResult& res) {
  const RunMetrics& m = res.metrics;
  json j = {{"formation_error", m.formation_error},
            {"velocity_disagreement", m.velocity_disagreement},
            {"min_distance", m.min_distance},
            {"edge_switches", m.edge_switches},
            {"final_W", m.final_W},
            {"max_energy_drift_per_step", m.max_drift},
            {"max_energy_jump", m.max_jump},
            {"max_jump_allowance", m.max_jump_allowance},
            {"steps", m.steps},
            {"converged", m.converged},
            {"convergence_required", m.convergence_required},
            {"exit_code", res.exit_code}};
  if (res.failure) {
    j["failure"] = {{"kind", res.failure->kind}, {"t", res.failure->t}, {"message", res.failure->message}};
    if (res.failure->pair.first >= 0) j["failure"]["pair"] = {res.failure->pair.first, res.failure->pair.second};
  } else {
    j["failure"] = nullptr;
  }
  return j;
}

struct ManifestInfo {
  std::string tool_version = "1.0.0";
  std::string scenario_name;
  std::uint64_t scenario_hash = 0;
  std::uint64_t seed = 0;
  BarrierParams params;
  std::string barrier_source;  ///< "tuned" or "override"
  int tune_iterations = 0;
  double mu_safe = 0.0;
  std::string certificate_file;
  std::optional<double> c_star;
  bool unsafe = false;
  double dt = 0.0;
  double T = 0.0;
  std::string integrator;
  std::string created;
};

inline json manifest_json(const ManifestInfo& info, const Scenario& sc, const RunResult& res, const std::vector<std::string>& files) {
  json j;
  j["tool"] = "robform";
  j["version"] = info.tool_version;
  j["scenario"] = info.scenario_name;
  j["scenario_hash"] = hex64(info.scenario_hash);
  j["seed"] = info.seed;
  std::vector<double> th(res.theta_star.data(), res.theta_star.data() + res.theta_star.size());
  j["theta_star"] = th;
  j["barrier"] = {{"mu1", info.params.mu1},
                  {"mu2", info.params.mu2},
                  {"eps_hat", info.params.eps_hat},
                  {"source", info.barrier_source},
                  {"tune_iterations", info.tune_iterations},
                  {"mu_safe", info.mu_safe}};
  j["certificate"] = info.certificate_file.empty() ? json(nullptr) : json({{"file", info.certificate_file}, {"c_star", info.c_star.value_or(0.0)}});
  j["unsafe"] = info.unsafe;
  j["integrator"] = {{"method", info.integrator}, {"dt", info.dt}, {"T", info.T}};
  j["geometry"] = {{"r_a", sc.geom.r_a}, {"r_c", sc.geom.r_c}, {"r_z", sc.geom.r_z},
                   {"r_s", sc.geom.r_s}, {"d_s", sc.geom.d_s}, {"eps", sc.geom.eps}};
  json fe = json::array();
  for (const auto& [a, b] : sc.formation) fe.push_back({a, b});
  j["formation_edges"] = fe;
  j["files"] = files;
  j["created"] = info.created;
  return j;
}

// ---------------------------------------------------------------------------
// Reading a run back

class RunDirError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedRun {
  int agents = 0;
  int dim = 0;
  double d_s = 0.0;
  std::vector<AgentPair> formation;
  std::vector<double> t;                   ///< logged times
  std::vector<Eigen::MatrixXd> x;          ///< positions per logged time
  std::vector<double> W, min_distance, formation_error, velocity_disagreement;
  std::vector<std::vector<AgentPair>> edges;
};

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw RunDirError(where + ": not a number: '" + s + "'");
  }
}

inline LoadedRun load_run(const std::filesystem::path& dir) {
  LoadedRun run;
  json manifest;
  try {
    manifest = json::parse(read_file((dir / "manifest.json").string()));
    run.d_s = manifest.at("geometry").at("d_s").get<double>();
    for (const auto& p : manifest.at("formation_edges")) run.formation.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  } catch (const std::exception& e) {
    throw RunDirError("manifest.json: " + std::string(e.what()));
  }

  std::string text;
  try {
    text = read_file((dir / "trajectory.csv").string());
  } catch (const std::exception& e) {
    throw RunDirError(e.what());
  }
  std::istringstream traj(text);
  std::string line;
  if (!std::getline(traj, line)) throw RunDirError("trajectory.csv: missing header");
  const auto header = split(line, ',');
  if (header.size() < 5 || header[0] != "t" || header[1] != "agent" || (header.size() - 2) % 3 != 0) {
    throw RunDirError("trajectory.csv: unexpected header");
  }
  run.dim = static_cast<int>((header.size() - 2) / 3);
  std::vector<std::vector<std::vector<double>>> rows;  // per time: per agent: position
  int lineno = 1;
  while (std::getline(traj, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    const std::string where = "trajectory.csv:" + std::to_string(lineno);
    if (f.size() != header.size()) throw RunDirError(where + ": wrong field count");
    const double t = parse_double(f[0], where);
    const int agent = static_cast<int>(parse_double(f[1], where));
    if (run.t.empty() || t != run.t.back()) {
      if (!run.t.empty() && t < run.t.back()) throw RunDirError(where + ": times must increase");
      run.t.push_back(t);
      rows.emplace_back();
    }
    if (agent != static_cast<int>(rows.back().size())) throw RunDirError(where + ": agents out of order");
    std::vector<double> pos(run.dim);
    for (int k = 0; k < run.dim; ++k) pos[k] = parse_double(f[2 + k], where);
    rows.back().push_back(pos);
  }
  if (!rows.empty()) run.agents = static_cast<int>(rows.front().size());
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != run.agents) throw RunDirError("trajectory.csv: agent count changes between times");
    Eigen::MatrixXd x(run.agents, run.dim);
    for (int i = 0; i < run.agents; ++i) {
      for (int k = 0; k < run.dim; ++k) x(i, k) = r[i][k];
    }
    run.x.push_back(x);
  }

  try {
    text = read_file((dir / "series.csv").string());
  } catch (const std::exception& e) {
    throw RunDirError(e.what());
  }
  std::istringstream ser(text);
  if (!std::getline(ser, line) || line != "t,W,min_distance,formation_error,velocity_disagreement,edges") {
    throw RunDirError("series.csv: unexpected header");
  }
  lineno = 1;
  std::size_t idx = 0;
  while (std::getline(ser, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    const std::string where = "series.csv:" + std::to_string(lineno);
    if (f.size() != 6) throw RunDirError(where + ": wrong field count");
    if (idx >= run.t.size() || parse_double(f[0], where) != run.t[idx]) throw RunDirError(where + ": time does not match trajectory.csv");
    run.W.push_back(parse_double(f[1], where));
    run.min_distance.push_back(parse_double(f[2], where));
    run.formation_error.push_back(parse_double(f[3], where));
    run.velocity_disagreement.push_back(parse_double(f[4], where));
    std::vector<AgentPair> e;
    for (const auto& tok : split(f[5], ' ')) {
      if (tok.empty()) continue;
      const auto ab = split(tok, '-');
      if (ab.size() != 2) throw RunDirError(where + ": bad edge '" + tok + "'");
      e.push_back({static_cast<int>(parse_double(ab[0], where)), static_cast<int>(parse_double(ab[1], where))});
    }
    run.edges.push_back(e);
    ++idx;
  }
  if (idx != run.t.size()) throw RunDirError("series.csv: row count differs from trajectory.csv");
  return run;
}

}  // namespace robform
