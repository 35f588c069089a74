// robform: check, certify, simulate and plot formation scenarios.

#include "robform/robform.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace robform;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitParse = 2;
constexpr int kExitSolver = 3;

struct Common {
  std::string scenario;
  std::uint64_t seed = 1;
  std::optional<int> d_P;
  std::optional<double> tol;
  std::optional<int> samples;
  bool escalate = false;
  bool verbose = false;
};

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "scenario" : out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string plan_string(const DegreePlan& p) {
  std::string s = "d_P=" + std::to_string(p.d_P) + " d_H=" + std::to_string(p.d_H) + " d_R=[";
  for (std::size_t k = 0; k < p.d_R.size(); ++k) s += (k ? "," : "") + std::to_string(p.d_R[k]);
  return s + "]";
}

std::string pairs_string(const std::vector<AgentPair>& v) {
  std::string s;
  for (const auto& [i, j] : v) s += " (" + std::to_string(i) + "," + std::to_string(j) + ")";
  return s;
}

void print_report(const AssumptionReport& rep, const Scenario& sc) {
  for (const auto& c : rep.checks) {
    std::cout << c.name << ": " << (c.pass ? "pass" : "FAIL");
    if (!c.violations.empty()) std::cout << "; violating pairs" << pairs_string(c.violations);
    const std::string tag = c.name.substr(0, 2);
    if (!c.pass && sc.waived(tag)) {
      for (const auto& w : sc.waivers) {
        if (w.check == tag) std::cout << " [waived for simulation: " << w.reason << "]";
      }
    }
    std::cout << "\n";
  }
}

// ---------------------------------------------------------------------------

int cmd_check(const Common& opt) {
  const Scenario sc = load_checked_scenario(opt.scenario);
  const FormationState init = initial_state(sc, opt.seed);
  const AssumptionReport rep = scenario_assumptions(sc, init);
  std::cout << "scenario " << sc.name << ": " << sc.agents() << " agents, " << sc.g.num_params() << " parameters, "
            << sc.formation.size() << " formation edges\n";
  print_report(rep, sc);
  std::cout << (rep.all_pass() ? "all assumptions hold\n" : "assumptions violated\n");
  return rep.all_pass() ? kExitOk : kExitFail;
}

struct CertifyRun {
  CertifyResult result;
  Lambda2Sample lambda2;
  int exit_code = kExitFail;
};

CertifyRun certify_scenario(const Scenario& sc, const UncertainAdjacency& g0, const Common& opt) {
  CertifyOptions co;
  co.d_P = opt.d_P.value_or(sc.d_P);
  co.solver.tol = opt.tol.value_or(sc.tol);
  co.solver.verbose = opt.verbose;
  co.verify_samples = sc.verify_samples;
  co.verify_seed = opt.seed;
  CertifyRun out;
  const int last = opt.escalate ? std::max(co.d_P, 2) : co.d_P;
  for (int d = co.d_P; d <= last; ++d) {
    co.d_P = d;
    out.result = certify(g0, co);
    if (out.result.status != CertifyStatus::inconclusive) break;
  }
  out.lambda2 = sample_lambda2(g0, opt.samples.value_or(sc.lambda_samples), opt.seed);
  if (out.result.status == CertifyStatus::solver_failure) {
    out.exit_code = kExitSolver;
  } else if (out.result.status == CertifyStatus::certified && out.result.certificate.c_star > 1e-6 && out.lambda2.min_lambda2 > 0.0) {
    out.exit_code = kExitOk;
  }
  return out;
}

void print_certify(const CertifyRun& cr) {
  const CertifyResult& r = cr.result;
  std::printf("degree plan          %s\n", plan_string(r.certificate.plan).c_str());
  std::printf("program              %d variables, LMI size %d, %d iterations, %.2f s\n", r.num_vars, r.lmi_size, r.iterations, r.seconds);
  std::printf("c*                   %.6g\n", r.certificate.c_star);
  std::printf("sampled min lambda2  %.6g over %d samples\n", cr.lambda2.min_lambda2, cr.lambda2.samples);
  if (r.verification.samples > 0) {
    std::printf("verification         %s over %d samples (min eig P %.3g, H margin %.3g)\n", r.verification.pass ? "pass" : "FAIL",
                r.verification.samples, r.verification.worst_P, r.verification.worst_H);
  }
  std::printf("status               %s\n", to_string(r.status));
  if (!r.message.empty()) std::printf("note                 %s\n", r.message.c_str());
  if (r.status == CertifyStatus::inconclusive && r.certificate.plan.d_P < 2) {
    std::printf("hint                 rerun with --dP %d or --escalate\n", r.certificate.plan.d_P + 1);
  }
}

json certificate_document(const CertifyRun& cr, const Scenario& sc) {
  json d = certificate_to_json(cr.result.certificate);
  d["scenario"] = sc.name;
  d["scenario_hash"] = hex64(sc.hash);
  d["status"] = to_string(cr.result.status);
  d["min_lambda2"] = cr.lambda2.min_lambda2;
  d["lambda2_samples"] = cr.lambda2.samples;
  return d;
}

int cmd_certify(const Common& opt, const std::string& out_dir) {
  const Scenario sc = load_checked_scenario(opt.scenario);
  const FormationState init = initial_state(sc, opt.seed);
  const AssumptionReport rep = scenario_assumptions(sc, init);
  if (!rep.all_pass()) std::cout << "warning: scenario assumptions do not all hold (see 'robform check')\n";
  const UncertainAdjacency g0 = initial_adjacency(sc, init.x);
  std::printf("scenario             %s (%d agents, %d parameters)\n", sc.name.c_str(), sc.agents(), g0.num_params());
  const CertifyRun cr = certify_scenario(sc, g0, opt);
  print_certify(cr);
  if (cr.result.status != CertifyStatus::solver_failure) {
    const fs::path dir = out_dir.empty() ? fs::path("runs") / safe_name(sc.name) : fs::path(out_dir);
    fs::create_directories(dir);
    write_text(dir / "certificate.json", certificate_document(cr, sc).dump(1) + "\n");
    std::printf("certificate          %s\n", (dir / "certificate.json").string().c_str());
  }
  return cr.exit_code;
}

// ---------------------------------------------------------------------------

struct SimFlags {
  std::optional<double> T;
  std::optional<double> dt;
  bool unsafe = false;
  std::string out = "runs";
  std::string certificate;
};

int cmd_simulate(const Common& opt, const SimFlags& sf) {
  Scenario sc = load_checked_scenario(opt.scenario);
  if (sf.T) sc.sim.T = *sf.T;
  if (sf.dt) sc.sim.dt = *sf.dt;
  if (!(sc.sim.dt > 0.0) || !(sc.sim.T >= 0.0)) {
    std::cerr << "error: --dt must be positive and --T non-negative\n";
    return kExitParse;
  }
  const FormationState init = initial_state(sc, opt.seed);
  const UncertainAdjacency g0 = initial_adjacency(sc, init.x);

  // Preconditions: assumptions and a positive certificate for G(t0, theta).
  const AssumptionReport rep = scenario_assumptions(sc, init);
  const bool blocked = assumptions_block(rep, sc);
  if (blocked || !rep.all_pass()) print_report(rep, sc);

  std::optional<Certificate> cert;
  std::string cert_source;
  if (!sf.unsafe && !blocked) {
    std::string path = sf.certificate;
    if (path.empty() && !sc.certificate.empty()) path = (fs::path(opt.scenario).parent_path() / sc.certificate).string();
    if (!path.empty()) {
      Certificate c;
      try {
        c = certificate_from_json(json::parse(read_file(path)));
      } catch (const std::exception& e) {
        std::cerr << "error: cannot read certificate " << path << ": " << e.what() << "\n";
        return kExitParse;
      }
      const VerificationReport vr = verify_certificate(c, reduced_laplacian(g0), g0, sc.verify_samples, opt.seed);
      std::printf("certificate          %s: c* = %.6g, verification %s over %d samples\n", path.c_str(), c.c_star,
                  vr.pass ? "pass" : "FAIL", vr.samples);
      if (vr.pass && c.c_star > 1e-6) {
        cert = c;
        cert_source = path;
      }
    } else {
      const CertifyRun cr = certify_scenario(sc, g0, opt);
      std::printf("certify              c* = %.6g, %s\n", cr.result.certificate.c_star, to_string(cr.result.status));
      if (cr.exit_code == kExitOk) {
        cert = cr.result.certificate;
        cert_source = "inline";
      }
    }
    if (!cert) {
      std::cout << "no positive certificate for G(t0, theta); pass --unsafe to run anyway\n";
      return kExitFail;
    }
  }
  if (blocked && !sf.unsafe) {
    std::cout << "assumptions violated; pass --unsafe to run anyway\n";
    return kExitFail;
  }

  // Barrier caps.
  BarrierChoice barrier;
  try {
    barrier = choose_barrier(sc, init, opt.seed);
  } catch (const TuneError& e) {
    std::cout << "barrier tuning failed: " << e.what() << "\n";
    return kExitFail;
  }
  const BarrierParams& bp = barrier.params;
  std::printf("barrier caps         mu1 = %.6g, mu2 = %.6g (%s)\n", bp.mu1, bp.mu2, barrier.source.c_str());

  const RunResult res = run(make_problem(sc, init, bp), sc.sim, opt.seed);

  const fs::path dir = fs::path(sf.out) / (safe_name(sc.name) + "_seed" + std::to_string(opt.seed));
  fs::create_directories(dir);
  std::vector<std::string> files = {"trajectory.csv", "series.csv", "events.jsonl", "metrics.json"};
  write_text(dir / "trajectory.csv", trajectory_csv(res.log, sc.n));
  write_text(dir / "series.csv", series_csv(res.log));
  write_text(dir / "events.jsonl", events_jsonl(res));
  write_text(dir / "metrics.json", metrics_json(res).dump(2) + "\n");
  if (cert) {
    write_text(dir / "certificate.json", certificate_to_json(*cert).dump(1) + "\n");
    files.push_back("certificate.json");
  }
  files.push_back("manifest.json");
  ManifestInfo info;
  info.scenario_name = sc.name;
  info.scenario_hash = sc.hash;
  info.seed = opt.seed;
  info.params = bp;
  info.barrier_source = barrier.source;
  info.tune_iterations = barrier.iterations;
  info.mu_safe = barrier.mu_safe;
  if (cert) {
    info.certificate_file = cert_source == "inline" ? "certificate.json" : cert_source;
    info.c_star = cert->c_star;
  }
  info.unsafe = sf.unsafe;
  info.dt = sc.sim.dt;
  info.T = sc.sim.T;
  info.integrator = to_string(sc.sim.integrator);
  info.created = utc_now();
  write_text(dir / "manifest.json", manifest_json(info, sc, res, files).dump(2) + "\n");

  const RunMetrics& m = res.metrics;
  std::printf("run directory        %s\n", dir.string().c_str());
  std::printf("steps                %ld\n", static_cast<long>(m.steps));
  std::printf("min distance         %.6g (d_s = %.6g)\n", m.min_distance, sc.geom.d_s);
  std::printf("formation error      %.3g\n", m.formation_error);
  std::printf("velocity disagreement %.3g\n", m.velocity_disagreement);
  std::printf("edge switches        %d\n", static_cast<int>(m.edge_switches));
  if (res.failure) {
    std::printf("failure              %s at t = %.6g", res.failure->kind.c_str(), res.failure->t);
    if (res.failure->pair.first >= 0) std::printf(" pair (%d,%d)", res.failure->pair.first, res.failure->pair.second);
    std::printf(": %s\n", res.failure->message.c_str());
  } else if (m.convergence_required && !m.converged) {
    std::printf("failure              convergence thresholds not met by t = %.6g\n", sc.sim.converge_by);
  }
  std::printf("exit code            %d\n", res.exit_code);
  return res.exit_code;
}

int cmd_plot(const std::string& run_dir) {
  const auto names = svg::plot_run(run_dir);
  for (const auto& n : names) std::cout << (fs::path(run_dir) / n).string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust formation control: scenario checks, connectivity certificates, simulation and plots"};
  app.require_subcommand(1);
  Common opt;
  SimFlags sf;
  std::string cert_out;
  std::string run_dir;

  auto add_certify_flags = [&](CLI::App* c) {
    c->add_option("--dP", opt.d_P, "Degree of P(theta)")->check(CLI::Range(0, 4));
    c->add_option("--tol", opt.tol, "SDP tolerance")->check(CLI::PositiveNumber);
    c->add_option("--samples", opt.samples, "Samples for the lambda2 cross-check")->check(CLI::PositiveNumber);
    c->add_flag("--escalate", opt.escalate, "Raise d_P up to 2 while the result is inconclusive");
    c->add_flag("-v,--verbose", opt.verbose, "Print solver iterations");
  };

  CLI::App* check = app.add_subcommand("check", "Validate a scenario against the standing assumptions");
  check->add_option("scenario", opt.scenario, "Scenario JSON")->required();
  check->add_option("--seed", opt.seed, "Seed for generated initial states");

  CLI::App* cert = app.add_subcommand("certify", "Certify robust connectivity of G(t0, theta) over Omega");
  cert->add_option("scenario", opt.scenario, "Scenario JSON")->required();
  cert->add_option("--seed", opt.seed, "Seed for initial states and sampling");
  cert->add_option("--out", cert_out, "Directory for certificate.json (default runs/<scenario>)");
  add_certify_flags(cert);

  CLI::App* sim = app.add_subcommand("simulate", "Run the closed loop and write a run directory");
  sim->add_option("scenario", opt.scenario, "Scenario JSON")->required();
  sim->add_option("--seed", opt.seed, "Seed for initial states and theta*");
  sim->add_option("--T", sf.T, "Horizon in seconds");
  sim->add_option("--dt", sf.dt, "Step size");
  sim->add_flag("--unsafe", sf.unsafe, "Skip the assumption and certificate gates");
  sim->add_option("--out", sf.out, "Parent directory of the run directory")->capture_default_str();
  sim->add_option("--certificate", sf.certificate, "Certificate JSON to verify instead of certifying inline");
  add_certify_flags(sim);

  CLI::App* plot = app.add_subcommand("plot", "Write SVG plots for a run directory");
  plot->add_option("run_dir", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitParse;
  }

  try {
    if (*check) return cmd_check(opt);
    if (*cert) return cmd_certify(opt, cert_out);
    if (*sim) return cmd_simulate(opt, sf);
    if (*plot) return cmd_plot(run_dir);
  } catch (const ScenarioError& e) {
    std::cerr << "scenario error at " << e.what() << "\n";
    return kExitParse;
  } catch (const RunDirError& e) {
    std::cerr << "run directory error: " << e.what() << "\n";
    return kExitParse;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  }
  return kExitParse;
}
