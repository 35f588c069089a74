#include "robform/io.hpp"
#include "robform/runlog.hpp"
#include "robform/svg_plot.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace robform;

namespace {

const char* kTriangle = R"({
  "name": "triangle",
  "dimension": 2,
  "geometry": {"r_a": 0.75, "r_c": 0.9375, "r_z": 2.5, "r_s": 8.0, "d_s": 1.875, "eps": 0.1},
  "tau": [[0, 0], [2.8, 0], [1.4, 2.4249]],
  "formation_edges": [[0, 1], [1, 2], [0, 2]],
  "initial": {"position_jitter": 0.2, "velocity_range": [-0.5, 0.5]},
  "uncertainty": {
    "params": 2,
    "omega": [[{"exponents": [0, 0], "coeff": 1}, {"exponents": [2, 0], "coeff": -1}, {"exponents": [0, 2], "coeff": -1}]],
    "box": [[-1, 1], [-1, 1]],
    "weights": [{"pair": [0, 1], "w": [{"exponents": [0, 0], "coeff": 1}, {"exponents": [1, 0], "coeff": 0.3}]}]
  },
  "certify": {"d_P": 0, "samples": 200, "verify_samples": 50},
  "simulation": {"dt": 0.001, "T": 0.5, "record_every": 50, "integrator": "rk4"}
})";

std::filesystem::path temp_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("robform_io_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

std::string where_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const ScenarioError& e) {
    return e.where();
  }
  return "<no error>";
}

}  // namespace

TEST(PolynomialJson, RoundTrip) {
  Polynomial p(2);
  p.add_term({2, 1}, 3.5);
  p.add_term({0, 0}, -1.25);
  p.add_term({0, 3}, 1e-3);
  const Polynomial q = polynomial_from_json(polynomial_to_json(p), 2, "/p");
  EXPECT_EQ(p.terms(), q.terms());
}

TEST(PolynomialJson, NumberIsConstant) {
  const Polynomial p = polynomial_from_json(json(2.5), 3, "/p");
  EXPECT_DOUBLE_EQ(p.eval(Eigen::Vector3d(0.3, -1.0, 2.0)), 2.5);
}

TEST(PolynomialJson, RejectsBadTerms) {
  EXPECT_THROW(polynomial_from_json(json::parse(R"([{"exponents": [1], "coeff": 1}])"), 2, "/p"), ScenarioError);
  EXPECT_THROW(polynomial_from_json(json::parse(R"([{"exponents": [1, -1], "coeff": 1}])"), 2, "/p"), ScenarioError);
  EXPECT_THROW(polynomial_from_json(json::parse(R"([{"exponents": [1, 0]}])"), 2, "/p"), ScenarioError);
  EXPECT_THROW(polynomial_from_json(json("x"), 2, "/p"), ScenarioError);
}

TEST(Scenario, ParsesFields) {
  const Scenario sc = parse_scenario(kTriangle);
  EXPECT_EQ(sc.name, "triangle");
  EXPECT_EQ(sc.agents(), 3);
  EXPECT_EQ(sc.formation.size(), 3u);
  EXPECT_DOUBLE_EQ(sc.geom.d_s, 1.875);
  EXPECT_EQ(sc.g.num_params(), 2);
  ASSERT_EQ(sc.g.omega.size(), 1u);
  EXPECT_DOUBLE_EQ(sc.g.omega[0].eval(Eigen::Vector2d(0.6, 0.8)), 0.0);
  const Eigen::Vector2d th(0.5, -0.2);
  EXPECT_DOUBLE_EQ(sc.g.G(0, 1).eval(th), 1.15);
  EXPECT_DOUBLE_EQ(sc.g.G(1, 0).eval(th), 1.15);
  EXPECT_DOUBLE_EQ(sc.g.G(1, 2).eval(th), 1.0);
  EXPECT_EQ(sc.lambda_samples, 200);
  EXPECT_EQ(sc.sim.record_every, 50);
  EXPECT_FALSE(sc.barrier_override);
  EXPECT_EQ(check_box(sc.g), "");
}

TEST(Scenario, ErrorsCarryLocation) {
  EXPECT_EQ(where_of("{ not json"), "byte 4");
  EXPECT_EQ(where_of("[]"), "/");
  json doc = json::parse(kTriangle);
  doc.erase("tau");
  EXPECT_EQ(where_of(doc.dump()), "/");
  doc = json::parse(kTriangle);
  doc["formation_edges"][1] = {1, 7};
  EXPECT_EQ(where_of(doc.dump()), "/formation_edges/1");
  doc = json::parse(kTriangle);
  doc["simulation"]["integrator"] = "leapfrog";
  EXPECT_EQ(where_of(doc.dump()), "/simulation/integrator");
  doc = json::parse(kTriangle);
  doc["uncertainty"]["weights"][0]["w"][1]["exponents"] = {1};
  EXPECT_EQ(where_of(doc.dump()), "/uncertainty/weights/0/w/1/exponents");
  doc = json::parse(kTriangle);
  doc["assumptions"] = {{"waive", {{{"check", "A9"}}}}};
  EXPECT_EQ(where_of(doc.dump()), "/assumptions/waive/0/check");
}

TEST(Scenario, HashTracksBytes) {
  const Scenario a = parse_scenario(kTriangle);
  const Scenario b = parse_scenario(std::string(kTriangle) + "\n");
  EXPECT_NE(a.hash, b.hash);
  EXPECT_EQ(a.hash, parse_scenario(kTriangle).hash);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Scenario, BarrierOverrideAndWaivers) {
  json doc = json::parse(kTriangle);
  doc["barrier"] = {{"mu1", 0.5}, {"mu2", 0.25}};
  doc["assumptions"] = {{"a3_scope", "all_pairs"}, {"waive", {{{"check", "A3"}, {"reason", "test"}}}}};
  const Scenario sc = parse_scenario(doc.dump());
  ASSERT_TRUE(sc.barrier_override);
  EXPECT_DOUBLE_EQ(sc.barrier_override->mu1, 0.5);
  EXPECT_DOUBLE_EQ(sc.barrier_override->mu2, 0.25);
  EXPECT_EQ(sc.a3_scope, A3Scope::all_pairs);
  EXPECT_TRUE(sc.waived("A3"));
  EXPECT_FALSE(sc.waived("A1"));
}

TEST(Scenario, InitialStateIsSeeded) {
  const Scenario sc = parse_scenario(kTriangle);
  const FormationState a = initial_state(sc, 3);
  const FormationState b = initial_state(sc, 3);
  const FormationState c = initial_state(sc, 4);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.rho, b.rho);
  EXPECT_NE(a.x, c.x);
  EXPECT_LE((a.x - sc.tau).cwiseAbs().maxCoeff(), 0.2);
  EXPECT_LE(a.rho.cwiseAbs().maxCoeff(), 0.5);
}

TEST(Scenario, InitialAdjacencyDropsAbsentPairs) {
  json doc = json::parse(kTriangle);
  doc["initial"] = {{"x", {{0, 0}, {2.8, 0}, {20, 0}}}};
  const Scenario sc = parse_scenario(doc.dump());
  const UncertainAdjacency g = initial_adjacency(sc, *sc.initial.x);
  const Eigen::Vector2d th(0.1, 0.1);
  EXPECT_GT(g.G(0, 1).eval(th), 0.0);
  EXPECT_EQ(g.G(0, 2).eval(th), 0.0);
  EXPECT_EQ(g.G(1, 2).eval(th), 0.0);
}

TEST(Scenario, BoxCheckDetectsEscapingOmega) {
  const Scenario sc = parse_scenario(kTriangle);
  UncertainAdjacency g = sc.g;
  g.box = {{-0.5, 0.5}, {-1.0, 1.0}};
  EXPECT_NE(check_box(g), "");
  g.box = {{2.0, 3.0}, {2.0, 3.0}};
  EXPECT_NE(check_box(g), "");
}

TEST(CertificateJson, RoundTripPreservesVerification) {
  const Scenario sc = parse_scenario(kTriangle);
  CertifyOptions opt;
  opt.verify_samples = 50;
  const CertifyResult res = certify(sc.g, opt);
  ASSERT_EQ(res.status, CertifyStatus::certified) << res.message;
  const Certificate back = certificate_from_json(json::parse(certificate_to_json(res.certificate).dump()));
  EXPECT_EQ(back.c_star, res.certificate.c_star);
  EXPECT_EQ(back.P_bar, res.certificate.P_bar);
  ASSERT_EQ(back.R_bars.size(), res.certificate.R_bars.size());
  EXPECT_EQ(back.R_bars[0], res.certificate.R_bars[0]);
  EXPECT_EQ(back.plan.d_H, res.certificate.plan.d_H);
  EXPECT_TRUE(verify_certificate(back, reduced_laplacian(sc.g), sc.g, 50, 9).pass);
}

TEST(RunDir, WriteLoadAndPlot) {
  const Scenario sc = parse_scenario(kTriangle);
  const FormationState init = initial_state(sc, 1);
  BarrierParams bp;
  bp.mu1 = 50.0;
  bp.mu2 = 50.0;
  const RunResult res = run(make_problem(sc, init, bp), sc.sim, 1);
  const auto dir = temp_dir("run");
  write_text(dir / "trajectory.csv", trajectory_csv(res.log, sc.n));
  write_text(dir / "series.csv", series_csv(res.log));
  write_text(dir / "events.jsonl", events_jsonl(res));
  ManifestInfo info;
  info.scenario_name = sc.name;
  write_text(dir / "manifest.json", manifest_json(info, sc, res, {"trajectory.csv", "series.csv"}).dump(2));

  const LoadedRun back = load_run(dir);
  EXPECT_EQ(back.agents, 3);
  EXPECT_EQ(back.dim, 2);
  ASSERT_EQ(back.t.size(), res.log.rows());
  EXPECT_EQ(back.x.back(), res.log.x.back());
  EXPECT_EQ(back.W, res.log.W);
  EXPECT_EQ(back.edges.front().size(), 3u);
  EXPECT_DOUBLE_EQ(back.d_s, sc.geom.d_s);

  const auto names = svg::plot_run(dir);
  ASSERT_EQ(names.size(), 4u);
  const std::string first = read_file((dir / "energy.svg").string());
  svg::plot_run(dir);
  EXPECT_EQ(first, read_file((dir / "energy.svg").string()));
  EXPECT_NE(read_file((dir / "min_distance.svg").string()).find("d_s"), std::string::npos);
}

TEST(RunDir, EmptyLogGivesAxesOnly) {
  const Scenario sc = parse_scenario(kTriangle);
  const auto dir = temp_dir("empty");
  write_text(dir / "trajectory.csv", trajectory_csv(TrajectoryLog{}, 2));
  write_text(dir / "series.csv", series_csv(TrajectoryLog{}));
  write_text(dir / "manifest.json", manifest_json(ManifestInfo{}, sc, RunResult{}, {}).dump());
  EXPECT_EQ(svg::plot_run(dir).size(), 4u);
  const std::string traj = read_file((dir / "trajectories.svg").string());
  EXPECT_EQ(traj.find("<polyline"), std::string::npos);
  EXPECT_NE(traj.find("</svg>"), std::string::npos);
}

TEST(RunDir, CorruptLogsAreRejected) {
  const auto dir = temp_dir("corrupt");
  EXPECT_THROW(load_run(dir), RunDirError);
  write_text(dir / "manifest.json", R"({"geometry": {"d_s": 1}, "formation_edges": []})");
  write_text(dir / "trajectory.csv", "t,agent,x1,x2,v1,v2,u1,u2\n0,0,1,2,3,4,5,oops\n");
  write_text(dir / "series.csv", "t,W,min_distance,formation_error,velocity_disagreement,edges\n");
  EXPECT_THROW(load_run(dir), RunDirError);
  write_text(dir / "trajectory.csv", "t,agent,x1,x2,v1,v2,u1,u2\n0,0,1,2,3,4,5,6\n");
  EXPECT_THROW(load_run(dir), RunDirError);
  write_text(dir / "series.csv", "t,W,min_distance,formation_error,velocity_disagreement,edges\n0,1,2,3,4,\n");
  EXPECT_NO_THROW(load_run(dir));
}
