#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "emid/pipeline/commands.hpp"

using namespace emid;
using namespace emid::pipeline;
using Catch::Approx;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("emid-test-" + name);
  fs::remove_all(d);
  return d;
}

fs::path write_config(const fs::path& dir, const json& doc) {
  fs::create_directories(dir);
  const auto p = dir / "config.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

int run(const std::string& cmd, const fs::path& config, const fs::path& out, std::string* stdout_text = nullptr,
        std::string* stderr_text = nullptr) {
  CommonOptions o;
  o.config = config.string();
  o.out = out.string();
  std::ostringstream so, se;
  const int code = run_command(cmd, o, so, se);
  if (stdout_text) *stdout_text = so.str();
  if (stderr_text) *stderr_text = se.str();
  return code;
}

json small_verify() {
  return json{{"verify",
               {{"instances", 40}, {"theorem1_instances", 4}, {"identity_instances", 20}, {"appendix_trials", 50}}}};
}

json small_sweep() {
  return json{{"sweep", {{"ladders", 2}, {"levels", 3}}}, {"correlate", {{"permutations", 500}}}};
}

}  // namespace

TEST_CASE("config parsing and validation", "[pipeline]") {
  const RunConfig def;
  CHECK_NOTHROW(def.validate());
  CHECK(config_hash(config_from_json(json::object())) == config_hash(def));

  CHECK_THROWS_AS(config_from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"sweep", {{"ladder", 3}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"estimator", {{"hidden", -4}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"seed", -1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"seed", "7"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"model", {{"type", "oracle"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"sweep", {{"kinds", {"sideways"}}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"sweep", {{"levels", 1}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"sweep", {{"nv", 2}, {"scenes", 2}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"verify", {{"suites", {"lemma9"}}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"calibration", {{"rhos", {1.0}}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);

  auto c = config_from_json({{"seed", 5}, {"sweep", {{"kinds", {"joint"}}, {"ladders", 4}}}, {"model", {{"type", "tuned"}}}});
  CHECK(c.seed == 5);
  CHECK(c.sweep.kinds == std::vector{synthgen::ShiftKind::joint});
  CHECK(c.model.type == ModelSpec::Type::tuned);
  CHECK(config_hash(config_from_json(to_json(c))) == config_hash(c));

  auto moved = c;
  moved.out = "elsewhere";
  CHECK(config_hash(moved) == config_hash(c));
  moved.seed = 6;
  CHECK(config_hash(moved) != config_hash(c));

  const auto dir = fresh_dir("cfg");
  CHECK_THROWS_AS(load_config((dir / "missing.json").string()), ConfigError);
  fs::create_directories(dir);
  std::ofstream(dir / "broken.json") << "{ \"seed\": ";
  CHECK_THROWS_AS(load_config((dir / "broken.json").string()), ConfigError);
}

TEST_CASE("verification suites", "[pipeline]") {
  VerifyConfig v;
  v.instances = 60;
  v.theorem1_instances = 5;
  v.identity_instances = 30;
  v.appendix_trials = 100;
  for (const auto& s : v.suites) {
    const auto r = run_suite(s, 3, v, metrics::kBoundSlack);
    CHECK(r.instances == suite_size(s, v));
    CHECK(r.violations == 0);
    CHECK(r.flagged.empty());
    const auto forced = run_suite(s, 3, v, -1.0);
    CHECK(forced.violations == forced.instances);
    CHECK(forced.flagged.size() == std::min(forced.instances, v.replay_files_per_suite));
  }
  const auto ids = run_suite("identities", 3, v, metrics::kBoundSlack);
  CHECK(ids.maxima.at("two_route_residual") <= 1e-12);
  CHECK(ids.maxima.at("chain_rule_residual") <= 1e-10);
  CHECK(ids.maxima.at("lower_bound_residual") <= 1e-10);
  CHECK(ids.maxima.at("pm_rm_residual") <= 1e-10);

  // index-addressed: thread count does not change any record
  const auto a = run_suite("theorem3", 9, v, metrics::kBoundSlack, 1);
  const auto b = run_suite("theorem3", 9, v, metrics::kBoundSlack, 3);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].dump() == b.records[i].dump());

  // theorem 3 covers both conditional shifts and unconstrained pairs
  const auto even = make_instance("theorem3", 0, 9, v, 1e-9), odd = make_instance("theorem3", 1, 9, v, 1e-9);
  CHECK(metrics::consistency_report(*even.p, *even.q).t_given_v <= 1e-12);
  CHECK(metrics::consistency_report(*odd.p, *odd.q).worst > 1e-6);

  CHECK_THROWS_AS(make_instance("lemma7", 0, 0, v, 1e-9), ContractError);
}

TEST_CASE("instances replay to identical records", "[pipeline]") {
  VerifyConfig v;
  for (const auto& s : v.suites)
    for (std::size_t i = 0; i < 8; ++i) {
      const auto in = make_instance(s, i, 21, v, 1e-9);
      const auto text = to_json(in).dump();
      const auto back = instance_from_json(json::parse(text));
      CHECK(to_json(back).dump() == text);
      CHECK(evaluate(back).dump() == evaluate(in).dump());
    }
  CHECK(make_instance("corollary", 4, 21, v, 1e-9).seed == make_instance("corollary", 4, 21, v, 1e-9).seed);
  CHECK(make_instance("corollary", 4, 21, v, 1e-9).seed != make_instance("corollary", 5, 21, v, 1e-9).seed);
}

TEST_CASE("verify-bounds command", "[pipeline]") {
  const auto dir = fresh_dir("verify");
  const auto cfg = write_config(dir, small_verify());
  std::string so, se;
  CHECK(run("verify-bounds", cfg, dir / "ok", &so) == 0);
  CHECK(so.find("theorem2: 40 instances, 0 violations") != std::string::npos);
  const auto man = json::parse(read_file(dir / "ok" / "manifest.json"));
  CHECK(man["command"] == "verify-bounds");
  CHECK(man["exit_code"] == 0);
  CHECK(man["counts"]["theorem2"]["fail"] == 0);
  CHECK(man["counts"]["theorem2"]["pass"] == 40);
  CHECK(man["config_hash"].get<std::string>().size() == 16);
  CHECK_FALSE(fs::exists(dir / "ok" / "manifest.json.tmp"));
  CHECK_FALSE(fs::exists(dir / "ok" / "replay"));

  // lines: per-instance records for the bound suites, one summary per suite
  std::istringstream lines(read_file(dir / "ok" / "bounds.jsonl"));
  std::string line;
  std::size_t records = 0, summaries = 0;
  json first_t2;
  while (std::getline(lines, line)) {
    const auto j = json::parse(line);
    if (j.contains("summary")) {
      ++summaries;
      CHECK(j["violations"] == 0);
    } else {
      ++records;
      if (j["suite"] == "theorem2" && j["index"] == 0) first_t2 = j;
    }
  }
  CHECK(summaries == 7);
  CHECK(records == 40 * 4 + 4);

  auto neg = small_verify();
  neg["tolerance"] = -1;
  const auto negcfg = write_config(dir / "neg", neg);
  CHECK(run("verify-bounds", negcfg, dir / "bad", &so, &se) == 2);
  CHECK(se.find("violations") != std::string::npos);
  const auto rep = dir / "bad" / "replay" / "theorem2-0.json";
  REQUIRE(fs::exists(rep));
  CHECK(json::parse(read_file(dir / "bad" / "manifest.json"))["exit_code"] == 2);

  // replaying a flagged instance reproduces the record of the clean run
  CommonOptions o;
  o.replay = rep.string();
  std::ostringstream rso, rse;
  CHECK(run_command("verify-bounds", o, rso, rse) == 2);
  auto replayed = json::parse(rso.str());
  CHECK_FALSE(replayed["holds"].get<bool>());
  replayed.erase("holds");
  first_t2.erase("holds");
  CHECK(replayed.dump() == first_t2.dump());

  o.replay = (dir / "nothing.json").string();
  CHECK(run_command("verify-bounds", o, rso, rse) == 1);
  o.replay = rep.string();
  CHECK(run_command("sweep-shifts", o, rso, rse) == 1);
}

TEST_CASE("sweep-shifts and correlate", "[pipeline]") {
  const auto dir = fresh_dir("sweep");
  auto doc = small_sweep();
  doc["sweep"]["include_baseline"] = true;
  const auto cfg = write_config(dir, doc);
  CHECK(run("sweep-shifts", cfg, dir / "a") == 0);
  CHECK(run("correlate", cfg, dir / "a") == 0);
  const auto reports = read_bound_reports(dir / "a" / "bounds.jsonl");
  REQUIRE(reports.size() == 4 * 2 * 4);
  for (const auto& r : reports) {
    CHECK(r.all_hold());
    if (r.severity == 0.0) {
      CHECK(r.emid == 0.0);
      CHECK(r.wr_p == r.wr_q);
    }
    if (r.kind == "joint") CHECK(r.theorem2);
    if (r.severity > 0.0 && (r.kind == "visual" || r.kind == "conditional")) CHECK_FALSE(r.theorem2);
  }
  for (std::size_t i = 1; i < reports.size(); ++i)
    if (reports[i].ladder == reports[i - 1].ladder && reports[i].partial && reports[i - 1].partial)
      CHECK(*reports[i].partial >= *reports[i - 1].partial - 1e-12);
  CHECK(fs::exists(dir / "a" / "plot_data.csv"));
  CHECK(read_file(dir / "a" / "correlations.csv").rfind("series,method,statistic,p_value,n,permutations,exact,seed,note\n", 0) == 0);
  const auto man = json::parse(read_file(dir / "a" / "manifest.json"));
  CHECK(man["command"] == "correlate");

  // same config and seed, different thread count: identical bytes
  CommonOptions o;
  o.config = cfg.string();
  o.out = (dir / "b").string();
  o.jobs = 3;
  std::ostringstream so, se;
  CHECK(run_command("sweep-shifts", o, so, se) == 0);
  CHECK(run_command("correlate", o, so, se) == 0);
  for (const char* f : {"bounds.jsonl", "scenarios.csv", "correlations.csv", "plot_data.csv"})
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));

  o.seed = 99;
  o.out = (dir / "c").string();
  CHECK(run_command("sweep-shifts", o, so, se) == 0);
  CHECK(read_file(dir / "a" / "bounds.jsonl") != read_file(dir / "c" / "bounds.jsonl"));

  // a two-scenario sweep cannot be correlated
  const auto tiny = write_config(dir / "tiny", json{{"sweep", {{"kinds", {"joint"}}, {"ladders", 1}, {"levels", 2}}}});
  CHECK(run("sweep-shifts", tiny, dir / "t") == 0);
  std::string err;
  CHECK(run("correlate", tiny, dir / "t", nullptr, &err) == 1);
  CHECK(err.find("at least 3") != std::string::npos);
  CHECK(run("correlate", tiny, dir / "missing", nullptr, &err) == 1);
  CHECK(err.find("missing sweep artifact") != std::string::npos);

  // correlate can read a prior run directory
  auto redirect = small_sweep();
  redirect["correlate"]["input"] = (dir / "a").string();
  CHECK(run("correlate", write_config(dir / "r", redirect), dir / "r-out") == 0);
  CHECK(fs::exists(dir / "r-out" / "correlations.csv"));
}

TEST_CASE("sweep sampling writes feature dumps", "[pipeline]") {
  const auto dir = fresh_dir("samples");
  const auto cfg = write_config(dir, json{{"sweep", {{"kinds", {"joint", "conditional"}}, {"ladders", 1}, {"levels", 2}, {"samples", 400}}}});
  CHECK(run("sweep-shifts", cfg, dir / "o") == 0);
  const auto reports = read_bound_reports(dir / "o" / "bounds.jsonl");
  REQUIRE(reports.size() == 4);
  for (const auto& r : reports) {
    const auto p = estimators::load_feature_dump((dir / "o" / "features" / (r.id + "-p.tsv")).string());
    CHECK(p.size() == 400);
    CHECK(p.dx() == 8);
    CHECK(p.dy() == 3);
    std::ifstream in(dir / "o" / "features" / (r.id + "-q.tsv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "#emi-features v1 d_x=8 d_y=3");
  }
  const auto est = read_file(dir / "o" / "estimates.csv");
  CHECK(est.rfind("id,n,rjsd_x,rjsd_y,mmd_x\n", 0) == 0);
  // conditional shifts leave the inputs alone: x divergence is sampling noise only
  CHECK(std::count(est.begin(), est.end(), '\n') == 5);
}

TEST_CASE("model specs", "[pipeline]") {
  numkit::Rng rng(4);
  const auto j = synthgen::SceneWorld::random(3, 3, 3, 1, rng).joint();
  ModelSpec s;
  s.type = ModelSpec::Type::true_conditional;
  CHECK(metrics::emi(j, build_model(s, j, rng)) == Approx(0.0).margin(1e-12));
  s.type = ModelSpec::Type::uniform;
  CHECK(build_model(s, j, rng) == discrete::ConditionalModel::uniform(3, 3, 3));
  s.type = ModelSpec::Type::tuned;
  s.steps = 300;
  const auto tuned = build_model(s, j, rng);
  CHECK(discrete::expected_kl_data_model(j, tuned) < discrete::expected_kl_data_model(j, discrete::ConditionalModel::uniform(3, 3, 3)));
  s.type = ModelSpec::Type::perturbed;
  s.noise = 0.0;
  const auto flat = build_model(s, j, numkit::Rng(1));
  for (std::size_t i = 0; i < j.size(); ++i) CHECK(flat.table()[i] == Approx(j.response_conditional()[i]).margin(1e-15));
  s.noise = 0.5;
  CHECK(build_model(s, j, numkit::Rng(1)) == build_model(s, j, numkit::Rng(1)));
}

TEST_CASE("calibration plumbing", "[pipeline]") {
  CHECK(club_population_gaussian(0.6) == Approx(0.5625).margin(1e-15));
  // P_X uniform over two queries, rows (1/2, 1/2) and (9/10, 1/10)
  const auto j = discrete::DiscreteJoint::from_tensor(2, 1, 2, {0.25, 0.25, 0.45, 0.05});
  CHECK(club_population_one_hot(j) == Approx(8.0 / 9.0).margin(1e-14));
  const auto indep = discrete::DiscreteJoint::from_tensor(2, 1, 2, {0.15, 0.35, 0.15, 0.35});
  CHECK(club_population_one_hot(indep) == Approx(0.0).margin(1e-15));

  const auto dir = fresh_dir("calib");
  json doc{{"estimator", {{"hidden", 16}, {"batch", 128}, {"iterations", 0}}},
           {"calibration",
            {{"rhos", {0.5}}, {"seeds", 2}, {"n", 300}, {"independence_n", 300}, {"independence_estimators", {"club", "nwj"}},
             {"critic_iterations", 0}, {"discrete", false}}}};
  std::string so, se;
  CHECK(run("calibrate-estimators", write_config(dir, doc), dir / "zero", &so, &se) == 2);
  CHECK(se.find("untrained") != std::string::npos);
  CHECK(se.find("estimator club") != std::string::npos);
  const auto csv = read_file(dir / "zero" / "calibration.csv");
  CHECK(csv.rfind("suite,estimator,setting,seed,n,estimate,target,reference,abs_error,tolerance,gated,pass,note\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 + 2 + 2);

  // trained and loose tolerances: passes, and reruns are byte-identical
  doc["estimator"]["iterations"] = 200;
  doc["calibration"]["critic_iterations"] = 200;
  doc["calibration"]["mae_tolerance"] = 1.0;
  doc["calibration"]["independence_tolerance"] = 1.0;
  const auto cfg = write_config(dir / "t", doc);
  CHECK(run("calibrate-estimators", cfg, dir / "t1") == 0);
  CHECK(run("calibrate-estimators", cfg, dir / "t2") == 0);
  CHECK(read_file(dir / "t1" / "calibration.csv") == read_file(dir / "t2" / "calibration.csv"));
  const auto rows = run_calibration(config_from_json(doc));
  CHECK(rows.size() == 2 + 2 + 2);
  CHECK(rows[0].target == Approx(synthgen::gaussian_mi(0.5)).margin(1e-15));
  CHECK(rows[0].reference.value() == Approx(1.0 / 3.0).margin(1e-15));
  CHECK(rows.back().setting == "all");
  CHECK(rows.back().estimate == Approx(0.5 * (rows[0].abs_error + rows[1].abs_error)).margin(1e-15));

  // in-sample protocol: same training, different evaluation sample
  doc["calibration"]["held_out"] = false;
  const auto in_sample = run_calibration(config_from_json(doc));
  CHECK(in_sample[0].seed == rows[0].seed);
  CHECK(in_sample[0].estimate != rows[0].estimate);
}

TEST_CASE("command-line front end", "[pipeline]") {
  const std::string tool = EMID_TOOL_PATH;
  const auto dir = fresh_dir("cli");
  fs::create_directories(dir);
  auto sh = [&](const std::string& args) {
    const int rc = std::system((tool + " " + args + " > " + (dir / "log.txt").string() + " 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  CHECK(sh("--help") == 0);
  CHECK(sh("") == 1);
  CHECK(sh("launch") == 1);
  CHECK(sh("sweep-shifts --jobs 0") == 1);
  CHECK(sh("sweep-shifts --seed banana") == 1);
  CHECK(sh("sweep-shifts --config " + (dir / "nope.json").string()) == 1);
  const auto cfg = write_config(dir, small_sweep());
  CHECK(sh("sweep-shifts --config " + cfg.string() + " --seed 3 --out " + (dir / "o").string()) == 0);
  CHECK(sh("correlate --config " + cfg.string() + " --seed 3 --out " + (dir / "o").string()) == 0);
  CHECK(json::parse(read_file(dir / "o" / "manifest.json"))["seed"] == 3);
}
