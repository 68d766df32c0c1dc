#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "emid/analysis/report.hpp"
#include "emid/estimators/feature_dump.hpp"
#include "emid/pipeline/calibrate.hpp"
#include "emid/pipeline/config.hpp"
#include "emid/pipeline/io.hpp"
#include "emid/pipeline/suites.hpp"
#include "emid/pipeline/sweep.hpp"

namespace emid::pipeline {

enum ExitCode : int { kExitPass = 0, kExitUsage = 1, kExitScientific = 2 };

struct CommonOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> replay;
  std::size_t jobs = 1;
};

inline RunConfig resolve_config(const CommonOptions& o) {
  RunConfig c = o.config ? load_config(*o.config) : RunConfig{};
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (c.out.empty()) throw ConfigError("output directory must not be empty");
  c.validate();
  return c;
}

namespace detail {

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

inline RunManifest start_manifest(const std::string& command, const RunConfig& c) {
  RunManifest m;
  m.command = command;
  m.config_hash = config_hash(c);
  m.seed = c.seed;
  m.config = to_json(c);
  return m;
}

inline void finish(RunManifest& m, const fs::path& dir, const Stopwatch& sw, int code) {
  m.exit_code = code;
  m.wall_clock_seconds = sw.seconds();
  write_manifest(dir, m);
}

}  // namespace detail

inline int replay_instance(const std::string& path, std::ostream& out) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  const auto rec = evaluate(instance_from_json(doc));
  out << rec.dump(2) << '\n';
  return rec.at("holds").get<bool>() ? kExitPass : kExitScientific;
}

inline int cmd_verify_bounds(const RunConfig& cfg, const CommonOptions& o, std::ostream& out, std::ostream& err) {
  if (o.replay) return replay_instance(*o.replay, out);
  detail::Stopwatch sw;
  const fs::path dir = cfg.out;
  auto man = detail::start_manifest("verify-bounds", cfg);
  std::vector<json> lines;
  std::size_t violations = 0;
  for (const auto& suite : cfg.verify.suites) {
    const auto res = run_suite(suite, cfg.seed, cfg.verify, cfg.tolerance, o.jobs);
    lines.insert(lines.end(), res.records.begin(), res.records.end());
    lines.push_back(summary_json(res));
    man.counts[suite] = {res.instances - res.violations, res.violations};
    violations += res.violations;
    for (const auto& in : res.flagged) {
      const auto name = "replay/" + suite + (in.check.empty() ? "" : "-" + in.check) + "-" + std::to_string(in.index) + ".json";
      write_file_atomic(dir / name, to_json(in).dump(2) + "\n");
    }
    out << suite << ": " << res.instances << " instances, " << res.violations << " violations";
    if (res.skipped) out << ", " << res.skipped << " skipped";
    out << '\n';
    if (res.violations)
      err << suite << ": " << res.violations << " violations; replay files under " << (dir / "replay").string() << '\n';
  }
  write_file_atomic(dir / "bounds.jsonl", jsonl(lines));
  man.outputs = {"bounds.jsonl"};
  const int code = violations ? kExitScientific : kExitPass;
  detail::finish(man, dir, sw, code);
  return code;
}

inline int cmd_calibrate_estimators(const RunConfig& cfg, const CommonOptions& o, std::ostream& out, std::ostream& err) {
  detail::Stopwatch sw;
  const fs::path dir = cfg.out;
  auto man = detail::start_manifest("calibrate-estimators", cfg);
  const auto rows = run_calibration(cfg, o.jobs);
  std::ostringstream csv;
  write_calibration_csv(csv, rows);
  write_file_atomic(dir / "calibration.csv", csv.str());
  man.outputs = {"calibration.csv"};
  bool ok = true;
  for (const auto& r : rows) {
    if (!r.gated) continue;
    auto& c = man.counts[r.suite + ":" + r.estimator];
    (r.pass ? c.pass : c.fail)++;
    out << r.suite << ' ' << r.estimator << ' ' << r.setting << ": estimate " << analysis::fmt(r.estimate) << " target "
        << analysis::fmt(r.target) << (r.pass ? " ok" : " BREACH") << '\n';
    if (!r.pass) {
      ok = false;
      err << "calibration breach: estimator " << r.estimator << ", " << r.suite << " " << r.setting << ": error "
          << analysis::fmt(r.abs_error) << " > tolerance " << analysis::fmt(r.tolerance)
          << (r.note.empty() ? "" : " (" + r.note + ")") << '\n';
    }
  }
  const int code = ok ? kExitPass : kExitScientific;
  detail::finish(man, dir, sw, code);
  return code;
}

inline int cmd_sweep_shifts(const RunConfig& cfg, const CommonOptions& o, std::ostream& out, std::ostream& err) {
  detail::Stopwatch sw;
  const fs::path dir = cfg.out;
  auto man = detail::start_manifest("sweep-shifts", cfg);
  const auto res = run_sweep(cfg, o.jobs);

  std::vector<json> lines;
  for (const auto& r : res.reports) lines.push_back(analysis::to_json(r));
  write_file_atomic(dir / "bounds.jsonl", jsonl(lines));
  std::ostringstream scen, plot;
  analysis::write_scenarios_csv(scen, res.reports);
  write_plot_data_csv(plot, res.reports);
  write_file_atomic(dir / "scenarios.csv", scen.str());
  write_file_atomic(dir / "plot_data.csv", plot.str());
  man.outputs = {"bounds.jsonl", "scenarios.csv", "plot_data.csv"};
  if (!res.estimates.empty()) {
    std::ostringstream est;
    write_estimates_csv(est, res.estimates);
    write_file_atomic(dir / "estimates.csv", est.str());
    man.outputs.push_back("estimates.csv");
    for (std::size_t i = 0; i < res.samples.size(); ++i)
      for (int side = 0; side < 2; ++side) {
        std::ostringstream dump;
        estimators::write_feature_dump(dump, side == 0 ? res.samples[i].first : res.samples[i].second);
        write_file_atomic(dir / "features" / (res.scenarios[i].id + (side == 0 ? "-p.tsv" : "-q.tsv")), dump.str());
      }
    man.outputs.push_back("features/");
  }

  man.counts["bounds"] = {res.reports.size() - res.bound_violations, res.bound_violations};
  man.counts["partial_monotone"] = {res.ladders - res.non_monotone_ladders, res.non_monotone_ladders};
  out << res.reports.size() << " scenarios over " << res.ladders << " ladders; " << res.bound_violations
      << " with a bound violation; " << res.non_monotone_ladders << " ladders with a decreasing partial bound\n";
  const bool ok = res.bound_violations == 0 && res.non_monotone_ladders == 0;
  if (!ok) err << "sweep-shifts: scientific check failed\n";
  const int code = ok ? kExitPass : kExitScientific;
  detail::finish(man, dir, sw, code);
  return code;
}

inline int cmd_correlate(const RunConfig& cfg, const CommonOptions&, std::ostream& out, std::ostream& err) {
  detail::Stopwatch sw;
  const fs::path dir = cfg.out;
  const fs::path input = cfg.correlate.input.empty() ? dir : fs::path(cfg.correlate.input);
  auto man = detail::start_manifest("correlate", cfg);
  const auto reports = read_bound_reports(input / "bounds.jsonl");
  if (reports.size() < 3) {
    err << "correlate: need at least 3 scenarios, found " << reports.size() << '\n';
    return kExitUsage;
  }
  for (const auto& r : reports)
    if (r.id.empty() || r.ladder.empty()) throw IoError("correlate: " + (input / "bounds.jsonl").string() + " is not a sweep");
  analysis::PermutationOptions popt;
  popt.permutations = cfg.correlate.permutations;
  popt.seed = cfg.seed;
  const auto rows = analysis::correlate_all(analysis::sweep_table(reports), popt);
  std::ostringstream csv;
  analysis::write_correlations_csv(csv, rows);
  write_file_atomic(dir / "correlations.csv", csv.str());
  man.outputs = {"correlations.csv"};
  for (const auto& r : rows) {
    auto& c = man.counts["correlations"];
    (r.result ? c.pass : c.fail)++;
    out << r.series << " n=" << r.n;
    if (r.result) out << " statistic=" << analysis::fmt(r.result->statistic) << " p=" << analysis::fmt(r.result->p_value);
    if (!r.note.empty()) out << " (" << r.note << ")";
    out << '\n';
  }
  detail::finish(man, dir, sw, kExitPass);
  return kExitPass;
}

/// Dispatch with the exit-code contract: 0 pass, 1 usage/config/IO, 2 scientific failure.
inline int run_command(const std::string& name, const CommonOptions& o, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  try {
    if (o.jobs == 0) throw ConfigError("--jobs must be at least 1");
    if (o.replay && name != "verify-bounds") throw ConfigError("--replay only applies to verify-bounds");
    const auto cfg = o.replay && !o.config ? RunConfig{} : resolve_config(o);
    if (name == "verify-bounds") return cmd_verify_bounds(cfg, o, out, err);
    if (name == "calibrate-estimators") return cmd_calibrate_estimators(cfg, o, out, err);
    if (name == "sweep-shifts") return cmd_sweep_shifts(cfg, o, out, err);
    if (name == "correlate") return cmd_correlate(cfg, o, out, err);
    throw ConfigError("unknown command '" + name + "'");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << name << ": " << e.what() << '\n';
  }
  return kExitUsage;
}

}  // namespace emid::pipeline
