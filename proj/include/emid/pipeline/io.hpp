#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emid/analysis/report.hpp"
#include "emid/pipeline/config.hpp"

namespace emid::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

// Output or input file trouble. Maps to exit code 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes to `<path>.tmp` then renames, so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Counts {
  std::size_t pass = 0, fail = 0;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  json config;
  std::map<std::string, Counts> counts;
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;
  int exit_code = 0;
};

inline json to_json(const RunManifest& m) {
  json counts = json::object();
  for (const auto& [k, c] : m.counts) counts[k] = {{"pass", c.pass}, {"fail", c.fail}};
  return json{{"tool", "emid"},
              {"version", kToolVersion},
              {"formats",
               {{"bounds.jsonl", 1},
                {"scenarios.csv", 1},
                {"correlations.csv", 1},
                {"calibration.csv", 1},
                {"features", "#emi-features v1"}}},
              {"command", m.command},
              {"config_hash", m.config_hash},
              {"seed", m.seed},
              {"config", m.config},
              {"counts", counts},
              {"outputs", m.outputs},
              {"wall_clock_seconds", m.wall_clock_seconds},
              {"exit_code", m.exit_code}};
}

inline void write_manifest(const fs::path& dir, const RunManifest& m) {
  write_file_atomic(dir / "manifest.json", to_json(m).dump(2) + "\n");
}

inline std::string jsonl(const std::vector<json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

inline std::vector<analysis::BoundReport> read_bound_reports(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing sweep artifact " + path.string());
  std::istringstream in(read_file(path));
  std::vector<analysis::BoundReport> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(analysis::bound_report_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace emid::pipeline
