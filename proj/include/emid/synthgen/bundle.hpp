#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "emid/discrete/json_io.hpp"
#include "emid/estimators/feature_dump.hpp"
#include "emid/synthgen/shift.hpp"

namespace emid::synthgen {

inline nlohmann::json to_json(const ShiftScenario& sc) {
  nlohmann::json doc;
  doc["id"] = sc.id;
  doc["kind"] = to_string(sc.kind);
  doc["severity"] = sc.severity;
  doc["seed"] = sc.seed;
  doc["consistency"] = metrics::to_string(sc.consistency);
  doc["p"] = discrete::to_json(sc.p);
  doc["q"] = discrete::to_json(sc.q);
  return doc;
}

inline ShiftScenario scenario_from_json(const nlohmann::json& doc) {
  try {
    return ShiftScenario{doc.at("id").get<std::string>(),
                         shift_kind_from_string(doc.at("kind").get<std::string>()),
                         doc.at("severity").get<double>(),
                         discrete::joint_from_json(doc.at("p")),
                         discrete::joint_from_json(doc.at("q")),
                         doc.at("seed").get<std::uint64_t>(),
                         metrics::consistency_from_string(doc.at("consistency").get<std::string>())};
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("scenario json: ") + e.what());
  }
}

/// dir/scenario.json, plus dir/samples.tsv when samples are given.
inline void write_bundle(const std::filesystem::path& dir, const ShiftScenario& sc,
                         const estimators::SampleBatch* samples = nullptr) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / "scenario.json", std::ios::binary);
  if (!os) throw ContractError("cannot write " + (dir / "scenario.json").string());
  os << to_json(sc).dump(1) << '\n';
  if (samples) estimators::save_feature_dump((dir / "samples.tsv").string(), *samples);
}

struct Bundle {
  ShiftScenario scenario;
  std::optional<estimators::SampleBatch> samples;
};

inline Bundle read_bundle(const std::filesystem::path& dir) {
  std::ifstream is(dir / "scenario.json", std::ios::binary);
  if (!is) throw ContractError("cannot read " + (dir / "scenario.json").string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("scenario.json: ") + e.what());
  }
  Bundle b{scenario_from_json(doc), std::nullopt};
  if (std::filesystem::exists(dir / "samples.tsv")) b.samples = estimators::load_feature_dump((dir / "samples.tsv").string());
  return b;
}

}  // namespace emid::synthgen
