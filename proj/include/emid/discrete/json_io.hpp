#pragma once

#include <json.hpp>

#include "emid/discrete/joint.hpp"
#include "emid/discrete/model.hpp"
#include "emid/error.hpp"

namespace emid::discrete {

using nlohmann::json;

namespace detail {
inline std::size_t read_size(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_number_unsigned())
    throw ContractError(std::string("json: missing or invalid '") + key + "'");
  return doc.at(key).get<std::size_t>();
}
inline std::vector<double> read_array(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_array()) throw ContractError(std::string("json: missing array '") + key + "'");
  return doc.at(key).get<std::vector<double>>();
}
}  // namespace detail

// {nv, nt, ny, probs, input, conditional}. The factors are written alongside
// the tensor so a reload reproduces the joint bit for bit, zero-mass rows
// included. Readers accept probs alone.
inline json to_json(const DiscreteJoint& j) {
  json doc;
  doc["nv"] = j.nv();
  doc["nt"] = j.nt();
  doc["ny"] = j.ny();
  doc["probs"] = std::vector<double>(j.tensor().begin(), j.tensor().end());
  doc["input"] = j.input_marginal();
  doc["conditional"] = j.response_conditional();
  return doc;
}

inline DiscreteJoint joint_from_json(const json& doc) {
  const auto nv = detail::read_size(doc, "nv");
  const auto nt = detail::read_size(doc, "nt");
  const auto ny = detail::read_size(doc, "ny");
  auto probs = detail::read_array(doc, "probs");
  if (!doc.contains("conditional")) return DiscreteJoint::from_tensor(nv, nt, ny, std::move(probs));
  const auto in = detail::read_array(doc, "input");
  const auto cond = detail::read_array(doc, "conditional");
  return DiscreteJoint::restore(nv, nt, ny, std::move(probs), in, cond);
}

inline json to_json(const ConditionalModel& m) {
  json doc;
  doc["nv"] = m.nv();
  doc["nt"] = m.nt();
  doc["ny"] = m.ny();
  doc["logits"] = std::vector<double>(m.logits().begin(), m.logits().end());
  doc["probs"] = std::vector<double>(m.table().begin(), m.table().end());
  return doc;
}

inline ConditionalModel model_from_json(const json& doc) {
  const auto nv = detail::read_size(doc, "nv");
  const auto nt = detail::read_size(doc, "nt");
  const auto ny = detail::read_size(doc, "ny");
  if (doc.contains("logits") && doc.contains("probs"))
    return ConditionalModel::restore(nv, nt, ny, detail::read_array(doc, "logits"), detail::read_array(doc, "probs"));
  if (doc.contains("logits")) return ConditionalModel::from_logits(nv, nt, ny, detail::read_array(doc, "logits"));
  const auto probs = detail::read_array(doc, "probs");
  return ConditionalModel::from_table(nv, nt, ny, probs);
}

}  // namespace emid::discrete
