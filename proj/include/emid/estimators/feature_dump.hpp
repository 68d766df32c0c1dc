#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "emid/error.hpp"
#include "emid/estimators/sample_batch.hpp"

namespace emid::estimators {

// #emi-features v1 d_x=<int> d_y=<int>
// <index>\t<x csv>\t<y csv>

namespace detail {
inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

inline std::vector<double> parse_csv(std::string_view s, std::size_t expect, std::size_t line) {
  std::vector<double> out;
  out.reserve(expect);
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto field = s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    double v = 0.0;
    const auto r = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || r.ec != std::errc() || r.ptr != field.data() + field.size())
      throw ContractError("feature dump line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (out.size() != expect)
    throw ContractError("feature dump line " + std::to_string(line) + ": expected " + std::to_string(expect) + " values");
  return out;
}
}  // namespace detail

inline void write_feature_dump(std::ostream& os, const SampleBatch& b) {
  os << "#emi-features v1 d_x=" << b.dx() << " d_y=" << b.dy() << '\n';
  std::string line;
  for (std::size_t i = 0; i < b.size(); ++i) {
    line.clear();
    line += std::to_string(i);
    line += '\t';
    const auto x = b.x_row(i), y = b.y_row(i);
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (k) line += ',';
      detail::append_double(line, x[k]);
    }
    line += '\t';
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (k) line += ',';
      detail::append_double(line, y[k]);
    }
    line += '\n';
    os << line;
  }
}

inline SampleBatch read_feature_dump(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ContractError("feature dump: empty input");
  std::size_t dx = 0, dy = 0;
  {
    std::istringstream hs(header);
    std::string magic, version, fx, fy, extra;
    hs >> magic >> version >> fx >> fy;
    if (magic != "#emi-features" || version != "v1" || fx.rfind("d_x=", 0) != 0 || fy.rfind("d_y=", 0) != 0 || (hs >> extra))
      throw ContractError("feature dump: bad header '" + header + "'");
    try {
      dx = std::stoul(fx.substr(4));
      dy = std::stoul(fy.substr(4));
    } catch (const std::exception&) {
      throw ContractError("feature dump: bad header '" + header + "'");
    }
  }
  std::vector<double> x, y;
  std::string line;
  std::size_t lineno = 1, expected_index = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw ContractError("feature dump line " + std::to_string(lineno) + ": need index, x and y fields");
    std::size_t index = 0;
    const auto r = std::from_chars(line.data(), line.data() + t1, index);
    if (r.ec != std::errc() || r.ptr != line.data() + t1 || index != expected_index)
      throw ContractError("feature dump line " + std::to_string(lineno) + ": bad or out-of-order index");
    ++expected_index;
    const std::string_view sv(line);
    const auto xr = detail::parse_csv(sv.substr(t1 + 1, t2 - t1 - 1), dx, lineno);
    const auto yr = detail::parse_csv(sv.substr(t2 + 1), dy, lineno);
    x.insert(x.end(), xr.begin(), xr.end());
    y.insert(y.end(), yr.begin(), yr.end());
  }
  return SampleBatch(dx, dy, std::move(x), std::move(y));
}

inline void save_feature_dump(const std::string& path, const SampleBatch& b) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot write " + path);
  write_feature_dump(os, b);
}

inline SampleBatch load_feature_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("cannot read " + path);
  return read_feature_dump(is);
}

}  // namespace emid::estimators
