#include "lapp/preference/segment.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "lapp/numerics/rng.hpp"

namespace lapp::pref {

namespace {

bool is_contact_channel(const std::string& name) {
  return name.find("contact") != std::string::npos;
}

nlohmann::json matrix_to_json(const num::DenseArray& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

num::DenseArray matrix_from_json(const nlohmann::json& rows, const char* what) {
  if (!rows.is_array() || rows.empty())
    throw std::invalid_argument(std::string("segment json: ") + what +
                                " must be a non-empty array");
  const std::size_t h = rows.size();
  if (!rows[0].is_array() || rows[0].empty())
    throw std::invalid_argument(std::string("segment json: ") + what +
                                " rows must be non-empty arrays");
  const std::size_t dim = rows[0].size();
  num::DenseArray m({h, dim});
  for (std::size_t i = 0; i < h; ++i) {
    if (!rows[i].is_array() || rows[i].size() != dim)
      throw std::invalid_argument(std::string("segment json: ragged rows in ") +
                                  what);
    for (std::size_t j = 0; j < dim; ++j) m.at(i, j) = rows[i][j].get<double>();
  }
  return m;
}

}  // namespace

std::size_t TrajectorySegment::length() const {
  if (!channels.empty()) return channels.begin()->second.rows();
  return actions.empty() ? 0 : actions.rows();
}

std::size_t TrajectorySegment::feature_dim(bool include_actions) const {
  std::size_t d = 0;
  for (const auto& [name, m] : channels) d += m.cols();
  if (include_actions && !actions.empty()) d += actions.cols();
  return d;
}

void TrajectorySegment::write_features(std::size_t t, bool include_actions,
                                       double* out) const {
  std::size_t o = 0;
  for (const auto& [name, m] : channels)
    for (std::size_t j = 0; j < m.cols(); ++j) out[o++] = m.at(t, j);
  if (include_actions && !actions.empty())
    for (std::size_t j = 0; j < actions.cols(); ++j) out[o++] = actions.at(t, j);
}

void TrajectorySegment::validate() const {
  const std::size_t h = length();
  if (h == 0)
    throw std::invalid_argument("TrajectorySegment: empty segment");
  for (const auto& [name, m] : channels) {
    if (m.rows() != h)
      throw std::invalid_argument("TrajectorySegment: channel '" + name +
                                  "' has " + std::to_string(m.rows()) +
                                  " steps, expected " + std::to_string(h));
    if (m.cols() == 0)
      throw std::invalid_argument("TrajectorySegment: channel '" + name +
                                  "' has zero width");
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!std::isfinite(m[i]))
        throw std::invalid_argument("TrajectorySegment: non-finite value in '" +
                                    name + "'");
      if (is_contact_channel(name) && m[i] != 0.0 && m[i] != 1.0)
        throw std::invalid_argument("TrajectorySegment: contact channel '" +
                                    name + "' must be 0/1");
    }
  }
  if (!actions.empty()) {
    if (actions.rows() != h)
      throw std::invalid_argument("TrajectorySegment: actions have " +
                                  std::to_string(actions.rows()) +
                                  " steps, expected " + std::to_string(h));
    for (std::size_t i = 0; i < actions.size(); ++i)
      if (!std::isfinite(actions[i]))
        throw std::invalid_argument("TrajectorySegment: non-finite action");
  }
}

void PreferenceTriple::validate() const {
  a.validate();
  b.validate();
  if (y != 0.0 && y != 0.5 && y != 1.0)
    throw std::invalid_argument("PreferenceTriple: y must be 0, 0.5 or 1");
  if (a.length() != b.length())
    throw std::invalid_argument("PreferenceTriple: segment lengths differ");
}

std::string segment_to_json(const TrajectorySegment& s) {
  nlohmann::json j;
  nlohmann::json ch;
  for (const auto& [name, m] : s.channels) ch[name] = matrix_to_json(m);
  j["channels"] = std::move(ch);
  j["actions"] = s.actions.empty() ? nlohmann::json::array()
                                   : matrix_to_json(s.actions);
  j["episode"] = s.episode;
  j["start"] = s.start;
  return j.dump();
}

TrajectorySegment segment_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TrajectorySegment s;
  if (!j.contains("channels") || !j["channels"].is_object())
    throw std::invalid_argument("segment json: missing channels object");
  for (const auto& [name, rows] : j["channels"].items())
    s.channels[name] = matrix_from_json(rows, name.c_str());
  if (j.contains("actions") && j["actions"].is_array() && !j["actions"].empty())
    s.actions = matrix_from_json(j["actions"], "actions");
  s.episode = j.value("episode", std::int64_t{0});
  s.start = j.value("start", std::int64_t{0});
  s.validate();
  return s;
}

std::string triple_to_json(const PreferenceTriple& t) {
  nlohmann::json j;
  j["a"] = nlohmann::json::parse(segment_to_json(t.a));
  j["b"] = nlohmann::json::parse(segment_to_json(t.b));
  j["y"] = t.y;
  return j.dump();
}

PreferenceTriple triple_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  PreferenceTriple t;
  t.a = segment_from_json(j.at("a").dump());
  t.b = segment_from_json(j.at("b").dump());
  t.y = j.at("y").get<double>();
  t.validate();
  return t;
}

std::uint64_t pair_hash(const TrajectorySegment& a, const TrajectorySegment& b) {
  const std::string sa = segment_to_json(a);
  const std::string sb = segment_to_json(b);
  std::string joined;
  joined.reserve(sa.size() + sb.size() + 1);
  joined += sa;
  joined += '\n';
  joined += sb;
  return num::fnv1a64(joined);
}

}  // namespace lapp::pref
