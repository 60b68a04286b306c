#pragma once

#include <json.hpp>
#include <string>

#include "stt/errors.hpp"
#include "stt/scenario.hpp"

namespace stt::detail {

using nlohmann::json;

inline const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(std::string("missing key '") + key + "'");
  }
  return j.at(key);
}

template <class T>
T get_as(const json& j, const char* what) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad value for '") + what + "': " + e.what());
  }
}

inline Box box_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + ": box must be a list of [lo, hi] pairs");
  Box b;
  for (const auto& ax : j) {
    if (!ax.is_array() || ax.size() != 2) {
      throw ParseError(std::string(what) + ": each axis must be [lo, hi]");
    }
    b.axes.push_back({get_as<double>(ax[0], what), get_as<double>(ax[1], what)});
  }
  return b;
}

inline json box_to_json(const Box& b) {
  json out = json::array();
  for (const auto& ax : b.axes) out.push_back({ax.lo, ax.hi});
  return out;
}

}  // namespace stt::detail
