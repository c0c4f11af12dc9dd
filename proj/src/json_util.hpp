#pragma once

#include <string>

#include <json.hpp>

#include "nlr/errors.hpp"
#include "nlr/geometry.hpp"

namespace nlr::json_util {

// Row-major 16-number arrays. `what` prefixes the error message.
inline Mat4 matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 16) throw ParseError(what + " must be an array of 16 numbers");
  Mat4 m;
  for (int k = 0; k < 16; ++k) {
    if (!j[k].is_number()) throw ParseError(what + " must be an array of 16 numbers");
    m(k / 4, k % 4) = j[k].get<double>();
  }
  return m;
}

inline nlohmann::json matrix_to_json(const Mat4& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int k = 0; k < 16; ++k) a.push_back(m(k / 4, k % 4));
  return a;
}

}  // namespace nlr::json_util
