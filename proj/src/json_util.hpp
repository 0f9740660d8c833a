/*
 * Copyright (C) 2026 The forkroute Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
*/

#ifndef FORKROUTE__SRC__JSON_UTIL_HPP
#define FORKROUTE__SRC__JSON_UTIL_HPP

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace forkroute {

inline std::string read_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// JSON has no infinity; open-ended times are written as null.
template<typename Json>
Json time_to_json(double t)
{
  if (std::isinf(t))
    return Json(nullptr);
  return Json(t);
}

template<typename Json>
double time_from_json(const Json& j)
{
  if (j.is_null())
    return std::numeric_limits<double>::infinity();
  return j.template get<double>();
}

} // namespace forkroute

#endif // FORKROUTE__SRC__JSON_UTIL_HPP
