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

#include <forkroute/trace.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

namespace forkroute {

//==============================================================================
std::string format_record(const TraceRecord& r)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f %u %s ", r.time, r.vehicle,
    r.event == TraceEvent::Enter ? "enter" : "exit");
  return buf + r.resource;
}

std::string write_trace(const Trace& trace)
{
  std::string out;
  for (const auto& r : trace)
  {
    out += format_record(r);
    out += '\n';
  }
  return out;
}

Trace read_trace(const std::string& text)
{
  Trace trace;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
  {
    ++n;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#')
      continue;

    std::istringstream fields(line);
    std::string time, vehicle, event, resource, extra;
    if (!(fields >> time >> vehicle >> event >> resource) || (fields >> extra))
      throw TraceError(n, "expected 'time vehicle event resource'");

    TraceRecord r;
    std::size_t used = 0;
    try
    {
      r.time = std::stod(time, &used);
    }
    catch (const std::exception&)
    {
      used = 0;
    }
    if (used != time.size() || !std::isfinite(r.time) || r.time < 0)
      throw TraceError(n, "bad time '" + time + "'");

    if (vehicle.empty() || vehicle.size() > 9 ||
      !std::all_of(vehicle.begin(), vehicle.end(),
        [](char c) { return c >= '0' && c <= '9'; }))
    {
      throw TraceError(n, "bad vehicle '" + vehicle + "'");
    }
    r.vehicle = static_cast<std::uint32_t>(std::stoul(vehicle));

    if (event == "enter")
      r.event = TraceEvent::Enter;
    else if (event == "exit")
      r.event = TraceEvent::Exit;
    else
      throw TraceError(n, "bad event '" + event + "'");
    r.resource = resource;
    trace.push_back(std::move(r));
  }
  return trace;
}

//==============================================================================
std::string describe(const Violation& v)
{
  char buf[96];
  std::snprintf(buf, sizeof(buf), " vehicles %u and %u [%.3f, %.3f]",
    v.first, v.second, v.start, v.end);
  return v.resource + buf;
}

namespace {

struct Stay
{
  std::uint32_t vehicle = 0;
  double start = 0.0;
  double end = 0.0;
};

bool conflicting(const Stay& a, const Stay& b)
{
  const double lo = std::max(a.start, b.start);
  const double hi = std::min(a.end, b.end);
  if (lo < hi)
    return true;
  // A point visit colliding with another stay at that same instant.
  return lo == hi && (a.start == a.end || b.start == b.end);
}

} // namespace

std::vector<Violation> verify_trace(const Trace& trace,
  const TopologicalMap& map)
{
  // resource -> vehicle -> open entry time
  std::map<std::string, std::map<std::uint32_t, double>> open;
  std::map<std::string, std::vector<Stay>> stays;
  std::map<std::uint32_t, double> clock;

  for (std::size_t i = 0; i < trace.size(); ++i)
  {
    const auto& r = trace[i];
    if (!map.find_resource(r.resource))
      throw TraceError(i + 1, "unknown resource '" + r.resource + "'");
    auto [it, fresh] = clock.try_emplace(r.vehicle, r.time);
    if (!fresh && r.time < it->second)
      throw TraceError(i + 1, "time goes back for vehicle " +
        std::to_string(r.vehicle));
    it->second = r.time;

    auto& here = open[r.resource];
    if (r.event == TraceEvent::Enter)
    {
      if (!here.emplace(r.vehicle, r.time).second)
        throw TraceError(i + 1, "vehicle " + std::to_string(r.vehicle) +
          " enters " + r.resource + " twice");
    }
    else
    {
      const auto found = here.find(r.vehicle);
      if (found == here.end())
        throw TraceError(i + 1, "vehicle " + std::to_string(r.vehicle) +
          " exits " + r.resource + " without entering");
      stays[r.resource].push_back({r.vehicle, found->second, r.time});
      here.erase(found);
    }
  }
  for (const auto& [resource, vehicles] : open)
    for (const auto& [vehicle, start] : vehicles)
      stays[resource].push_back({vehicle, start,
        std::numeric_limits<double>::infinity()});

  std::vector<Violation> out;
  for (auto& [resource, list] : stays)
  {
    std::sort(list.begin(), list.end(), [](const Stay& a, const Stay& b) {
      return std::tie(a.start, a.end, a.vehicle) <
        std::tie(b.start, b.end, b.vehicle);
    });
    for (std::size_t a = 0; a < list.size(); ++a)
    {
      for (std::size_t b = a + 1; b < list.size(); ++b)
      {
        if (list[b].start > list[a].end)
          break;
        if (list[a].vehicle == list[b].vehicle ||
          !conflicting(list[a], list[b]))
        {
          continue;
        }
        out.push_back({resource, std::min(list[a].vehicle, list[b].vehicle),
          std::max(list[a].vehicle, list[b].vehicle),
          std::max(list[a].start, list[b].start),
          std::min(list[a].end, list[b].end)});
      }
    }
  }
  return out;
}

//==============================================================================
Trace path_trace(const TimedPath& path, const TopologicalMap& map,
  std::uint32_t vehicle)
{
  Trace trace;
  const auto& el = path.elements;
  for (std::size_t i = 0; i < el.size(); ++i)
  {
    std::size_t j = i;
    while (j + 1 < el.size() && el[j + 1].resource == el[i].resource)
      ++j;
    const auto& name = map.resource_name(el[i].resource);
    trace.push_back({el[i].entry, vehicle, TraceEvent::Enter, name});
    trace.push_back({el[j].exit, vehicle, TraceEvent::Exit, name});
    i = j;
  }
  return trace;
}

//==============================================================================
std::string export_plot(const Trace& trace, const TopologicalMap& map)
{
  using nlohmann::json;
  std::map<std::uint32_t, json> lines;
  for (const auto& r : trace)
  {
    const auto res = map.find_resource(r.resource);
    if (!res || !res->is_node())
      continue;
    const auto& p = map.node(res->index).position;
    auto& points = lines[r.vehicle];
    if (points.is_null())
      points = json::array();
    const json point = {r.time, p.x, p.y};
    if (points.empty() || points.back() != point)
      points.push_back(point);
  }

  json out;
  out["bounds"] = {map.bounds().width, map.bounds().height};
  out["columns"] = {"t", "x", "y"};
  out["vehicles"] = json::array();
  for (auto& [vehicle, points] : lines)
    out["vehicles"].push_back({{"id", vehicle}, {"points", points}});
  return out.dump(1) + "\n";
}

} // namespace forkroute
