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

#ifndef FORKROUTE__TRACE_HPP
#define FORKROUTE__TRACE_HPP

#include <forkroute/graph.hpp>
#include <forkroute/router.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace forkroute {

//==============================================================================
enum class TraceEvent : std::uint8_t
{
  Enter,
  Exit
};

/// One line of a trace: `time vehicle event resource`.
struct TraceRecord
{
  double time = 0.0;
  std::uint32_t vehicle = 0;
  TraceEvent event = TraceEvent::Enter;
  std::string resource;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

using Trace = std::vector<TraceRecord>;

class TraceError : public std::runtime_error
{
public:
  TraceError(std::size_t line, const std::string& what)
  : std::runtime_error("line " + std::to_string(line) + ": " + what),
    line(line)
  {
    // Do nothing
  }

  /// 1-based line number of the offending record.
  std::size_t line;
};

std::string format_record(const TraceRecord& record);
std::string write_trace(const Trace& trace);

/// Parses trace text. Blank lines and lines starting with '#' are skipped.
/// Throws TraceError.
Trace read_trace(const std::string& text);

//==============================================================================
struct Violation
{
  std::string resource;
  std::uint32_t first = 0;
  std::uint32_t second = 0;
  double start = 0.0;
  double end = 0.0;
};

std::string describe(const Violation& v);

/// Finds every pair of vehicles occupying the same node or arc at
/// overlapping times. Occupancy runs from an enter record to the matching
/// exit; an unmatched enter lasts forever. A vehicle leaving a resource at
/// the instant another enters it is not a violation. Throws TraceError on
/// unknown resources, broken enter/exit alternation or time going back.
std::vector<Violation> verify_trace(const Trace& trace,
  const TopologicalMap& map);

/// Enter/exit records of one planned path. Consecutive elements on the same
/// node form one stay.
Trace path_trace(const TimedPath& path, const TopologicalMap& map,
  std::uint32_t vehicle);

/// Per-vehicle polylines with timestamps, built from node visits, as JSON.
std::string export_plot(const Trace& trace, const TopologicalMap& map);

} // namespace forkroute

#endif // FORKROUTE__TRACE_HPP
