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

#ifndef FORKROUTE__ROUTER_HPP
#define FORKROUTE__ROUTER_HPP

#include <forkroute/graph.hpp>
#include <forkroute/reservation.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace forkroute {

//==============================================================================
struct VehicleKinematics
{
  double max_speed = 1.0;       // m/s
  double max_turn_rate = 5.0;   // deg/s
  double load_time = 10.0;      // s
  double unload_time = 10.0;    // s

  bool valid() const
  {
    return max_speed > 0.0 && max_turn_rate > 0.0 && load_time > 0.0 &&
      unload_time > 0.0;
  }
};

struct RouterConfig
{
  /// Inflation applied to both ends of every reservation, in seconds.
  double margin = 1.0;

  /// Turns at or above this angle (degrees) are maneuvers and cost time.
  double maneuver_threshold = 45.0;
};

//==============================================================================
enum class PathAction : std::uint8_t
{
  Traverse,
  Turn,
  Load,
  Unload,
  Wait,
  Dwell
};

std::string_view to_string(PathAction action);

struct PathElement
{
  Resource resource;
  double entry = 0.0;
  double exit = 0.0;
  PathAction action = PathAction::Traverse;

  /// Arcs only: driven against the stored from→to direction.
  bool reversed = false;

  /// Turn elements only: the turn angle in degrees.
  double angle = 0.0;

  friend bool operator==(const PathElement&, const PathElement&) = default;
};

/// Alternating node/arc element sequence. Consecutive elements meet at one
/// instant; several consecutive elements may sit on the same node.
struct TimedPath
{
  std::vector<PathElement> elements;
  std::size_t origin = 0;
  std::size_t dest = 0;
  double start = 0.0;
  double completion = 0.0;
  std::size_t turn_count = 0;
  double cost = 0.0;

  std::size_t arc_count() const;
  std::vector<std::size_t> node_sequence() const;

  friend bool operator==(const TimedPath&, const TimedPath&) = default;
};

/// A single origin→destination query.
struct PlanRequest
{
  std::size_t origin = 0;
  std::size_t dest = 0;
  double start = 0.0;

  /// Vehicle heading at the origin in degrees (counter-clockwise from +x).
  /// Unknown heading charges no initial turn.
  std::optional<double> heading;

  /// The planning vehicle's own reservations are not obstacles.
  std::optional<VehicleId> vehicle;

  /// The vehicle cannot leave the origin before this time.
  double earliest_departure = 0.0;

  /// Handling appended to the destination interval: Load or Unload, or
  /// Traverse for none.
  PathAction dest_action = PathAction::Traverse;

  /// The vehicle stays at the destination forever (depot parking): the
  /// destination's free window must be unbounded.
  bool park_at_dest = false;
};

//==============================================================================
class PlanningError : public std::runtime_error
{
public:
  enum class Code
  {
    /// No path exists in the map at all.
    Unreachable,
    /// Paths exist but every one is blocked by reservations.
    UnreachableInTime,
    InvalidRequest
  };

  PlanningError(Code code, const std::string& what)
  : std::runtime_error(what),
    _code(code)
  {
    // Do nothing
  }

  Code code() const { return _code; }

private:
  Code _code;
};

//==============================================================================
double traversal_time(const Arc& arc, const VehicleKinematics& kin);

/// Zero below the maneuver threshold.
double turn_time(TurnAngle angle, const VehicleKinematics& kin,
  double maneuver_threshold = RouterConfig{}.maneuver_threshold);

/// Half-open reservation interval an element needs. Empty (start == end)
/// for zero-length node passes without margin.
Interval reservation_interval(const PathElement& element, double margin,
  double path_start);

/// Earliest-completion time-window path. Throws PlanningError.
TimedPath plan(const TopologicalMap& map, const ReservationTable& table,
  const PlanRequest& request, const VehicleKinematics& kin,
  const RouterConfig& config = {});

TimedPath plan(const TopologicalMap& map, const ReservationTable& table,
  std::size_t origin, std::size_t dest, double start,
  const VehicleKinematics& kin, double margin);

/// Schedules a fixed node sequence as early as the table allows, with
/// waits where needed. Throws PlanningError when the sequence is not a walk
/// in the map or cannot fit.
TimedPath time_route(const TopologicalMap& map, const ReservationTable& table,
  const PlanRequest& request, const std::vector<std::size_t>& nodes,
  const VehicleKinematics& kin, const RouterConfig& config = {});

/// Maneuver pass: finds the path with the fewest maneuvers whose completion
/// does not exceed `path`'s, preferring earlier completion among equals.
/// Returns `path` unchanged when nothing is strictly better.
TimedPath optimize_maneuvers(const TopologicalMap& map,
  const ReservationTable& table, const PlanRequest& request,
  const TimedPath& path, const VehicleKinematics& kin,
  const RouterConfig& config = {});

/// The reservations `commit` would write.
std::vector<Reservation> path_reservations(const TimedPath& path,
  VehicleId vehicle, SubRouteId subroute, double margin);

/// Writes one reservation per element, atomically. Throws ConflictError.
void commit(ReservationTable& table, const TimedPath& path, VehicleId vehicle,
  SubRouteId subroute, double margin);

/// True when every element, inflated by the margin, lies inside a free
/// window of the table (ignoring `vehicle`'s own reservations).
bool window_feasible(const ReservationTable& table, const TimedPath& path,
  double margin, std::optional<VehicleId> vehicle = std::nullopt);

/// Checks the structural invariants of a path. Returns an empty string when
/// consistent, otherwise a description of the first problem.
std::string check_path(const TopologicalMap& map, const TimedPath& path,
  const RouterConfig& config = {});

} // namespace forkroute

#endif // FORKROUTE__ROUTER_HPP
