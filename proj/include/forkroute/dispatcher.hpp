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

#ifndef FORKROUTE__DISPATCHER_HPP
#define FORKROUTE__DISPATCHER_HPP

#include <forkroute/router.hpp>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace forkroute {

//==============================================================================
/// One row of a transport order.
struct OrderRow
{
  std::string load;
  std::string unload;
  int quantity = 1;
  double request_time = 0.0;
};

enum class TaskPhase : std::uint8_t
{
  Pending,    // waiting for assignment
  Assigned,
  Finished,
  Parked      // no vehicle left to take it
};

std::string_view to_string(TaskPhase phase);

/// A single-pallet trip from a loading to an unloading station.
struct TransportTask
{
  std::string id;
  std::size_t load_node = 0;
  std::size_t unload_node = 0;
  int quantity = 1;
  double request_time = 0.0;
  TaskPhase phase = TaskPhase::Pending;

  /// Last status code: 0 finished, 1 reroute needed, 2 operator escalation.
  std::optional<int> status;
  std::optional<VehicleId> assigned_vehicle;
};

class IntakeError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//==============================================================================
struct VehicleSpec
{
  VehicleId id;
  std::size_t depot = 0;
  VehicleKinematics kinematics;

  /// Heading in degrees at the depot; unknown when unset.
  std::optional<double> heading;
};

enum class SubRouteKind : std::uint8_t
{
  ToLoad,
  ToUnload,
  ToDepot
};

std::string_view to_string(SubRouteKind kind);

struct SubRoute
{
  SubRouteId id = 0;
  SubRouteKind kind = SubRouteKind::ToLoad;
  TimedPath path;

  /// Index into the task store.
  std::optional<std::size_t> task;

  /// Heading when the sub-route starts.
  std::optional<double> heading;

  /// Set after a reroute: where the re-planned part begins. Its
  /// reservations are clipped here rather than at the path start.
  std::optional<double> resume;
};

struct VehicleSchedule
{
  VehicleId vehicle;
  std::size_t depot = 0;
  std::optional<double> heading;
  std::vector<SubRoute> subroutes;

  /// Index of the sub-route being executed; equals size() when done.
  std::size_t current = 0;

  bool in_service = true;
};

//==============================================================================
struct Position
{
  Resource resource;

  /// Metres along the arc in its stored direction of travel; 0 on nodes.
  double offset = 0.0;
};

struct StatusReport
{
  VehicleId vehicle;
  Position position;
  int code = 0;
  std::string detail;
  double time = 0.0;

  /// Code 1: the resource where the conflict occurred, when it differs from
  /// the position, and when the vehicle expects to leave it.
  std::optional<Resource> conflict;
  std::optional<double> expected_clear;
};

struct Action
{
  enum class Kind : std::uint8_t { None, Reroute, Escalate };

  Kind kind = Kind::None;
  VehicleId vehicle;
  std::optional<Resource> resource;
};

//==============================================================================
struct FleetSizing
{
  std::size_t count = 0;

  /// Vehicle per task, parallel to the task list passed in.
  std::vector<VehicleId> assignment;
  double makespan = 0.0;
};

class FleetSizingError : public std::runtime_error
{
public:
  FleetSizingError(const std::string& what, double best_makespan)
  : std::runtime_error(what),
    best_makespan(best_makespan)
  {
    // Do nothing
  }

  double best_makespan;
};

/// Raised when a sub-route cannot be planned while composing a schedule.
class CompositionError : public std::runtime_error
{
public:
  CompositionError(const std::string& what, SubRouteKind kind,
    std::optional<std::size_t> task)
  : std::runtime_error(what),
    kind(kind),
    task(task)
  {
    // Do nothing
  }

  SubRouteKind kind;
  std::optional<std::size_t> task;
};

struct DispatchEvent
{
  double time = 0.0;
  std::string kind;
  std::optional<VehicleId> vehicle;
  std::optional<std::string> task;
  std::string detail;
};

struct DispatcherConfig
{
  RouterConfig router;

  /// Run the maneuver pass after every plan.
  bool optimize = true;

  /// Block length when a conflict report gives no expected clear time.
  double default_block = 60.0;

  /// Readjustment rounds per reroute before escalating.
  std::size_t cascade_cap = 10;

  std::optional<double> deadline;
};

//==============================================================================
/// Owns tasks, schedules and the reservation table. Not thread-safe: callers
/// serialize every call.
class Dispatcher
{
public:
  Dispatcher(std::shared_ptr<const TopologicalMap> map,
    std::vector<VehicleSpec> fleet, DispatcherConfig config = {});

  const TopologicalMap& map() const { return *_map; }
  const ReservationTable& table() const { return _table; }
  ReservationTable& table() { return _table; }
  const DispatcherConfig& config() const { return _config; }
  const std::vector<VehicleSpec>& fleet() const { return _fleet; }
  const std::vector<TransportTask>& tasks() const { return _tasks; }
  const std::vector<VehicleSchedule>& schedules() const { return _schedules; }
  const VehicleSchedule& schedule(VehicleId v) const;
  const VehicleSpec& spec(VehicleId v) const;
  const std::vector<DispatchEvent>& events() const { return _events; }

  /// Validates the rows and adds one unit task per pallet. Returns the new
  /// task indices. Throws IntakeError; nothing is added on error.
  std::vector<std::size_t> intake(const std::vector<OrderRow>& rows,
    double now = 0.0);

  /// Fleet sizing over `vehicles` (in-service ids) for the given tasks.
  /// Throws FleetSizingError when the deadline cannot be met.
  FleetSizing size_fleet(const std::vector<std::size_t>& tasks,
    const std::vector<VehicleId>& vehicles,
    std::optional<double> deadline, double now = 0.0) const;

  /// Plans and commits to_load/to_unload per task and a closing to_depot,
  /// appended to the vehicle's schedule. Throws CompositionError, leaving
  /// the schedule and table untouched.
  const VehicleSchedule& compose_schedule(VehicleId vehicle,
    const std::vector<std::size_t>& tasks, double now);

  /// One loop iteration: sizes the fleet for pending tasks and composes
  /// schedules. Returns the number of tasks assigned.
  std::size_t step(double now);

  /// Triage of a vehicle report.
  Action monitor(const StatusReport& report);

  /// monitor() followed by the reroute or escalation it calls for.
  Action handle(const StatusReport& report, double now);

  /// Re-plans the vehicle's current sub-route around `conflict`.
  /// Returns false when the vehicle had to be escalated instead.
  bool reroute(const StatusReport& report, double now);

  /// Operator block of a resource; repairs every evicted sub-route.
  void block(Resource resource, Interval interval, double now);

  /// Takes the vehicle out of service and hands its tasks to the others.
  void escalate(VehicleId vehicle, double now, const std::string& reason);

  /// Consistency checks over schedules and table; empty when sound.
  std::vector<std::string> check_invariants() const;

  /// Number of reroutes performed so far (including cascade repairs).
  std::size_t reroute_count() const { return _reroutes; }

  /// Largest number of cascade rounds any reroute needed.
  std::size_t max_cascade_rounds() const { return _max_rounds; }

  /// Cross-vehicle overlaps found by a full scan after each reroute.
  std::size_t post_reroute_overlaps() const { return _post_reroute_overlaps; }

  /// Where the vehicle physically is; the simulator installs this so
  /// escalations block the right resource. Defaults to the plan estimate.
  void set_position_source(
    std::function<std::optional<Position>(VehicleId)> source)
  {
    _position_source = std::move(source);
  }

  /// Resource the plan puts the vehicle on at `now`.
  Position planned_position(VehicleId vehicle, double now) const;

private:
  using RepairQueue = std::vector<SubRouteKey>;

  struct Anchor
  {
    std::size_t node = 0;
    double time = 0.0;
    std::optional<double> heading;
    std::vector<PathElement> prefix;
    double path_start = 0.0;
    bool complete = false;
  };

  struct Tail
  {
    std::size_t node = 0;
    double time = 0.0;
    std::optional<double> heading;
  };

  /// Vehicle-owned occupancy that a block covers and must not be reserved.
  struct Skip
  {
    VehicleId vehicle;
    Resource resource;
    Interval interval;
  };

  VehicleSchedule& schedule_mut(VehicleId v);
  std::size_t index_of(VehicleId v) const;
  void emit(double time, std::string kind, std::optional<VehicleId> vehicle,
    std::optional<std::size_t> task, std::string detail);

  PlanRequest request_for(const VehicleSchedule& s, const SubRoute& sub,
    std::size_t origin, double start, std::optional<double> heading) const;
  TimedPath plan_subroute(const PlanRequest& request, VehicleId v) const;
  TimedPath plan_with_priority(const PlanRequest& request, VehicleId v,
    double now) const;
  bool movable(const Reservation& r, double now) const;
  std::vector<Reservation> reservations(VehicleId v, const SubRoute& sub,
    bool parking) const;
  void commit_subroute(VehicleId v, const SubRoute& sub, double now,
    bool preempt = false);
  bool intact(VehicleId v, const SubRoute& sub) const;
  std::optional<double> end_heading(const SubRoute& sub) const;

  Tail open_tail(VehicleSchedule& s, double now, bool keep_depot_leg,
    bool& dropped_depot_leg);
  Tail tail_estimate(const VehicleSchedule& s, double now) const;

  Anchor execution_anchor(const VehicleSchedule& s, const SubRoute& sub,
    double now) const;
  bool replan_with_anchor(VehicleSchedule& s, std::size_t index,
    const Anchor& anchor, double now);
  bool repair(SubRouteKey key, double now, RepairQueue& queue);
  bool readjust_downstream(VehicleSchedule& s, std::size_t index, double now);
  void run_cascade(RepairQueue queue, double now);
  void escalate_internal(VehicleId v, double now, const std::string& reason,
    std::optional<Position> position, RepairQueue& queue);
  void evict_around(VehicleId v, Resource resource, Interval interval,
    RepairQueue& queue);
  void reserve_parking(VehicleId v, SubRouteId sub, std::size_t depot,
    double from);
  void finish_mutation(double now);
  const Skip* skip_for(VehicleId v) const;
  std::vector<VehicleId> occupants(Resource resource, double now) const;
  double distance(std::size_t from, std::size_t to) const;

  std::shared_ptr<const TopologicalMap> _map;
  std::vector<VehicleSpec> _fleet;
  DispatcherConfig _config;
  ReservationTable _table;
  std::vector<TransportTask> _tasks;
  std::vector<VehicleSchedule> _schedules;
  SubRouteId _next_subroute = 1;
  mutable std::map<std::pair<std::size_t, std::size_t>, double> _distance;
  std::vector<DispatchEvent> _events;
  std::vector<double> _retry_at;
  std::vector<Skip> _skip;

  std::function<std::optional<Position>(VehicleId)> _position_source;
  std::string _last_failure;
  RepairQueue _forced;
  std::size_t _reroutes = 0;
  std::size_t _max_rounds = 0;
  std::size_t _post_reroute_overlaps = 0;
};

} // namespace forkroute

#endif // FORKROUTE__DISPATCHER_HPP
