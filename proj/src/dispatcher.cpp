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

#include <forkroute/dispatcher.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

namespace forkroute {

namespace {

constexpr double Eps = 1e-9;

std::string fmt(double t)
{
  if (std::isinf(t))
    return "inf";
  std::ostringstream out;
  out.precision(3);
  out << std::fixed << t;
  return out.str();
}

double heading_of(Point d)
{
  return std::atan2(d.y, d.x) * 180.0 / std::numbers::pi;
}

std::optional<double> last_arc_heading(const TopologicalMap& map,
  const std::vector<PathElement>& elements)
{
  for (auto it = elements.rbegin(); it != elements.rend(); ++it)
  {
    if (it->resource.is_arc())
      return heading_of(map.direction({it->resource.index, it->reversed}));
  }
  return std::nullopt;
}

bool same_heading(std::optional<double> a, std::optional<double> b)
{
  if (!a || !b)
    return a.has_value() == b.has_value();
  return std::abs(angle_between(
      {std::cos(*a * std::numbers::pi / 180), std::sin(*a * std::numbers::pi / 180)},
      {std::cos(*b * std::numbers::pi / 180), std::sin(*b * std::numbers::pi / 180)})
    .value) < 1e-6;
}

void finalize(TimedPath& path)
{
  path.completion = path.elements.empty() ? path.start :
    path.elements.back().exit;
  path.cost = path.completion - path.start;
  path.turn_count = static_cast<std::size_t>(std::count_if(
      path.elements.begin(), path.elements.end(),
      [](const PathElement& e) { return e.action == PathAction::Turn; }));
}

} // namespace

//==============================================================================
std::string_view to_string(TaskPhase phase)
{
  switch (phase)
  {
    case TaskPhase::Pending: return "pending";
    case TaskPhase::Assigned: return "assigned";
    case TaskPhase::Finished: return "finished";
    case TaskPhase::Parked: return "parked";
  }
  return "?";
}

std::string_view to_string(SubRouteKind kind)
{
  switch (kind)
  {
    case SubRouteKind::ToLoad: return "to_load";
    case SubRouteKind::ToUnload: return "to_unload";
    case SubRouteKind::ToDepot: return "to_depot";
  }
  return "?";
}

//==============================================================================
Dispatcher::Dispatcher(std::shared_ptr<const TopologicalMap> map,
  std::vector<VehicleSpec> fleet, DispatcherConfig config)
: _map(std::move(map)),
  _fleet(std::move(fleet)),
  _config(config),
  _table(_map)
{
  std::sort(_fleet.begin(), _fleet.end(),
    [](const VehicleSpec& a, const VehicleSpec& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < _fleet.size(); ++i)
  {
    const auto& v = _fleet[i];
    if (v.id == SystemVehicle)
      throw std::invalid_argument("vehicle id 0 is reserved");
    if (i > 0 && _fleet[i - 1].id == v.id)
      throw std::invalid_argument("duplicate vehicle " + to_string(v.id));
    if (v.depot >= _map->nodes().size())
      throw std::invalid_argument("vehicle " + to_string(v.id) +
        ": unknown depot");
    if (!v.kinematics.valid())
      throw std::invalid_argument("vehicle " + to_string(v.id) +
        ": kinematics must be positive");
    try
    {
      _table.reserve(Resource::node(v.depot), {0.0, Infinity}, v.id,
        ParkingSubRoute);
    }
    catch (const ConflictError&)
    {
      throw std::invalid_argument("vehicle " + to_string(v.id) +
        ": depot " + _map->node(v.depot).id + " already taken");
    }
    VehicleSchedule s;
    s.vehicle = v.id;
    s.depot = v.depot;
    s.heading = v.heading;
    _schedules.push_back(std::move(s));
  }
}

//==============================================================================
std::size_t Dispatcher::index_of(VehicleId v) const
{
  const auto it = std::lower_bound(_fleet.begin(), _fleet.end(), v,
    [](const VehicleSpec& s, VehicleId id) { return s.id < id; });
  if (it == _fleet.end() || it->id != v)
    throw std::invalid_argument("unknown vehicle " + to_string(v));
  return static_cast<std::size_t>(it - _fleet.begin());
}

const VehicleSchedule& Dispatcher::schedule(VehicleId v) const
{
  return _schedules[index_of(v)];
}

VehicleSchedule& Dispatcher::schedule_mut(VehicleId v)
{
  return _schedules[index_of(v)];
}

const VehicleSpec& Dispatcher::spec(VehicleId v) const
{
  return _fleet[index_of(v)];
}

void Dispatcher::emit(double time, std::string kind,
  std::optional<VehicleId> vehicle, std::optional<std::size_t> task,
  std::string detail)
{
  DispatchEvent e;
  e.time = time;
  e.kind = std::move(kind);
  e.vehicle = vehicle;
  if (task)
    e.task = _tasks[*task].id;
  e.detail = std::move(detail);
  _events.push_back(std::move(e));
}

double Dispatcher::distance(std::size_t from, std::size_t to) const
{
  const auto key = std::make_pair(from, to);
  const auto it = _distance.find(key);
  if (it != _distance.end())
    return it->second;
  double d = Infinity;
  try
  {
    d = static_shortest_path(*_map, from, to).length;
  }
  catch (const MapError&)
  {
  }
  _distance.emplace(key, d);
  return d;
}

//==============================================================================
std::vector<std::size_t> Dispatcher::intake(const std::vector<OrderRow>& rows,
  double now)
{
  struct Parsed { std::size_t load, unload; };
  std::vector<Parsed> parsed;
  for (const auto& row : rows)
  {
    const auto load = _map->find_node(row.load);
    if (!load)
      throw IntakeError("unknown station '" + row.load + "'");
    if (_map->node(*load).kind != NodeKind::LoadingStation)
      throw IntakeError("'" + row.load + "' is not a loading station");
    const auto unload = _map->find_node(row.unload);
    if (!unload)
      throw IntakeError("unknown station '" + row.unload + "'");
    if (_map->node(*unload).kind != NodeKind::UnloadingStation)
      throw IntakeError("'" + row.unload + "' is not an unloading station");
    if (row.quantity <= 0)
      throw IntakeError("quantity must be positive for " + row.load + " -> " +
        row.unload);
    if (!std::isfinite(row.request_time) || row.request_time < 0.0)
      throw IntakeError("bad request time for " + row.load + " -> " +
        row.unload);
    parsed.push_back({*load, *unload});
  }

  std::vector<std::size_t> added;
  for (std::size_t r = 0; r < rows.size(); ++r)
  {
    // Forklifts carry one pallet per trip.
    for (int q = 0; q < rows[r].quantity; ++q)
    {
      TransportTask t;
      t.id = "T" + std::to_string(_tasks.size() + 1);
      t.load_node = parsed[r].load;
      t.unload_node = parsed[r].unload;
      t.quantity = 1;
      t.request_time = rows[r].request_time;
      _tasks.push_back(t);
      _retry_at.push_back(0.0);
      added.push_back(_tasks.size() - 1);
      emit(now, "task_created", std::nullopt, added.back(),
        rows[r].load + " -> " + rows[r].unload + " at " +
        fmt(t.request_time));
    }
  }
  return added;
}

//==============================================================================
Dispatcher::Tail Dispatcher::tail_estimate(const VehicleSchedule& s,
  double now) const
{
  if (s.subroutes.empty())
    return {s.depot, now, s.heading};
  const auto& last = s.subroutes.back();
  const std::size_t li = s.subroutes.size() - 1;
  if (last.kind == SubRouteKind::ToDepot && s.current <= li &&
    now < last.path.start && li > 0)
  {
    const auto& prev = s.subroutes[li - 1];
    return {prev.path.dest, std::max(now, prev.path.completion),
      end_heading(prev)};
  }
  return {last.path.dest, std::max(now, last.path.completion),
    end_heading(last)};
}

FleetSizing Dispatcher::size_fleet(const std::vector<std::size_t>& tasks,
  const std::vector<VehicleId>& vehicles, std::optional<double> deadline,
  double now) const
{
  if (tasks.empty())
    return {};
  if (vehicles.empty())
    throw FleetSizingError("no vehicles in service", Infinity);

  std::vector<std::size_t> order = tasks;
  std::stable_sort(order.begin(), order.end(),
    [&](std::size_t a, std::size_t b)
    {
      return std::tie(_tasks.at(a).request_time, a) <
        std::tie(_tasks.at(b).request_time, b);
    });
  std::vector<VehicleId> fleet = vehicles;
  std::sort(fleet.begin(), fleet.end());

  struct Avail { std::size_t node; double time; };
  std::vector<Avail> initial;
  for (const auto v : fleet)
  {
    const auto tail = tail_estimate(schedule(v), now);
    initial.push_back({tail.node, tail.time});
  }

  auto greedy = [&](std::size_t k, std::vector<VehicleId>& assignment)
  {
    auto avail = initial;
    std::vector<bool> used(fleet.size(), false);
    std::size_t used_count = 0;
    double makespan = 0.0;
    std::map<std::size_t, VehicleId> by_task;
    for (const auto t : order)
    {
      const auto& task = _tasks[t];
      std::optional<std::size_t> best;
      double best_done = Infinity;
      for (std::size_t i = 0; i < fleet.size(); ++i)
      {
        if (used_count >= k && !used[i])
          continue;
        const auto& kin = spec(fleet[i]).kinematics;
        const double drive = distance(avail[i].node, task.load_node) +
          distance(task.load_node, task.unload_node);
        const double done = std::max(avail[i].time, task.request_time) +
          drive / kin.max_speed + kin.load_time + kin.unload_time;
        if (done < best_done || (done == best_done && best &&
          avail[i].time < avail[*best].time))
        {
          best_done = done;
          best = i;
        }
      }
      if (!best)
        return Infinity;
      if (!used[*best])
      {
        used[*best] = true;
        ++used_count;
      }
      avail[*best] = {task.unload_node, best_done};
      makespan = std::max(makespan, best_done);
      by_task[t] = fleet[*best];
    }
    assignment.clear();
    for (const auto t : tasks)
      assignment.push_back(by_task.at(t));
    return makespan;
  };

  const std::size_t limit = std::min(fleet.size(), tasks.size());
  std::vector<double> makespans;
  std::vector<std::vector<VehicleId>> assignments;
  for (std::size_t k = 1; k <= limit; ++k)
  {
    assignments.emplace_back();
    makespans.push_back(greedy(k, assignments.back()));
  }
  const double best = *std::min_element(makespans.begin(), makespans.end());
  if (!std::isfinite(best))
    throw FleetSizingError("tasks unreachable for every vehicle", best);

  for (std::size_t k = 1; k <= limit; ++k)
  {
    const double m = makespans[k - 1];
    const bool ok = deadline ? m <= *deadline + Eps : m <= best + Eps;
    if (ok)
    {
      FleetSizing out;
      out.assignment = assignments[k - 1];
      out.makespan = m;
      out.count = std::set<VehicleId>(out.assignment.begin(),
        out.assignment.end()).size();
      return out;
    }
  }
  throw FleetSizingError("deadline " + fmt(*deadline) +
    " cannot be met; best makespan " + fmt(best), best);
}

//==============================================================================
std::optional<double> Dispatcher::end_heading(const SubRoute& sub) const
{
  if (const auto h = last_arc_heading(*_map, sub.path.elements))
    return h;
  return sub.heading;
}

PlanRequest Dispatcher::request_for(const VehicleSchedule& s,
  const SubRoute& sub, std::size_t origin, double start,
  std::optional<double> heading) const
{
  PlanRequest r;
  r.origin = origin;
  r.dest = sub.path.dest;
  r.start = start;
  r.heading = heading;
  r.vehicle = s.vehicle;
  switch (sub.kind)
  {
    case SubRouteKind::ToLoad: r.dest_action = PathAction::Load; break;
    case SubRouteKind::ToUnload: r.dest_action = PathAction::Unload; break;
    case SubRouteKind::ToDepot: r.park_at_dest = true; break;
  }
  return r;
}

TimedPath Dispatcher::plan_subroute(const PlanRequest& request,
  VehicleId v) const
{
  const auto& kin = spec(v).kinematics;
  auto path = plan(*_map, _table, request, kin, _config.router);
  if (_config.optimize)
    path = optimize_maneuvers(*_map, _table, request, path, kin,
      _config.router);
  return path;
}

std::vector<Reservation> Dispatcher::reservations(VehicleId v,
  const SubRoute& sub, bool parking) const
{
  const double m = _config.router.margin;
  std::vector<Reservation> list;
  for (const auto& e : sub.path.elements)
  {
    const double clip = sub.resume && e.entry >= *sub.resume ?
      *sub.resume : sub.path.start;
    const auto interval = reservation_interval(e, m, clip);
    if (interval.end > interval.start)
      list.push_back({e.resource, interval, v, sub.id});
  }
  if (parking && sub.kind == SubRouteKind::ToDepot)
  {
    const double from = sub.path.elements.empty() ? sub.path.start :
      std::max(sub.path.completion - m, sub.path.start);
    list.push_back({Resource::node(sub.path.dest), {from, Infinity}, v,
      sub.id});
  }
  return list;
}

bool Dispatcher::movable(const Reservation& r, double now) const
{
  if (r.vehicle == SystemVehicle || r.subroute == ParkingSubRoute)
    return false;
  const auto& s = schedule(r.vehicle);
  if (!s.in_service)
    return false;
  for (std::size_t i = s.current; i < s.subroutes.size(); ++i)
  {
    const auto& sub = s.subroutes[i];
    if (sub.id != r.subroute)
      continue;
    if (i == s.current)
    {
      // Only what lies beyond the point the vehicle is committed to.
      const auto a = execution_anchor(s, sub, now);
      return !a.complete &&
        r.interval.start > a.time - _config.router.margin + Eps;
    }
    if (i > s.current + 1)
      return true;
    // The vehicle waits where its current leg ends until this one departs.
    const auto& el = sub.path.elements;
    const auto first_arc = std::find_if(el.begin(), el.end(),
      [](const PathElement& e) { return e.resource.is_arc(); });
    const double departs = first_arc == el.end() ? Infinity :
      first_arc->entry;
    return !(r.resource == Resource::node(sub.path.origin) &&
      r.interval.start < departs);
  }
  return false;
}

TimedPath Dispatcher::plan_with_priority(const PlanRequest& request,
  VehicleId v, double now) const
{
  try
  {
    return plan_subroute(request, v);
  }
  catch (const PlanningError& e)
  {
    if (e.code() != PlanningError::Code::UnreachableInTime)
      throw;
  }

  // Plan against what cannot move: blocks, parked vehicles and the stretch
  // of each current leg its vehicle is committed to.
  ReservationTable hard(_map);
  std::vector<Reservation> keep;
  for (std::size_t slot = 0; slot < _map->resource_count(); ++slot)
    for (const auto& r : _table.on(_map->resource_at_slot(slot)))
      if (r.vehicle == v || !movable(r, now))
        keep.push_back(r);
  hard.reserve_all(keep);
  const auto& kin = spec(v).kinematics;
  auto path = plan(*_map, hard, request, kin, _config.router);
  if (_config.optimize)
    path = optimize_maneuvers(*_map, hard, request, path, kin,
      _config.router);
  return path;
}

void Dispatcher::commit_subroute(VehicleId v, const SubRoute& sub, double now,
  bool preempt)
{
  auto list = reservations(v, sub, true);
  std::erase_if(list, [&](const Reservation& r)
    { return r.interval.end <= now; });
  // The past cannot conflict any more.
  for (auto& r : list)
    r.interval.start = std::max(r.interval.start, now);
  if (const auto* skip = skip_for(v))
  {
    // The block already covers where this vehicle physically is.
    std::erase_if(list, [&](const Reservation& r)
      {
        return r.resource == skip->resource &&
          r.interval.overlaps(skip->interval) && r.interval.start <= now;
      });
  }
  while (true)
  {
    try
    {
      _table.reserve_all(list);
      return;
    }
    catch (const ConflictError& e)
    {
      // Uncommitted stretches give way.
      const SubRouteKey key{e.blocking.vehicle, e.blocking.subroute};
      if (!preempt || !movable(e.blocking, now))
        throw;
      _table.release_subroute(key.vehicle, key.subroute);
      _forced.push_back(key);
      emit(now, "preempt", key.vehicle, std::nullopt, "sub-route " +
        std::to_string(key.subroute) + " yields to vehicle " + to_string(v));
    }
  }
}

bool Dispatcher::intact(VehicleId v, const SubRoute& sub) const
{
  if (!_table.of(v, sub.id).empty())
    return true;
  return reservations(v, sub, true).empty();
}

void Dispatcher::reserve_parking(VehicleId v, SubRouteId sub,
  std::size_t depot, double from)
{
  const auto windows = _table.free_windows(Resource::node(depot), from, v);
  if (windows.empty() || std::isfinite(windows.back().end))
    return;
  _table.reserve(Resource::node(depot), {windows.back().start, Infinity}, v,
    sub);
}

//==============================================================================
Dispatcher::Tail Dispatcher::open_tail(VehicleSchedule& s, double now,
  bool keep_depot_leg, bool& dropped_depot_leg)
{
  dropped_depot_leg = false;
  const VehicleId v = s.vehicle;
  if (s.subroutes.empty())
  {
    _table.release_subroute(v, ParkingSubRoute);
    return {s.depot, now, s.heading};
  }

  auto& last = s.subroutes.back();
  const std::size_t li = s.subroutes.size() - 1;
  if (last.kind != SubRouteKind::ToDepot)
    return {last.path.dest, std::max(now, last.path.completion),
      end_heading(last)};

  const bool started = s.current > li ||
    (s.current == li && now >= last.path.start);
  if (!started && !keep_depot_leg && li > 0)
  {
    _table.release_subroute(v, last.id);
    s.subroutes.pop_back();
    dropped_depot_leg = true;
    const auto& prev = s.subroutes.back();
    return {prev.path.dest, std::max(now, prev.path.completion),
      end_heading(prev)};
  }

  // Keep the leg home but give up the parking hold.
  auto kept = _table.of(v, last.id);
  std::erase_if(kept, [&](const Reservation& r) {
    return r.resource == Resource::node(last.path.dest) &&
      std::isinf(r.interval.end);
  });
  _table.release_subroute(v, last.id);
  _table.release_subroute(v, ParkingSubRoute);
  if (s.current <= li)
    _table.reserve_all(kept);
  return {last.path.dest, std::max(now, last.path.completion),
    end_heading(last)};
}

const VehicleSchedule& Dispatcher::compose_schedule(VehicleId vehicle,
  const std::vector<std::size_t>& tasks, double now)
{
  auto& s = schedule_mut(vehicle);
  if (!s.in_service)
    throw std::invalid_argument("vehicle " + to_string(vehicle) +
      " is out of service");
  for (const auto t : tasks)
    if (t >= _tasks.size())
      throw std::out_of_range("unknown task index");

  std::string failure;
  SubRouteKind failed_kind = SubRouteKind::ToLoad;
  std::optional<std::size_t> failed_task;

  for (const bool keep_depot_leg : {false, true})
  {
    const auto saved_table = _table;
    const auto saved_schedule = s;
    const auto saved_next = _next_subroute;
    bool dropped = false;
    try
    {
      _table.set_log_time(now);
      Tail tail = open_tail(s, now, keep_depot_leg, dropped);
      std::vector<SubRoute> added;
      auto add = [&](SubRouteKind kind, std::optional<std::size_t> task,
        std::size_t dest)
      {
        failed_kind = kind;
        failed_task = task;
        SubRoute sub;
        sub.id = _next_subroute++;
        sub.kind = kind;
        sub.task = task;
        sub.heading = tail.heading;
        sub.path.dest = dest;
        const auto request = request_for(s, sub, tail.node, tail.time,
          tail.heading);
        sub.path = plan_subroute(request, vehicle);
        commit_subroute(vehicle, sub, now);
        tail = {dest, sub.path.completion, end_heading(sub)};
        s.subroutes.push_back(std::move(sub));
      };
      for (const auto t : tasks)
      {
        add(SubRouteKind::ToLoad, t, _tasks[t].load_node);
        add(SubRouteKind::ToUnload, t, _tasks[t].unload_node);
      }
      add(SubRouteKind::ToDepot, std::nullopt, s.depot);

      for (const auto t : tasks)
      {
        auto& task = _tasks[t];
        const bool reassigned = task.status == 2;
        task.phase = TaskPhase::Assigned;
        task.assigned_vehicle = vehicle;
        emit(now, reassigned ? "task_reassigned" : "task_assigned", vehicle,
          t, "vehicle " + to_string(vehicle));
      }
      emit(now, "schedule_composed", vehicle, std::nullopt,
        std::to_string(tasks.size() * 2 + 1) + " sub-routes, done at " +
        fmt(s.subroutes.back().path.completion));
      return s;
    }
    catch (const PlanningError& e)
    {
      failure = e.what();
    }
    catch (const ConflictError& e)
    {
      failure = e.what();
    }
    _table = saved_table;
    s = saved_schedule;
    _next_subroute = saved_next;
    if (!dropped)
      break;
  }

  std::string what = "vehicle " + to_string(vehicle) + ": cannot plan " +
    std::string(to_string(failed_kind));
  if (failed_task)
    what += " for task " + _tasks[*failed_task].id;
  throw CompositionError(what + ": " + failure, failed_kind, failed_task);
}

//==============================================================================
std::size_t Dispatcher::step(double now)
{
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < _tasks.size(); ++i)
  {
    const auto& t = _tasks[i];
    if (t.phase == TaskPhase::Pending && t.request_time <= now &&
      _retry_at[i] <= now)
    {
      pending.push_back(i);
    }
  }
  if (pending.empty())
    return 0;

  std::vector<VehicleId> vehicles;
  for (const auto& s : _schedules)
    if (s.in_service)
      vehicles.push_back(s.vehicle);
  if (vehicles.empty())
  {
    for (const auto t : pending)
    {
      _tasks[t].phase = TaskPhase::Parked;
      emit(now, "tasks_parked", std::nullopt, t, "no vehicle in service");
    }
    emit(now, "operator_alert", std::nullopt, std::nullopt,
      std::to_string(pending.size()) + " task(s) parked: no vehicle in service");
    return 0;
  }

  FleetSizing sizing;
  try
  {
    sizing = size_fleet(pending, vehicles, _config.deadline, now);
  }
  catch (const FleetSizingError& e)
  {
    if (!std::isfinite(e.best_makespan))
    {
      for (const auto t : pending)
        _retry_at[t] = now + 5.0;
      emit(now, "dispatch_failed", std::nullopt, std::nullopt, e.what());
      return 0;
    }
    emit(now, "deadline_missed", std::nullopt, std::nullopt, e.what());
    sizing = size_fleet(pending, vehicles, std::nullopt, now);
  }
  emit(now, "fleet_sized", std::nullopt, std::nullopt,
    "k=" + std::to_string(sizing.count) + " makespan=" +
    fmt(sizing.makespan));

  std::map<VehicleId, std::vector<std::size_t>> by_vehicle;
  for (std::size_t i = 0; i < pending.size(); ++i)
    by_vehicle[sizing.assignment[i]].push_back(pending[i]);

  std::size_t assigned = 0;
  for (const auto& [v, list] : by_vehicle)
  {
    try
    {
      compose_schedule(v, list, now);
      assigned += list.size();
    }
    catch (const CompositionError& e)
    {
      for (const auto t : list)
        _retry_at[t] = now + 5.0;
      emit(now, "dispatch_failed", v, e.task, e.what());
    }
  }
  return assigned;
}

//==============================================================================
Action Dispatcher::monitor(const StatusReport& report)
{
  auto& s = schedule_mut(report.vehicle);
  Action action;
  action.vehicle = report.vehicle;
  SubRoute* sub = s.current < s.subroutes.size() ?
    &s.subroutes[s.current] : nullptr;

  switch (report.code)
  {
    case 0:
      if (sub)
      {
        emit(report.time, "subroute_completed", report.vehicle, sub->task,
          std::string(to_string(sub->kind)));
        if (sub->kind == SubRouteKind::ToUnload && sub->task)
        {
          auto& task = _tasks[*sub->task];
          task.phase = TaskPhase::Finished;
          task.status = 0;
          emit(report.time, "task_finished", report.vehicle, sub->task, "");
        }
        ++s.current;
      }
      break;
    case 1:
      action.kind = Action::Kind::Reroute;
      action.resource = report.conflict.value_or(report.position.resource);
      if (sub && sub->task)
        _tasks[*sub->task].status = 1;
      emit(report.time, "status_1", report.vehicle, sub ? sub->task :
        std::nullopt, _map->resource_name(*action.resource) +
        (report.detail.empty() ? "" : ": " + report.detail));
      break;
    case 2:
      action.kind = Action::Kind::Escalate;
      action.resource = report.position.resource;
      emit(report.time, "status_2", report.vehicle, sub ? sub->task :
        std::nullopt, report.detail);
      break;
    default:
      throw std::invalid_argument("unknown status code " +
        std::to_string(report.code));
  }
  return action;
}

Action Dispatcher::handle(const StatusReport& report, double now)
{
  const auto action = monitor(report);
  if (action.kind == Action::Kind::Reroute)
  {
    reroute(report, now);
  }
  else if (action.kind == Action::Kind::Escalate &&
    schedule(report.vehicle).in_service)
  {
    RepairQueue queue;
    _table.set_log_time(now);
    escalate_internal(report.vehicle, now,
      report.detail.empty() ? "vehicle reported failure" : report.detail,
      report.position, queue);
    run_cascade(std::move(queue), now);
    finish_mutation(now);
  }
  return action;
}

//==============================================================================
Position Dispatcher::planned_position(VehicleId vehicle, double now) const
{
  const auto& s = schedule(vehicle);
  if (s.current >= s.subroutes.size())
  {
    const std::size_t node = s.subroutes.empty() ? s.depot :
      s.subroutes.back().path.dest;
    return {Resource::node(node), 0.0};
  }
  const auto& path = s.subroutes[s.current].path;
  if (path.elements.empty() || now < path.start)
    return {Resource::node(path.origin), 0.0};
  for (const auto& e : path.elements)
  {
    const bool point = e.exit == e.entry && now == e.entry;
    if (e.entry <= now && (now < e.exit || point))
    {
      double offset = 0.0;
      if (e.resource.is_arc())
      {
        const double len = _map->arc(e.resource.index).length;
        const double f = std::clamp((now - e.entry) / (e.exit - e.entry),
          0.0, 1.0);
        offset = e.reversed ? len * (1 - f) : len * f;
      }
      return {e.resource, offset};
    }
  }
  return {Resource::node(path.dest), 0.0};
}

Dispatcher::Anchor Dispatcher::execution_anchor(const VehicleSchedule& s,
  const SubRoute& sub, double now) const
{
  const auto& path = sub.path;
  const auto& el = path.elements;
  Anchor a;
  a.path_start = path.start;
  if (el.empty() || now <= path.start)
  {
    a.node = path.origin;
    a.time = path.start;
    a.heading = sub.heading;
    return a;
  }
  if (now >= path.completion)
  {
    a.node = path.dest;
    a.time = path.completion;
    a.heading = end_heading(sub);
    a.prefix = el;
    a.complete = true;
    return a;
  }

  std::size_t k = 0;
  while (k < el.size() && !(el[k].entry <= now && now < el[k].exit))
    ++k;
  if (k == el.size())
  {
    k = 0;
    while (k + 1 < el.size() && el[k].entry < now)
      ++k;
  }

  const auto& e = el[k];
  if (e.resource.is_arc())
  {
    a.prefix.assign(el.begin(), el.begin() + static_cast<long>(k) + 1);
    a.node = _map->head({e.resource.index, e.reversed});
    a.time = e.exit;
  }
  else
  {
    a.prefix.assign(el.begin(), el.begin() + static_cast<long>(k));
    if (now > e.entry)
    {
      PathElement cut = e;
      cut.exit = now;
      if (cut.action != PathAction::Wait && cut.action != PathAction::Traverse)
        cut.action = PathAction::Dwell;
      cut.angle = 0.0;
      a.prefix.push_back(cut);
    }
    a.node = e.resource.index;
    a.time = std::max(now, e.entry);
  }
  a.heading = last_arc_heading(*_map, a.prefix);
  if (!a.heading)
    a.heading = sub.heading;
  (void)s;
  return a;
}

bool Dispatcher::replan_with_anchor(VehicleSchedule& s, std::size_t index,
  const Anchor& given, double now)
{
  auto& sub = s.subroutes[index];
  const VehicleId v = s.vehicle;
  Anchor anchor = given;

  const auto* skip = skip_for(v);
  if (skip && skip->resource == Resource::node(anchor.node) &&
    skip->interval.start <= anchor.time + Eps &&
    anchor.time < skip->interval.end)
  {
    // Held on a blocked node until the block lifts.
    if (!std::isfinite(skip->interval.end))
      return false;
    PathElement hold;
    hold.resource = Resource::node(anchor.node);
    hold.entry = anchor.time;
    hold.exit = skip->interval.end;
    hold.action = PathAction::Dwell;
    if (anchor.prefix.empty())
      anchor.path_start = anchor.time;
    anchor.prefix.push_back(hold);
    anchor.time = skip->interval.end;
    anchor.complete = false;
  }

  _table.release_subroute(v, sub.id);
  auto attempt = [&](const Anchor& anchor) {
    try
    {
      TimedPath merged;
      merged.origin = anchor.prefix.empty() ? anchor.node :
        anchor.prefix.front().resource.index;
      merged.dest = sub.path.dest;
      merged.start = anchor.prefix.empty() ? anchor.time : anchor.path_start;
      merged.elements = anchor.prefix;
      if (!anchor.complete)
      {
        const auto request = request_for(s, sub, anchor.node, anchor.time,
          anchor.heading);
        const auto rest = plan_with_priority(request, v, now);
        if (rest.elements.empty())
        {
          if (!merged.elements.empty() &&
            merged.elements.back().resource.is_arc())
          {
            PathElement arrive;
            arrive.resource = Resource::node(anchor.node);
            arrive.entry = arrive.exit = anchor.time;
            merged.elements.push_back(arrive);
          }
        }
        else
        {
          merged.elements.insert(merged.elements.end(), rest.elements.begin(),
            rest.elements.end());
        }
      }
      finalize(merged);
      if (merged.elements.empty())
        merged.completion = std::max(merged.start, anchor.time);
      SubRoute candidate = sub;
      candidate.path = std::move(merged);
      if (anchor.prefix.empty())
      {
        candidate.heading = anchor.heading;
        candidate.resume.reset();
      }
      else if (!anchor.complete)
      {
        candidate.resume = anchor.time;
      }
      commit_subroute(v, candidate, now, true);
      sub = std::move(candidate);
      return true;
    }
    catch (const PlanningError& e)
    {
      _last_failure = e.what();
    }
    catch (const ConflictError& e)
    {
      _last_failure = e.what();
    }
    return false;
  };

  if (attempt(anchor))
    return true;

  // A vehicle on an arc can slow down and reach the node ahead later.
  if (anchor.complete || anchor.prefix.empty() ||
    !anchor.prefix.back().resource.is_arc() ||
    anchor.prefix.back().entry > now)
  {
    return false;
  }
  const double m = _config.router.margin;
  const auto& arc = anchor.prefix.back();
  const auto arc_windows = _table.free_windows(arc.resource,
    std::max(arc.entry - m, anchor.path_start), v);
  const auto node_windows = _table.free_windows(Resource::node(anchor.node),
    anchor.time, v);
  std::size_t tries = 0;
  for (const auto& w : node_windows)
  {
    const double t = w.start + m;
    if (t <= anchor.time + Eps || !(t + m < w.end))
      continue;
    const bool arc_free = std::any_of(arc_windows.begin(), arc_windows.end(),
      [&](const Interval& a) {
        return a.start <= std::max(arc.entry - m, anchor.path_start) + Eps &&
          t + m <= a.end + Eps;
      });
    if (!arc_free || ++tries > 6)
      break;
    Anchor later = anchor;
    later.prefix.back().exit = t;
    later.time = t;
    if (attempt(later))
      return true;
  }
  return false;
}

bool Dispatcher::readjust_downstream(VehicleSchedule& s, std::size_t index,
  double now)
{
  const VehicleId v = s.vehicle;
  for (std::size_t j = index + 1; j < s.subroutes.size(); ++j)
  {
    const auto& prev = s.subroutes[j - 1];
    auto& sub = s.subroutes[j];
    const double start = prev.path.completion;
    const auto heading = end_heading(prev);
    const bool chained = sub.path.origin == prev.path.dest &&
      same_heading(sub.heading, heading);
    const double delta = start - sub.path.start;
    const bool present = intact(v, sub);

    if (chained && present)
    {
      if (delta == 0.0)
        return true;
      if (!_table.shift_subroute(v, sub.id, delta))
      {
        for (auto& e : sub.path.elements)
        {
          e.entry += delta;
          e.exit += delta;
        }
        sub.path.start += delta;
        sub.path.completion += delta;
        if (sub.resume)
          *sub.resume += delta;
        emit(now, "readjust", v, sub.task, std::string(to_string(sub.kind)) +
          " shifted by " + fmt(delta));
        continue;
      }
    }

    _table.release_subroute(v, sub.id);
    try
    {
      const auto request = request_for(s, sub, prev.path.dest, start, heading);
      sub.path = plan_with_priority(request, v, now);
      sub.heading = heading;
      sub.resume.reset();
      commit_subroute(v, sub, now, true);
    }
    catch (const PlanningError& e)
    {
      _last_failure = e.what();
      return false;
    }
    catch (const ConflictError& e)
    {
      _last_failure = e.what();
      return false;
    }
    emit(now, "readjust", v, sub.task, std::string(to_string(sub.kind)) +
      " re-planned from " + fmt(start));
  }
  return true;
}

//==============================================================================
bool Dispatcher::repair(SubRouteKey key, double now, RepairQueue& queue)
{
  auto& s = schedule_mut(key.vehicle);
  if (!s.in_service)
    return true;
  if (key.subroute == ParkingSubRoute)
  {
    if (s.subroutes.empty())
      reserve_parking(s.vehicle, ParkingSubRoute, s.depot, now);
    return true;
  }

  const auto it = std::find_if(s.subroutes.begin(), s.subroutes.end(),
    [&](const SubRoute& x) { return x.id == key.subroute; });
  if (it == s.subroutes.end())
    return true;
  const std::size_t i = static_cast<std::size_t>(it - s.subroutes.begin());
  if (intact(s.vehicle, *it))
    return true;

  if (i < s.current)
  {
    if (it->kind == SubRouteKind::ToDepot && i + 1 == s.subroutes.size())
      reserve_parking(s.vehicle, it->id, s.depot, now);
    return true;
  }

  if (i == s.current && skip_for(s.vehicle))
  {
    // The vehicle on the blocked resource keeps its route if it can.
    try
    {
      commit_subroute(s.vehicle, *it, now);
      return true;
    }
    catch (const ConflictError&)
    {
    }
  }

  Anchor anchor;
  if (i == s.current)
  {
    anchor = execution_anchor(s, *it, now);
  }
  else
  {
    const auto& prev = s.subroutes[i - 1];
    anchor.node = prev.path.dest;
    anchor.time = prev.path.completion;
    anchor.heading = end_heading(prev);
    anchor.path_start = anchor.time;
  }
  if (!replan_with_anchor(s, i, anchor, now))
    return false;
  ++_reroutes;
  emit(now, "reroute", s.vehicle, s.subroutes[i].task,
    std::string(to_string(s.subroutes[i].kind)) + " repaired after eviction");
  (void)queue;
  return readjust_downstream(s, i, now);
}

void Dispatcher::run_cascade(RepairQueue queue, double now)
{
  std::size_t rounds = 0;
  while (!queue.empty())
  {
    std::sort(queue.begin(), queue.end());
    queue.erase(std::unique(queue.begin(), queue.end()), queue.end());
    RepairQueue next;
    const bool over = rounds >= _config.cascade_cap;
    for (const auto& key : queue)
    {
      if (over)
      {
        if (schedule(key.vehicle).in_service)
          escalate_internal(key.vehicle, now, "cascade did not settle",
            std::nullopt, next);
        continue;
      }
      if (!repair(key, now, next))
        escalate_internal(key.vehicle, now, "no path after eviction (" +
          _last_failure + ")", std::nullopt, next);
      next.insert(next.end(), _forced.begin(), _forced.end());
      _forced.clear();
    }
    queue = std::move(next);
    ++rounds;
  }
  _max_rounds = std::max(_max_rounds, std::min(rounds, _config.cascade_cap));
}

void Dispatcher::evict_around(VehicleId v, Resource resource,
  Interval interval, RepairQueue& queue)
{
  std::set<SubRouteKey> victims;
  for (const auto& r : _table.on(resource))
    if (r.vehicle != v && r.vehicle != SystemVehicle &&
      r.interval.overlaps(interval))
    {
      victims.insert({r.vehicle, r.subroute});
    }
  for (const auto& key : victims)
  {
    _table.release_subroute(key.vehicle, key.subroute);
    queue.push_back(key);
  }
}

const Dispatcher::Skip* Dispatcher::skip_for(VehicleId v) const
{
  for (const auto& s : _skip)
    if (s.vehicle == v)
      return &s;
  return nullptr;
}

std::vector<VehicleId> Dispatcher::occupants(Resource resource,
  double now) const
{
  std::set<VehicleId> out;
  for (const auto& s : _schedules)
  {
    if (!s.in_service)
      continue;
    const auto p = _position_source ? _position_source(s.vehicle) :
      std::optional<Position>(planned_position(s.vehicle, now));
    if (p && p->resource == resource)
      out.insert(s.vehicle);
  }
  return {out.begin(), out.end()};
}

void Dispatcher::finish_mutation(double now)
{
  _skip.clear();
  _post_reroute_overlaps += _table.scan_overlaps().size();
  step(now);
}

//==============================================================================
bool Dispatcher::reroute(const StatusReport& report, double now)
{
  auto& s = schedule_mut(report.vehicle);
  if (!s.in_service)
    return false;
  const VehicleId v = s.vehicle;
  const double m = _config.router.margin;
  const Resource r = report.conflict.value_or(report.position.resource);

  Interval blocked{now, now + _config.default_block};
  if (report.expected_clear)
    blocked.end = std::max(*report.expected_clear + m, now + Eps);

  _table.set_log_time(now);
  ++_reroutes;
  const auto task = s.current < s.subroutes.size() ?
    s.subroutes[s.current].task : std::nullopt;
  emit(now, "reroute", v, task, _map->resource_name(r) + " blocked [" +
    fmt(blocked.start) + ", " + fmt(blocked.end) + ")");

  RepairQueue queue;
  bool ok = true;
  if (s.current >= s.subroutes.size())
  {
    const auto evicted = _table.block_resource(r, blocked);
    queue.assign(evicted.begin(), evicted.end());
    if (s.subroutes.empty() || s.subroutes.back().kind == SubRouteKind::ToDepot)
      queue.push_back({v, s.subroutes.empty() ? ParkingSubRoute :
        s.subroutes.back().id});
  }
  else
  {
    const std::size_t c = s.current;
    auto& sub = s.subroutes[c];
    _table.release_subroute(v, sub.id);
    for (const auto w : occupants(r, now))
      _skip.push_back({w, r, blocked});
    if (!skip_for(v))
      _skip.push_back({v, r, blocked});
    const auto evicted = _table.block_resource(r, blocked);
    queue.assign(evicted.begin(), evicted.end());

    Anchor anchor = execution_anchor(s, sub, now);
    const bool here = r == report.position.resource;
    if (here && r.is_arc())
    {
      // Finish the stalled arc once it clears, then continue from its head.
      const auto& el = sub.path.elements;
      std::optional<std::size_t> k;
      for (std::size_t i = 0; i < el.size(); ++i)
        if (el[i].resource == r && el[i].entry <= now + Eps)
          k = i;
      if (k)
      {
        const double clear = report.expected_clear.value_or(blocked.end - m);
        anchor = Anchor{};
        anchor.path_start = sub.path.start;
        anchor.prefix.assign(el.begin(), el.begin() + static_cast<long>(*k) + 1);
        anchor.prefix.back().exit = std::max(clear, anchor.prefix.back().entry);
        anchor.node = _map->head({r.index, el[*k].reversed});
        anchor.time = anchor.prefix.back().exit;
        anchor.heading = heading_of(_map->direction({r.index, el[*k].reversed}));
        evict_around(v, Resource::node(anchor.node),
          {anchor.time - m, anchor.time + std::max(m, Eps)}, queue);
      }
    }
    else if (here && r.is_node())
    {
      // Stalled on the node: keep everything up to now, hold until clear.
      const auto& el = sub.path.elements;
      std::optional<std::size_t> k;
      for (std::size_t i = 0; i < el.size(); ++i)
        if (el[i].resource == r && el[i].entry <= now + Eps)
          k = i;
      if (k)
      {
        anchor = Anchor{};
        anchor.path_start = sub.path.start;
        anchor.prefix.assign(el.begin(), el.begin() + static_cast<long>(*k));
        if (now > el[*k].entry)
        {
          PathElement cut = el[*k];
          cut.exit = now;
          cut.action = PathAction::Dwell;
          cut.angle = 0.0;
          anchor.prefix.push_back(cut);
        }
        anchor.node = r.index;
        anchor.time = std::max(now, el[*k].entry);
        anchor.heading = last_arc_heading(*_map, anchor.prefix);
        if (!anchor.heading)
          anchor.heading = sub.heading;
      }
    }

    ok = replan_with_anchor(s, c, anchor, now) &&
      readjust_downstream(s, c, now);
    queue.insert(queue.end(), _forced.begin(), _forced.end());
    _forced.clear();
    if (!ok)
      escalate_internal(v, now, "no path around " + _map->resource_name(r) +
        " (" + _last_failure + ")", report.position, queue);
  }
  run_cascade(std::move(queue), now);
  finish_mutation(now);
  return ok;
}

void Dispatcher::block(Resource resource, Interval interval, double now)
{
  if (!interval.valid())
    throw std::invalid_argument("invalid block interval");
  _table.set_log_time(now);

  // Whoever is on the resource right now stays there under the block.
  for (const auto w : occupants(resource, now))
    _skip.push_back({w, resource, interval});

  const auto evicted = _table.block_resource(resource, interval);
  emit(now, "block", std::nullopt, std::nullopt, _map->resource_name(resource) +
    " [" + fmt(interval.start) + ", " + fmt(interval.end) + "), " +
    std::to_string(evicted.size()) + " sub-route(s) evicted");
  run_cascade(RepairQueue(evicted.begin(), evicted.end()), now);
  finish_mutation(now);
}

void Dispatcher::escalate(VehicleId vehicle, double now,
  const std::string& reason)
{
  if (!schedule(vehicle).in_service)
    return;
  _table.set_log_time(now);
  RepairQueue queue;
  escalate_internal(vehicle, now, reason, std::nullopt, queue);
  run_cascade(std::move(queue), now);
  finish_mutation(now);
}

void Dispatcher::escalate_internal(VehicleId v, double now,
  const std::string& reason, std::optional<Position> position,
  RepairQueue& queue)
{
  auto& s = schedule_mut(v);
  if (!s.in_service)
    return;
  if (!position && _position_source)
    position = _position_source(v);
  if (!position)
    position = planned_position(v, now);

  s.in_service = false;
  _table.release_vehicle(v);
  const auto evicted = _table.block_resource(position->resource,
    {now, Infinity});
  queue.insert(queue.end(), evicted.begin(), evicted.end());

  std::vector<std::size_t> orphans;
  for (std::size_t i = s.current; i < s.subroutes.size(); ++i)
  {
    const auto t = s.subroutes[i].task;
    if (t && _tasks[*t].phase == TaskPhase::Assigned &&
      std::find(orphans.begin(), orphans.end(), *t) == orphans.end())
    {
      orphans.push_back(*t);
    }
  }
  s.subroutes.resize(std::min(s.current, s.subroutes.size()));
  s.current = s.subroutes.size();

  for (const auto t : orphans)
  {
    auto& task = _tasks[t];
    task.phase = TaskPhase::Pending;
    task.status = 2;
    task.assigned_vehicle.reset();
    _retry_at[t] = 0.0;
  }
  emit(now, "escalation", v, std::nullopt, reason + " at " +
    _map->resource_name(position->resource));
  emit(now, "operator_notification", v, std::nullopt, "vehicle " +
    to_string(v) + " out of service: " + reason + "; " +
    std::to_string(orphans.size()) + " task(s) to reassign");
}

//==============================================================================
std::vector<std::string> Dispatcher::check_invariants() const
{
  std::vector<std::string> problems;
  for (const auto& s : _schedules)
  {
    const std::string who = "vehicle " + to_string(s.vehicle) + ": ";
    for (std::size_t i = 0; i < s.subroutes.size(); ++i)
    {
      const auto& sub = s.subroutes[i];
      const auto msg = check_path(*_map, sub.path, _config.router);
      if (!msg.empty())
        problems.push_back(who + "sub-route " + std::to_string(sub.id) + ": " +
          msg);
      if (i > 0)
      {
        const auto& prev = s.subroutes[i - 1];
        if (prev.path.dest != sub.path.origin)
          problems.push_back(who + "sub-route " + std::to_string(sub.id) +
            " does not start where the previous one ends");
        if (sub.path.start + Eps < prev.path.completion)
          problems.push_back(who + "sub-route " + std::to_string(sub.id) +
            " starts before the previous one completes");
      }
      if (s.in_service && i >= s.current && !intact(s.vehicle, sub))
        problems.push_back(who + "sub-route " + std::to_string(sub.id) +
          " has no reservations");
    }
  }
  for (std::size_t t = 0; t < _tasks.size(); ++t)
  {
    std::size_t owners = 0;
    for (const auto& s : _schedules)
    {
      bool has = false;
      for (std::size_t i = s.current; i < s.subroutes.size(); ++i)
        has = has || s.subroutes[i].task == t;
      owners += has;
    }
    if (owners > 1)
      problems.push_back("task " + _tasks[t].id + " held by " +
        std::to_string(owners) + " vehicles");
  }
  for (const auto& o : _table.scan_overlaps())
    problems.push_back("overlap on " + _map->resource_name(o.resource) +
      " between vehicles " + to_string(o.first) + " and " +
      to_string(o.second));
  return problems;
}

} // namespace forkroute
