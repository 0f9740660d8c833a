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

#include <forkroute/simulator.hpp>

#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

namespace forkroute {

namespace {

constexpr double Eps = 1e-9;

double heading_of(Point d)
{
  return std::atan2(d.y, d.x) * 180.0 / std::numbers::pi;
}

bool timed(PathAction a)
{
  return a == PathAction::Turn || a == PathAction::Load ||
    a == PathAction::Unload;
}

} // namespace

//==============================================================================
std::string_view to_string(LegOutcome outcome)
{
  switch (outcome)
  {
    case LegOutcome::OnTime: return "on_time";
    case LegOutcome::Recovered: return "recovered";
    case LegOutcome::Exceeded: return "exceeded";
  }
  return "?";
}

LegResult local_leg_control(double planned, double safety, double disturbance,
  double cap)
{
  if (!(planned > 0.0) || safety < planned || !(cap >= 1.0) ||
    disturbance < 0.0)
  {
    throw std::invalid_argument("local_leg_control: bad leg parameters");
  }
  if (disturbance == 0.0)
    return {LegOutcome::OnTime, planned};
  const double actual = std::max(planned, disturbance + planned / cap);
  return {actual <= safety + Eps ? LegOutcome::Recovered : LegOutcome::Exceeded,
    actual};
}

std::string format_summary(const SimulationSummary& s)
{
  char buf[256];
  std::snprintf(buf, sizeof(buf),
    "makespan=%.3f reroutes=%zu violations=%zu tasks=%zu finished=%zu "
    "code1=%zu code2=%zu escalations=%zu cascade_rounds=%zu overlaps=%zu "
    "completed=%d",
    s.makespan, s.reroutes, s.violations, s.tasks, s.finished, s.code1,
    s.code2, s.escalations, s.max_cascade_rounds, s.post_reroute_overlaps,
    s.completed ? 1 : 0);
  return buf;
}

//==============================================================================
Scenario parse_scenario(const std::string& text, const std::string& base_dir,
  std::uint64_t seed)
{
  using nlohmann::json;
  json doc;
  try
  {
    doc = json::parse(text);
  }
  catch (const json::parse_error& e)
  {
    throw ScenarioError(std::string("scenario syntax: ") + e.what());
  }
  if (!doc.is_object())
    throw ScenarioError("scenario must be an object");

  static const std::set<std::string> known = {"map", "vehicles", "tasks",
    "random_tasks", "faults", "tick", "duration", "margin", "cascade_cap",
    "deadline", "default_block", "overspeed_cap", "name", "description"};
  for (const auto& [key, value] : doc.items())
    if (!known.count(key))
      throw ScenarioError("unknown scenario key '" + key + "'");

  Scenario s;
  try
  {
    if (!doc.contains("map"))
      throw ScenarioError("scenario has no map");
    const auto& m = doc["map"];
    if (m.is_string())
    {
      std::filesystem::path p = m.get<std::string>();
      if (p.is_relative())
        p = std::filesystem::path(base_dir) / p;
      s.map = std::make_shared<const TopologicalMap>(load_map(p.string()));
    }
    else
    {
      s.map = std::make_shared<const TopologicalMap>(parse_map(m.dump()));
    }
    const auto& map = *s.map;

    auto node = [&](const json& j, const char* what) {
      const auto id = j.get<std::string>();
      const auto n = map.find_node(id);
      if (!n)
        throw ScenarioError(std::string(what) + " '" + id + "' is not a node");
      return *n;
    };

    s.tick = doc.value("tick", s.tick);
    s.duration = doc.value("duration", s.duration);
    s.overspeed_cap = doc.value("overspeed_cap", s.overspeed_cap);
    s.dispatcher.router.margin = doc.value("margin",
      s.dispatcher.router.margin);
    s.dispatcher.cascade_cap = doc.value("cascade_cap",
      s.dispatcher.cascade_cap);
    s.dispatcher.default_block = doc.value("default_block",
      s.dispatcher.default_block);
    if (doc.contains("deadline") && !doc["deadline"].is_null())
      s.dispatcher.deadline = doc["deadline"].get<double>();
    if (!(s.tick > 0.0) || !(s.duration >= 0.0) || !(s.overspeed_cap >= 1.0) ||
      !(s.dispatcher.router.margin >= 0.0))
    {
      throw ScenarioError("tick must be positive, duration and margin "
        "non-negative, overspeed_cap at least 1");
    }

    if (doc.contains("vehicles"))
    {
      for (const auto& v : doc["vehicles"])
      {
        VehicleSpec spec;
        spec.id = VehicleId{v.at("id").get<std::uint32_t>()};
        spec.depot = node(v.at("depot"), "depot");
        spec.kinematics.max_speed = v.value("max_speed", 1.0);
        spec.kinematics.max_turn_rate = v.value("max_turn_rate", 5.0);
        spec.kinematics.load_time = v.value("load_time", 10.0);
        spec.kinematics.unload_time = v.value("unload_time", 10.0);
        if (v.contains("heading") && !v["heading"].is_null())
          spec.heading = v["heading"].get<double>();
        s.vehicles.push_back(spec);
      }
    }
    else
    {
      std::uint32_t id = 1;
      for (std::size_t i = 0; i < map.nodes().size(); ++i)
        if (map.node(i).kind == NodeKind::Depot)
          s.vehicles.push_back({VehicleId{id++}, i, {}, {}});
    }

    // A depot on a spur faces out along it.
    for (auto& v : s.vehicles)
      if (!v.heading && map.outgoing(v.depot).size() == 1)
        v.heading = heading_of(map.direction(map.outgoing(v.depot).front()));

    for (const auto& t : doc.value("tasks", json::array()))
    {
      s.orders.push_back({t.at("load").get<std::string>(),
        t.at("unload").get<std::string>(), t.value("quantity", 1),
        t.value("request_time", 0.0)});
    }

    if (doc.contains("random_tasks"))
    {
      const auto& r = doc["random_tasks"];
      int lo = 0, hi = 0;
      if (r.is_number_integer())
        lo = hi = r.get<int>();
      else
      {
        lo = r.at("min").get<int>();
        hi = r.at("max").get<int>();
      }
      if (lo < 0 || hi < lo)
        throw ScenarioError("random_tasks: bad count range");
      std::vector<std::string> loads, unloads;
      for (const auto& n : map.nodes())
      {
        if (n.kind == NodeKind::LoadingStation)
          loads.push_back(n.id);
        if (n.kind == NodeKind::UnloadingStation)
          unloads.push_back(n.id);
      }
      if (loads.empty() || unloads.empty())
        throw ScenarioError("random_tasks: map has no stations");
      std::mt19937_64 rng(seed);
      const int count = std::uniform_int_distribution<int>(lo, hi)(rng);
      std::uniform_int_distribution<std::size_t> li(0, loads.size() - 1);
      std::uniform_int_distribution<std::size_t> ui(0, unloads.size() - 1);
      for (int i = 0; i < count; ++i)
      {
        const auto& l = loads[li(rng)];
        const auto& u = unloads[ui(rng)];
        s.orders.push_back({l, u, 1, 0.0});
      }
    }

    for (const auto& f : doc.value("faults", json::array()))
    {
      Fault fault;
      const auto kind = f.at("kind").get<std::string>();
      fault.time = f.at("time").get<double>();
      if (kind == "delay")
      {
        fault.kind = Fault::Kind::Delay;
        fault.vehicle = VehicleId{f.at("vehicle").get<std::uint32_t>()};
        fault.seconds = f.at("seconds").get<double>();
        if (!(fault.seconds > 0.0))
          throw ScenarioError("delay fault needs positive seconds");
      }
      else if (kind == "disable")
      {
        fault.kind = Fault::Kind::Disable;
        fault.vehicle = VehicleId{f.at("vehicle").get<std::uint32_t>()};
      }
      else if (kind == "block_arc")
      {
        fault.kind = Fault::Kind::BlockArc;
        fault.arc = f.at("arc").get<std::string>();
        if (!map.find_arc(fault.arc))
          throw ScenarioError("block_arc: unknown arc '" + fault.arc + "'");
        fault.until = time_from_json(f.at("until"));
        if (!(fault.until > fault.time))
          throw ScenarioError("block_arc: until must follow time");
      }
      else
      {
        throw ScenarioError("unknown fault kind '" + kind + "'");
      }
      if (!(fault.time >= 0.0))
        throw ScenarioError("fault time must be non-negative");
      s.faults.push_back(fault);
    }
  }
  catch (const json::exception& e)
  {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }
  catch (const MapError& e)
  {
    throw ScenarioError(std::string("scenario map: ") + e.what());
  }
  catch (const std::runtime_error& e)
  {
    if (dynamic_cast<const ScenarioError*>(&e))
      throw;
    throw ScenarioError(std::string("scenario: ") + e.what());
  }

  for (const auto& f : s.faults)
  {
    if (f.kind == Fault::Kind::BlockArc)
      continue;
    const bool found = std::any_of(s.vehicles.begin(), s.vehicles.end(),
      [&](const VehicleSpec& v) { return v.id == f.vehicle; });
    if (!found)
      throw ScenarioError("fault names unknown vehicle " +
        std::to_string(f.vehicle.value));
  }
  return s;
}

Scenario load_scenario(const std::string& path, std::uint64_t seed)
{
  std::string text;
  try
  {
    text = read_file(path);
  }
  catch (const std::runtime_error& e)
  {
    throw ScenarioError(e.what());
  }
  return parse_scenario(text,
    std::filesystem::path(path).parent_path().string(), seed);
}

//==============================================================================
Simulator::Simulator(Scenario scenario)
: _scenario(std::move(scenario))
{
  if (!_scenario.map)
    throw ScenarioError("scenario has no map");
  try
  {
    _dispatcher = std::make_unique<Dispatcher>(_scenario.map,
      _scenario.vehicles, _scenario.dispatcher);
  }
  catch (const std::invalid_argument& e)
  {
    throw ScenarioError(std::string("fleet: ") + e.what());
  }
  _dispatcher->intake(_scenario.orders, 0.0);

  _faults = _scenario.faults;
  std::stable_sort(_faults.begin(), _faults.end(),
    [](const Fault& a, const Fault& b) { return a.time < b.time; });

  for (const auto& spec : _dispatcher->fleet())
  {
    Vehicle v;
    v.id = spec.id;
    v.spec = spec;
    v.resource = Resource::node(spec.depot);
    v.heading = spec.heading.value_or(0.0);
    _vehicles.push_back(v);
    record(v, TraceEvent::Enter, v.resource);
  }

  _dispatcher->set_position_source([this](VehicleId id) {
    return position(id);
  });
  _dispatcher->step(0.0);
  sync_all();
  for (auto& v : _vehicles)
    while (settle(v)) {}
}

std::optional<Position> Simulator::position(VehicleId id) const
{
  for (const auto& v : _vehicles)
  {
    if (v.id != id)
      continue;
    if (v.resource.is_arc())
    {
      const double len = map().arc(v.resource.index).length;
      return Position{v.resource, v.reversed ? len - v.offset : v.offset};
    }
    return Position{v.resource, 0.0};
  }
  return std::nullopt;
}

std::vector<VehicleState> Simulator::states() const
{
  std::vector<VehicleState> out;
  for (const auto& v : _vehicles)
  {
    VehicleState s;
    s.vehicle = v.id;
    s.resource = v.resource;
    s.offset = v.offset;
    s.reversed = v.reversed;
    s.heading = v.heading;
    s.speed = v.speed;
    s.subroute = _dispatcher->schedule(v.id).current;
    s.clock = _now;
    s.in_service = _dispatcher->schedule(v.id).in_service;
    out.push_back(s);
  }
  return out;
}

void Simulator::record(const Vehicle& v, TraceEvent event, Resource r)
{
  _trace.push_back({_now, v.id.value, event, map().resource_name(r)});
}

void Simulator::move_to(Vehicle& v, Resource r, bool reversed)
{
  if (v.resource != r)
  {
    record(v, TraceEvent::Exit, v.resource);
    v.resource = r;
    record(v, TraceEvent::Enter, v.resource);
  }
  if (r.is_arc())
  {
    v.offset = 0.0;
    v.reversed = reversed;
    v.heading = heading_of(map().direction({r.index, reversed}));
  }
}

double Simulator::arc_length(const Vehicle& v) const
{
  return map().arc(v.resource.index).length;
}

double Simulator::arc_speed(const Vehicle& v) const
{
  return v.spec.kinematics.max_speed * _scenario.overspeed_cap;
}

//==============================================================================
void Simulator::sync_all()
{
  for (auto& v : _vehicles)
    sync(v);
}

void Simulator::sync(Vehicle& v)
{
  const auto& s = _dispatcher->schedule(v.id);
  if (!s.in_service)
  {
    v.frozen = true;
    v.speed = 0.0;
    return;
  }
  if (s.current >= s.subroutes.size())
  {
    v.subroute = 0;
    v.elements.clear();
    v.element = 0;
    v.started = false;
    return;
  }
  const auto& sub = s.subroutes[s.current];
  if (sub.id == v.subroute && sub.path.elements == v.elements)
    return;
  attach(v, sub);
}

void Simulator::attach(Vehicle& v, const SubRoute& sub)
{
  const auto& el = sub.path.elements;
  const bool same = sub.id == v.subroute;
  v.subroute = sub.id;
  v.elements = el;
  v.element = 0;
  v.started = false;
  if (el.empty())
    return;

  const auto r = v.resource;
  std::optional<std::size_t> pick;
  bool started = true;
  if (r.is_arc())
  {
    for (std::size_t k = 0; k < el.size(); ++k)
      if (el[k].resource == r && el[k].entry <= _now + Eps)
        pick = k;
    if (!pick)
      for (std::size_t k = 0; k < el.size() && !pick; ++k)
        if (el[k].resource == r)
          pick = k;
  }
  else
  {
    for (std::size_t k = 0; k < el.size() && !pick; ++k)
      if (el[k].resource == r && el[k].entry <= _now + Eps &&
        el[k].exit > _now + Eps)
      {
        pick = k;
      }
    if (!pick && !same && el.front().resource == r &&
      el.front().entry > _now + Eps)
    {
      pick = 0;
      started = false;
    }
    if (!pick)
      for (std::size_t k = 0; k < el.size(); ++k)
        if (el[k].resource == r && el[k].entry <= _now + Eps)
          pick = k;
    if (!pick)
      for (std::size_t k = 0; k < el.size() && !pick; ++k)
        if (el[k].resource == r)
        {
          pick = k;
          started = false;
        }
  }
  if (!pick)
  {
    throw std::logic_error("vehicle " + std::to_string(v.id.value) +
      " on " + map().resource_name(r) + " is not on its new plan");
  }

  v.element = *pick;
  v.started = started;
  const auto& e = el[v.element];
  if (started && !r.is_arc())
    v.done_at = e.action == PathAction::Traverse ? _now : e.exit;
}

//==============================================================================
double Simulator::next_event(const Vehicle& v) const
{
  if (v.frozen || v.elements.empty())
    return Infinity;
  const auto& e = v.elements[v.element];
  const double m = _scenario.dispatcher.router.margin;
  double t = Infinity;
  if (!v.started)
  {
    t = std::max(e.entry, v.hold_until);
  }
  else if (e.resource.is_arc())
  {
    const double from = std::max(_now, v.hold_until);
    t = std::max(e.exit, from + (arc_length(v) - v.offset) / arc_speed(v));
  }
  else
  {
    t = std::max(v.done_at, v.hold_until);
  }
  const double safety = (v.started ? e.exit : e.entry) + m;
  const int phase = v.started ? 1 : 0;
  if (!v.reported.count({v.subroute, 2 * v.element + phase}))
    t = std::min(t, safety);
  return t;
}

const PathElement* Simulator::next_arc(const Vehicle& v) const
{
  for (auto i = v.element + 1; i < v.elements.size(); ++i)
    if (v.elements[i].resource.is_arc())
      return &v.elements[i];
  return nullptr;
}

void Simulator::advance(Vehicle& v, double to)
{
  v.speed = 0.0;
  if (v.frozen || v.elements.empty() || !v.started)
    return;
  const auto& e = v.elements[v.element];
  if (e.resource.is_arc())
  {
    const double from = std::max(_now, v.hold_until);
    if (to <= from)
      return;
    const double len = arc_length(v);
    const double span = e.exit - e.entry;
    const double f = span > 0 ? std::clamp((to - e.entry) / span, 0.0, 1.0) :
      1.0;
    const double before = v.offset;
    v.offset = std::max(v.offset,
      std::min(len * f, v.offset + arc_speed(v) * (to - from)));
    v.offset = std::min(v.offset, len);
    v.speed = (v.offset - before) / (to - _now);
  }
  else if (e.action == PathAction::Turn && v.started)
  {
    // Heading is interpolated through the turn.
    const double span = e.exit - e.entry;
    if (const auto* next = next_arc(v); span > 0 && next)
    {
      const double target = heading_of(map().direction(
        {next->resource.index, next->reversed}));
      double delta = std::remainder(target - v.heading, 360.0);
      const double rate = v.spec.kinematics.max_turn_rate;
      const double step = rate * std::max(0.0,
        to - std::max(_now, v.hold_until));
      v.heading += std::clamp(delta, -step, step);
    }
  }
}

void Simulator::report(Vehicle& v, int code, std::optional<double> clear,
  const std::string& detail)
{
  StatusReport r;
  r.vehicle = v.id;
  r.position = *position(v.id);
  r.code = code;
  r.detail = detail;
  r.time = _now;
  r.expected_clear = clear;
  _reports.push_back(r);
  _dispatcher->table().set_log_time(_now);
  _dispatcher->handle(r, _now);
  sync_all();
}

bool Simulator::settle(Vehicle& v)
{
  if (v.frozen)
    return false;
  if (v.elements.empty())
  {
    const auto& s = _dispatcher->schedule(v.id);
    if (s.current < s.subroutes.size() &&
      s.subroutes[s.current].path.elements.empty() &&
      s.subroutes[s.current].path.completion <= _now + Eps)
    {
      report(v, 0, std::nullopt, "");
      return true;
    }
    return false;
  }

  const auto& e = v.elements[v.element];
  const double m = _scenario.dispatcher.router.margin;
  const bool held = v.hold_until > _now + Eps;

  if (!v.started)
  {
    if (!held && e.entry <= _now + Eps)
    {
      move_to(v, e.resource, e.reversed);
      v.started = true;
      if (timed(e.action))
        v.done_at = _now + (e.exit - e.entry);
      else if (e.action == PathAction::Traverse)
        v.done_at = _now;
      else
        v.done_at = e.exit;
      return true;
    }
  }
  else
  {
    bool finished = false;
    if (!held)
    {
      if (e.resource.is_arc())
        finished = v.offset >= arc_length(v) - 1e-7 && e.exit <= _now + Eps;
      else
        finished = v.done_at <= _now + Eps;
    }
    if (finished)
    {
      if (e.resource.is_arc())
        v.offset = arc_length(v);
      if (const auto* next = next_arc(v); e.action == PathAction::Turn && next)
        v.heading = heading_of(map().direction(
          {next->resource.index, next->reversed}));
      if (v.element + 1 < v.elements.size())
      {
        ++v.element;
        v.started = false;
        return true;
      }
      const auto& s = _dispatcher->schedule(v.id);
      const auto kind = s.subroutes[s.current].kind;
      report(v, 0, std::nullopt, "");
      if (kind == SubRouteKind::ToUnload)
        _last_finish = _now;
      return true;
    }
  }

  const double safety = (v.started ? e.exit : e.entry) + m;
  const int phase = v.started ? 1 : 0;
  if (safety <= _now + Eps &&
    v.reported.insert({v.subroute, 2 * v.element + phase}).second)
  {
    const double from = std::max(_now, v.hold_until);
    double clear = from;
    if (v.started && e.resource.is_arc())
      clear = from + (arc_length(v) - v.offset) / v.spec.kinematics.max_speed;
    else if (v.started && timed(e.action))
      clear = std::max(v.done_at, from);
    report(v, 1, clear, "safety time exceeded");
    return true;
  }
  return false;
}

//==============================================================================
void Simulator::apply(const Fault& f)
{
  _dispatcher->table().set_log_time(_now);
  switch (f.kind)
  {
    case Fault::Kind::Delay:
      for (auto& v : _vehicles)
      {
        if (v.id != f.vehicle || v.frozen)
          continue;
        if (v.started && !v.elements.empty() &&
          timed(v.elements[v.element].action) && v.done_at > _now)
        {
          v.done_at += f.seconds;
        }
        v.hold_until = std::max(v.hold_until, _now + f.seconds);
      }
      break;
    case Fault::Kind::Disable:
      for (auto& v : _vehicles)
      {
        if (v.id != f.vehicle || v.frozen)
          continue;
        v.disabled = true;
        v.frozen = true;
        report(v, 2, std::nullopt, "vehicle disabled");
      }
      break;
    case Fault::Kind::BlockArc:
      _dispatcher->block(Resource::arc(map().arc_index(f.arc)),
        {_now, f.until}, _now);
      sync_all();
      break;
  }
}

void Simulator::inject(const Fault& fault)
{
  Fault f = fault;
  f.time = _now;
  apply(f);
  for (auto& v : _vehicles)
    while (settle(v)) {}
}

std::vector<std::size_t> Simulator::submit(const std::vector<OrderRow>& rows)
{
  return _dispatcher->intake(rows, _now);
}

bool Simulator::tick()
{
  if (done())
    return false;
  const double end = std::min(_scenario.duration,
    (static_cast<double>(_ticks) + 1) * _scenario.tick);
  std::size_t guard = 0;
  while (true)
  {
    double t = end;
    for (const auto& v : _vehicles)
      t = std::min(t, next_event(v));
    if (_next_fault < _faults.size())
      t = std::min(t, std::max(_faults[_next_fault].time, _now));
    t = std::max(t, _now);

    for (auto& v : _vehicles)
      advance(v, t);
    _now = t;

    bool changed = false;
    while (_next_fault < _faults.size() &&
      _faults[_next_fault].time <= _now + Eps)
    {
      apply(_faults[_next_fault++]);
      changed = true;
    }
    for (bool again = true; again;)
    {
      again = false;
      for (auto& v : _vehicles)
        while (settle(v))
          again = changed = true;
    }
    if (t >= end)
      break;
    if (!changed && ++guard > 100000)
      throw std::logic_error("simulation stalled at " + std::to_string(_now));
  }
  ++_ticks;

  _dispatcher->step(_now);
  sync_all();
  for (auto& v : _vehicles)
    while (settle(v)) {}
  return !done();
}

bool Simulator::idle() const
{
  for (const auto& t : _dispatcher->tasks())
    if (t.phase == TaskPhase::Pending || t.phase == TaskPhase::Assigned)
      return false;
  for (const auto& s : _dispatcher->schedules())
    if (s.in_service && s.current < s.subroutes.size())
      return false;
  return _next_fault >= _faults.size();
}

bool Simulator::done() const
{
  return _now >= _scenario.duration - Eps ||
    (_scenario.stop_when_idle && idle());
}

SimulationSummary Simulator::run()
{
  while (tick()) {}
  return summary();
}

SimulationSummary Simulator::summary() const
{
  SimulationSummary s;
  s.makespan = _last_finish;
  s.reroutes = _dispatcher->reroute_count();
  s.violations = verify_trace(_trace, map()).size();
  s.tasks = _dispatcher->tasks().size();
  for (const auto& t : _dispatcher->tasks())
    if (t.phase == TaskPhase::Finished)
      ++s.finished;
  for (const auto& r : _reports)
  {
    if (r.code == 1)
      ++s.code1;
    if (r.code == 2)
      ++s.code2;
  }
  for (const auto& e : _dispatcher->events())
    if (e.kind == "escalation")
      ++s.escalations;
  s.max_cascade_rounds = _dispatcher->max_cascade_rounds();
  s.post_reroute_overlaps = _dispatcher->post_reroute_overlaps();
  s.completed = idle();
  return s;
}

} // namespace forkroute
