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

#include <forkroute/router.hpp>

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace forkroute {

//==============================================================================
std::string_view to_string(PathAction action)
{
  switch (action)
  {
    case PathAction::Traverse: return "traverse";
    case PathAction::Turn: return "turn";
    case PathAction::Load: return "load";
    case PathAction::Unload: return "unload";
    case PathAction::Wait: return "wait";
    case PathAction::Dwell: return "dwell";
  }
  return "?";
}

//==============================================================================
std::size_t TimedPath::arc_count() const
{
  return static_cast<std::size_t>(std::count_if(elements.begin(),
    elements.end(), [](const PathElement& e) { return e.resource.is_arc(); }));
}

//==============================================================================
std::vector<std::size_t> TimedPath::node_sequence() const
{
  std::vector<std::size_t> nodes;
  for (const auto& e : elements)
  {
    if (e.resource.is_node() &&
      (nodes.empty() || nodes.back() != e.resource.index))
    {
      nodes.push_back(e.resource.index);
    }
  }
  return nodes;
}

//==============================================================================
double traversal_time(const Arc& arc, const VehicleKinematics& kin)
{
  return arc.length / kin.max_speed;
}

//==============================================================================
double turn_time(TurnAngle angle, const VehicleKinematics& kin,
  double maneuver_threshold)
{
  if (angle.value < maneuver_threshold || angle.value <= 0.0)
    return 0.0;
  return angle.value / kin.max_turn_rate;
}

//==============================================================================
Interval reservation_interval(const PathElement& element, double margin,
  double path_start)
{
  double lo = element.entry - margin;
  if (lo < path_start)
    lo = path_start;
  return Interval{lo, element.exit + margin};
}

namespace {

//==============================================================================
// Smallest representable t >= base + margin with t - margin >= base, so the
// reservation computed from t never dips below base through round-off.
double after(double base, double margin)
{
  double t = base + margin;
  while (t - margin < base)
    t = std::nextafter(t, Infinity);
  return t;
}

class WindowCache
{
public:
  WindowCache(const ReservationTable& table, double from,
    std::optional<VehicleId> ignore)
  : _table(table),
    _from(from),
    _ignore(ignore),
    _cache(table.map().resource_count())
  {
    // Do nothing
  }

  const std::vector<Interval>& get(Resource r)
  {
    auto& slot = _cache[_table.map().resource_slot(r)];
    if (!slot)
      slot = _table.free_windows(r, _from, _ignore);
    return *slot;
  }

private:
  const ReservationTable& _table;
  double _from;
  std::optional<VehicleId> _ignore;
  std::vector<std::optional<std::vector<Interval>>> _cache;
};

/// Index of the first window whose end lies after t.
std::size_t first_window_ending_after(const std::vector<Interval>& w, double t)
{
  return static_cast<std::size_t>(std::upper_bound(w.begin(), w.end(), t,
    [](double value, const Interval& i) { return value < i.end; }) -
    w.begin());
}

struct Label
{
  double arrival = 0.0;
  std::uint32_t turns = 0;
  std::uint32_t hops = 0;
  std::size_t node = 0;
  std::int64_t in_code = -1;
  std::size_t window = 0;
  std::size_t seq_pos = 0;
  std::int64_t parent = -1;

  // Move that produced this label, from the parent's node.
  double depart = 0.0;
  double turn_duration = 0.0;
  double turn_angle = 0.0;
};

struct StateKey
{
  std::size_t node;
  std::int64_t in_code;
  std::size_t window;
  std::uint32_t turns;
  std::size_t seq_pos;

  bool operator==(const StateKey&) const = default;
};

struct StateKeyHash
{
  std::size_t operator()(const StateKey& k) const
  {
    std::size_t h = k.node;
    h = h * 1000003u ^ static_cast<std::size_t>(k.in_code + 1);
    h = h * 1000003u ^ k.window;
    h = h * 1000003u ^ k.turns;
    h = h * 1000003u ^ k.seq_pos;
    return h;
  }
};

struct SearchOptions
{
  bool track_turns = false;
  std::uint32_t turn_budget = 0;
  double completion_limit = Infinity;
  const std::vector<std::size_t>* sequence = nullptr;
};

struct SearchResult
{
  std::vector<Label> labels;
  std::int64_t goal = -1;
  double goal_ready = 0.0;
};

std::int64_t traversal_code(Traversal t)
{
  return static_cast<std::int64_t>(t.arc) * 2 + (t.reversed ? 1 : 0);
}

Traversal traversal_from_code(std::int64_t code)
{
  return Traversal{static_cast<std::size_t>(code / 2), (code % 2) == 1};
}

double handling_time(const PlanRequest& request, const VehicleKinematics& kin)
{
  switch (request.dest_action)
  {
    case PathAction::Load: return kin.load_time;
    case PathAction::Unload: return kin.unload_time;
    default: return 0.0;
  }
}

//==============================================================================
class Search
{
public:
  Search(const TopologicalMap& map, const ReservationTable& table,
    const PlanRequest& request, const VehicleKinematics& kin,
    const RouterConfig& config, SearchOptions options)
  : _map(map),
    _request(request),
    _kin(kin),
    _config(config),
    _options(options),
    _margin(config.margin),
    _windows(table, std::max(0.0, request.start - config.margin),
      request.vehicle),
    _handling(handling_time(request, kin)),
    _queue(Order{&_labels, &map})
  {
    // Do nothing
  }

  SearchResult run()
  {
    const auto& origin_windows = _windows.get(Resource::node(_request.origin));
    const auto w0 = first_window_ending_after(origin_windows, _request.start);
    if (w0 >= origin_windows.size() ||
      origin_windows[w0].start > _request.start)
    {
      return {};
    }

    Label root;
    root.arrival = _request.start;
    root.node = _request.origin;
    root.window = w0;
    push(root);

    SearchResult result;
    std::uint32_t best_turns = std::numeric_limits<std::uint32_t>::max();
    while (!_queue.empty())
    {
      const std::size_t index = _queue.top();
      _queue.pop();
      const Label label = _labels[index];
      if (label.arrival > _options.completion_limit)
        break;
      if (_options.track_turns && label.turns >= best_turns)
        continue;

      if (const auto ready = goal_ready(label))
      {
        if (!_options.track_turns)
        {
          result.goal = static_cast<std::int64_t>(index);
          result.goal_ready = *ready;
          break;
        }
        if (*ready + _handling <= _options.completion_limit &&
          label.turns < best_turns)
        {
          best_turns = label.turns;
          result.goal = static_cast<std::int64_t>(index);
          result.goal_ready = *ready;
          if (best_turns == 0)
            break;
        }
      }

      expand(index);
    }

    result.labels = std::move(_labels);
    return result;
  }

private:
  struct Order
  {
    const std::vector<Label>* labels;
    const TopologicalMap* map;

    // Min-heap on (arrival, turns, hops, node id, heading, window).
    bool operator()(std::size_t a, std::size_t b) const
    {
      const auto& x = (*labels)[a];
      const auto& y = (*labels)[b];
      const auto kx = std::make_tuple(x.arrival, x.turns, x.hops,
          map->lexicographic_rank(x.node), x.in_code, x.window, x.seq_pos, a);
      const auto ky = std::make_tuple(y.arrival, y.turns, y.hops,
          map->lexicographic_rank(y.node), y.in_code, y.window, y.seq_pos, b);
      return kx > ky;
    }
  };

  bool is_root(const Label& l) const { return l.parent < 0; }

  double ready_time(const Label& l) const
  {
    return is_root(l) ?
      std::max(l.arrival, _request.earliest_departure) : l.arrival;
  }

  std::optional<double> goal_ready(const Label& l)
  {
    if (l.node != _request.dest)
      return std::nullopt;
    if (_options.sequence && l.seq_pos + 1 != _options.sequence->size())
      return std::nullopt;

    const auto& w =
      _windows.get(Resource::node(l.node))[l.window];
    const double ready = ready_time(l);
    if (_request.park_at_dest)
      return w.end == Infinity ? std::optional<double>(ready) : std::nullopt;

    const double exit = ready + _handling;
    if (exit > ready || _margin > 0.0)
    {
      if (exit + _margin <= w.end)
        return ready;
      return std::nullopt;
    }
    // Zero-length pass without margin: arrival already inside the window.
    return ready < w.end ? std::optional<double>(ready) : std::nullopt;
  }

  void push(Label label)
  {
    const StateKey key{label.node, label.in_code, label.window,
      _options.track_turns ? label.turns : 0u, label.seq_pos};
    const auto it = _best.find(key);
    if (it != _best.end())
    {
      const auto& old = _labels[it->second];
      if (std::tie(old.arrival, old.turns, old.hops) <=
        std::tie(label.arrival, label.turns, label.hops))
      {
        return;
      }
    }
    const std::size_t index = _labels.size();
    _labels.push_back(label);
    _best[key] = index;
    _queue.push(index);
  }

  void expand(std::size_t index)
  {
    // Copy: push() may reallocate _labels.
    const Label label = _labels[index];
    {
      const StateKey key{label.node, label.in_code, label.window,
        _options.track_turns ? label.turns : 0u, label.seq_pos};
      if (_best.at(key) != index)
        return;
    }

    const auto& node_windows = _windows.get(Resource::node(label.node));
    const Interval hold = node_windows[label.window];
    const double start = _request.start;

    for (const auto& tr : _map.outgoing(label.node))
    {
      const std::size_t next = _map.head(tr);
      if (_options.sequence)
      {
        const auto& seq = *_options.sequence;
        if (label.seq_pos + 1 >= seq.size() || seq[label.seq_pos + 1] != next)
          continue;
      }

      double angle = 0.0;
      if (label.in_code >= 0)
      {
        angle = turn_angle(_map, traversal_from_code(label.in_code), tr).value;
      }
      else if (_request.heading)
      {
        const double rad = *_request.heading * M_PI / 180.0;
        angle = angle_between(
          Point{std::cos(rad), std::sin(rad)}, _map.direction(tr)).value;
      }
      const double turn = turn_time(TurnAngle{angle}, _kin,
          _config.maneuver_threshold);
      const bool maneuver = turn > 0.0;
      const std::uint32_t turns = label.turns + (maneuver ? 1u : 0u);
      if (_options.track_turns && turns > _options.turn_budget)
        continue;

      const double ready = std::max(label.arrival + turn, ready_time(label));
      // Departing at d holds the node until d + margin.
      if (ready + _margin > hold.end)
        continue;

      const Arc& arc = _map.arc(tr.arc);
      const double tau = traversal_time(arc, _kin);
      const auto& arc_windows = _windows.get(Resource::arc(tr.arc));
      const auto& next_windows = _windows.get(Resource::node(next));

      for (std::size_t a = first_window_ending_after(arc_windows, ready);
        a < arc_windows.size(); ++a)
      {
        const Interval& aw = arc_windows[a];
        double d_lo = ready;
        if (aw.start > start)
          d_lo = std::max(d_lo, after(aw.start, _margin));
        if (d_lo + _margin > hold.end)
          break;
        if ((d_lo + tau) + _margin > aw.end)
          continue;

        for (std::size_t w = first_window_ending_after(next_windows, d_lo + tau);
          w < next_windows.size(); ++w)
        {
          const Interval& nw = next_windows[w];
          double d = d_lo;
          if (nw.start > start)
          {
            while ((d + tau) - _margin < nw.start)
            {
              const double guess = nw.start + _margin - tau;
              d = guess > d ? guess : std::nextafter(d, Infinity);
            }
          }
          const double arrive = d + tau;

          // Upper limits: node hold, arc window, pass through next node.
          if (d + _margin > hold.end || arrive + _margin > aw.end)
            break;
          const bool pass_ok = _margin > 0.0 ?
            arrive + _margin <= nw.end : arrive < nw.end;
          if (!pass_ok)
            continue;
          if (arrive > _options.completion_limit)
            break;

          Label child;
          child.arrival = arrive;
          child.turns = turns;
          child.hops = label.hops + 1;
          child.node = next;
          child.in_code = traversal_code(tr);
          child.window = w;
          child.seq_pos = _options.sequence ? label.seq_pos + 1 : 0;
          child.parent = static_cast<std::int64_t>(index);
          child.depart = d;
          child.turn_duration = turn;
          child.turn_angle = maneuver ? angle : 0.0;
          push(child);
        }
      }
    }
  }

  const TopologicalMap& _map;
  const PlanRequest& _request;
  const VehicleKinematics& _kin;
  const RouterConfig& _config;
  SearchOptions _options;
  double _margin;
  WindowCache _windows;
  double _handling;
  std::vector<Label> _labels;
  std::unordered_map<StateKey, std::size_t, StateKeyHash> _best;
  std::priority_queue<std::size_t, std::vector<std::size_t>, Order> _queue;
};

//==============================================================================
void append_node_stay(std::vector<PathElement>& out, std::size_t node,
  double arrival, double turn, double angle, double dwell_until, double depart)
{
  const Resource r = Resource::node(node);
  double t = arrival;
  if (turn > 0.0)
  {
    out.push_back({r, t, t + turn, PathAction::Turn, false, angle});
    t = t + turn;
  }
  if (dwell_until > t && depart > t)
  {
    const double until = std::min(dwell_until, depart);
    out.push_back({r, t, until, PathAction::Dwell, false, 0.0});
    t = until;
  }
  if (depart > t)
  {
    out.push_back({r, t, depart, PathAction::Wait, false, 0.0});
    t = depart;
  }
  if (out.empty() || out.back().resource != r)
    out.push_back({r, t, t, PathAction::Traverse, false, 0.0});
}

TimedPath build_path(const TopologicalMap& map, const PlanRequest& request,
  const VehicleKinematics& kin, const SearchResult& result)
{
  std::vector<const Label*> chain;
  for (auto i = result.goal; i >= 0; i = result.labels[i].parent)
    chain.push_back(&result.labels[i]);
  std::reverse(chain.begin(), chain.end());

  TimedPath path;
  path.origin = request.origin;
  path.dest = request.dest;
  path.start = request.start;

  const double handling = handling_time(request, kin);
  if (chain.size() == 1 && handling == 0.0)
  {
    path.completion = path.start;
    return path;
  }

  for (std::size_t i = 0; i + 1 < chain.size(); ++i)
  {
    const Label& here = *chain[i];
    const Label& move = *chain[i + 1];
    append_node_stay(path.elements, here.node, here.arrival,
      move.turn_duration, move.turn_angle,
      i == 0 ? request.earliest_departure : 0.0, move.depart);

    const auto tr = traversal_from_code(move.in_code);
    path.elements.push_back({Resource::arc(tr.arc), move.depart,
        move.depart + traversal_time(map.arc(tr.arc), kin),
        PathAction::Traverse, tr.reversed, 0.0});
  }

  const Label& last = *chain.back();
  const Resource dest = Resource::node(last.node);
  double t = last.arrival;
  if (chain.size() == 1 && result.goal_ready > t)
  {
    path.elements.push_back({dest, t, result.goal_ready, PathAction::Dwell,
        false, 0.0});
    t = result.goal_ready;
  }
  if (handling > 0.0)
  {
    path.elements.push_back({dest, t, t + handling, request.dest_action,
        false, 0.0});
  }
  else
  {
    path.elements.push_back({dest, t, t, PathAction::Traverse, false, 0.0});
  }

  path.completion = path.elements.back().exit;
  path.cost = path.completion - path.start;
  path.turn_count = static_cast<std::size_t>(std::count_if(
    path.elements.begin(), path.elements.end(),
    [](const PathElement& e) { return e.action == PathAction::Turn; }));
  return path;
}

void validate(const TopologicalMap& map, const PlanRequest& request,
  const VehicleKinematics& kin)
{
  if (request.origin >= map.nodes().size() ||
    request.dest >= map.nodes().size())
  {
    throw PlanningError(PlanningError::Code::InvalidRequest,
      "origin or destination does not exist");
  }
  if (!std::isfinite(request.start) || request.start < 0.0)
  {
    throw PlanningError(PlanningError::Code::InvalidRequest,
      "start time must be finite and non-negative");
  }
  if (!kin.valid())
  {
    throw PlanningError(PlanningError::Code::InvalidRequest,
      "vehicle kinematics must be positive");
  }
}

[[noreturn]] void fail(const TopologicalMap& map, const PlanRequest& request)
{
  try
  {
    static_shortest_path(map, request.origin, request.dest);
  }
  catch (const MapError& e)
  {
    throw PlanningError(PlanningError::Code::Unreachable, e.what());
  }
  throw PlanningError(PlanningError::Code::UnreachableInTime,
    "destination '" + map.node(request.dest).id +
    "' cannot be reached from '" + map.node(request.origin).id +
    "' within the available time windows");
}

} // anonymous namespace

//==============================================================================
TimedPath plan(const TopologicalMap& map, const ReservationTable& table,
  const PlanRequest& request, const VehicleKinematics& kin,
  const RouterConfig& config)
{
  validate(map, request, kin);
  Search search(map, table, request, kin, config, SearchOptions{});
  const auto result = search.run();
  if (result.goal < 0)
    fail(map, request);
  return build_path(map, request, kin, result);
}

//==============================================================================
TimedPath plan(const TopologicalMap& map, const ReservationTable& table,
  std::size_t origin, std::size_t dest, double start,
  const VehicleKinematics& kin, double margin)
{
  PlanRequest request;
  request.origin = origin;
  request.dest = dest;
  request.start = start;
  RouterConfig config;
  config.margin = margin;
  return plan(map, table, request, kin, config);
}

//==============================================================================
TimedPath time_route(const TopologicalMap& map, const ReservationTable& table,
  const PlanRequest& request, const std::vector<std::size_t>& nodes,
  const VehicleKinematics& kin, const RouterConfig& config)
{
  validate(map, request, kin);
  if (nodes.empty() || nodes.front() != request.origin ||
    nodes.back() != request.dest)
  {
    throw PlanningError(PlanningError::Code::InvalidRequest,
      "node sequence must run from origin to destination");
  }
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
  {
    const auto& out = map.outgoing(nodes.at(i));
    const bool linked = std::any_of(out.begin(), out.end(),
        [&](const Traversal& t) { return map.head(t) == nodes[i + 1]; });
    if (!linked)
    {
      throw PlanningError(PlanningError::Code::InvalidRequest,
        "no arc from '" + map.node(nodes[i]).id + "' to '" +
        map.node(nodes[i + 1]).id + "'");
    }
  }

  SearchOptions options;
  options.sequence = &nodes;
  Search search(map, table, request, kin, config, options);
  const auto result = search.run();
  if (result.goal < 0)
  {
    throw PlanningError(PlanningError::Code::UnreachableInTime,
      "node sequence cannot be scheduled within the available windows");
  }
  return build_path(map, request, kin, result);
}

//==============================================================================
TimedPath optimize_maneuvers(const TopologicalMap& map,
  const ReservationTable& table, const PlanRequest& request,
  const TimedPath& path, const VehicleKinematics& kin,
  const RouterConfig& config)
{
  if (path.turn_count == 0 || path.elements.empty())
    return path;

  validate(map, request, kin);
  SearchOptions options;
  options.track_turns = true;
  options.turn_budget = static_cast<std::uint32_t>(path.turn_count);
  options.completion_limit = path.completion;
  Search search(map, table, request, kin, config, options);
  const auto result = search.run();
  if (result.goal < 0)
    return path;

  auto candidate = build_path(map, request, kin, result);
  const bool better =
    std::tie(candidate.turn_count, candidate.completion) <
    std::tie(path.turn_count, path.completion);
  if (!better || candidate.completion > path.completion ||
    !window_feasible(table, candidate, config.margin, request.vehicle))
  {
    return path;
  }
  return candidate;
}

//==============================================================================
std::vector<Reservation> path_reservations(const TimedPath& path,
  VehicleId vehicle, SubRouteId subroute, double margin)
{
  std::vector<Reservation> out;
  out.reserve(path.elements.size());
  for (const auto& e : path.elements)
  {
    const auto interval = reservation_interval(e, margin, path.start);
    if (interval.end > interval.start)
      out.push_back({e.resource, interval, vehicle, subroute});
  }
  return out;
}

//==============================================================================
void commit(ReservationTable& table, const TimedPath& path, VehicleId vehicle,
  SubRouteId subroute, double margin)
{
  table.reserve_all(path_reservations(path, vehicle, subroute, margin));
}

//==============================================================================
bool window_feasible(const ReservationTable& table, const TimedPath& path,
  double margin, std::optional<VehicleId> vehicle)
{
  const VehicleId self = vehicle.value_or(VehicleId{
    std::numeric_limits<std::uint32_t>::max()});
  for (const auto& e : path.elements)
  {
    const auto interval = reservation_interval(e, margin, path.start);
    if (interval.end > interval.start)
    {
      if (table.find_conflict(e.resource, interval, self))
        return false;
      continue;
    }
    for (const auto& r : table.on(e.resource))
    {
      if (r.vehicle != self && r.interval.start <= interval.start &&
        interval.start < r.interval.end)
      {
        return false;
      }
    }
  }
  return true;
}

//==============================================================================
std::string check_path(const TopologicalMap& map, const TimedPath& path,
  const RouterConfig& config)
{
  std::ostringstream err;
  const auto& el = path.elements;
  if (el.empty())
  {
    if (path.completion != path.start)
      return "empty path must complete at its start";
    return {};
  }

  if (!el.front().resource.is_node() || el.front().resource.index != path.origin)
    return "path does not begin at its origin";
  if (!el.back().resource.is_node() || el.back().resource.index != path.dest)
    return "path does not end at its destination";
  if (el.front().entry != path.start)
    return "first element does not start at the path start";
  if (path.completion != el.back().exit)
    return "completion differs from the last exit";
  if (std::abs(path.cost - (path.completion - path.start)) > 1e-9)
    return "cost differs from completion minus start";

  std::size_t turns = 0;
  for (std::size_t i = 0; i < el.size(); ++i)
  {
    const auto& e = el[i];
    if (e.exit < e.entry)
      return "element " + std::to_string(i) + " exits before it enters";
    if (e.exit == e.entry &&
      (e.action != PathAction::Traverse || !e.resource.is_node()))
    {
      return "element " + std::to_string(i) + " has zero length";
    }
    if (e.action == PathAction::Turn)
    {
      ++turns;
      if (e.angle < config.maneuver_threshold)
        return "turn element below the maneuver threshold";
    }
    if (i == 0)
      continue;

    const auto& p = el[i - 1];
    if (p.exit != e.entry)
      return "elements " + std::to_string(i - 1) + " and " +
             std::to_string(i) + " do not share a boundary instant";
    if (p.resource.is_arc() && e.resource.is_arc())
      return "two consecutive arcs";
    if (p.resource.is_node() && e.resource.is_arc())
    {
      if (map.tail(Traversal{e.resource.index, e.reversed}) != p.resource.index)
        return "arc " + std::to_string(i) + " does not leave the previous node";
    }
    if (p.resource.is_arc() && e.resource.is_node())
    {
      if (map.head(Traversal{p.resource.index, p.reversed}) != e.resource.index)
        return "node " + std::to_string(i) + " is not the previous arc's head";
    }
    if (p.resource.is_node() && e.resource.is_node() &&
      p.resource.index != e.resource.index)
    {
      return "consecutive nodes without an arc";
    }
  }
  if (turns != path.turn_count)
    return "turn_count differs from the number of turn elements";
  return {};
}

} // namespace forkroute
