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

#include "oracle.hpp"

#include <forkroute/router.hpp>

#include <gtest/gtest.h>

#include <functional>
#include <numbers>

using namespace forkroute;
using forkroute::test::make_map;

namespace {

const VehicleKinematics Kin{};

PathAction handling_action(double handling)
{
  return handling > 0.0 ? PathAction::Load : PathAction::Traverse;
}

PlanRequest to_request(const test::OracleQuery& q)
{
  PlanRequest r;
  r.origin = q.origin;
  r.dest = q.dest;
  r.start = q.start;
  r.dest_action = handling_action(q.handling);
  if (q.heading)
    r.heading = *q.heading * 90.0;
  r.vehicle = VehicleId{1};
  return r;
}

ReservationTable make_table(std::shared_ptr<const TopologicalMap> map,
  const std::vector<Reservation>& list)
{
  ReservationTable table(map);
  for (const auto& r : list)
    table.reserve(r.resource, r.interval, r.vehicle, r.subroute);
  return table;
}

// Checks every inflated element directly against the raw reservations.
bool independently_feasible(const TimedPath& path,
  const std::vector<Reservation>& others, double margin)
{
  for (const auto& e : path.elements)
  {
    const double from = std::max(e.entry - margin, path.start);
    const double to = e.exit + margin;
    for (const auto& r : others)
    {
      if (r.resource != e.resource)
        continue;
      if (from < to)
      {
        if (r.interval.start < to && from < r.interval.end)
          return false;
      }
      else if (r.interval.start <= from && from < r.interval.end)
      {
        return false;
      }
    }
  }
  return true;
}

struct Candidate
{
  std::vector<std::size_t> nodes;
  double time = 0.0;
  std::size_t turns = 0;
};

// Every simple path with its unobstructed travel time (arcs + turns).
std::vector<Candidate> enumerate_paths(const TopologicalMap& map,
  std::size_t from, std::size_t to, std::optional<Point> heading = {})
{
  std::vector<Candidate> out;
  std::vector<bool> seen(map.nodes().size(), false);
  std::vector<std::size_t> stack{from};
  std::function<void(std::size_t, std::optional<Point>, double, std::size_t)>
  dfs = [&](std::size_t n, std::optional<Point> dir, double t, std::size_t k)
    {
      if (n == to)
      {
        out.push_back({stack, t, k});
        return;
      }
      seen[n] = true;
      for (const auto& tr : map.outgoing(n))
      {
        const auto next = map.head(tr);
        if (seen[next])
          continue;
        const Point d = map.direction(tr);
        double turn = 0.0;
        if (dir)
          turn = turn_time(angle_between(*dir, d), Kin);
        stack.push_back(next);
        dfs(next, d, t + turn + traversal_time(map.arc(tr.arc), Kin),
          k + (turn > 0.0));
        stack.pop_back();
      }
      seen[n] = false;
    };
  dfs(from, heading, 0.0, 0);
  return out;
}

// Interior vertices of an equal-sided polygon from a to b of total `length`,
// inscribed in a circular arc; every bend is the arc angle / segments.
std::vector<test::NodeDef> gentle_arc(Point a, Point b, double length,
  int segments, const std::string& prefix)
{
  const double chord = std::hypot(b.x - a.x, b.y - a.y);
  // Polygon of k equal chords inscribed in a circle arc of angle theta.
  auto poly_length = [&](double theta)
    {
      const double radius = chord / (2.0 * std::sin(theta / 2.0));
      return segments * 2.0 * radius * std::sin(theta / (2.0 * segments));
    };
  double lo = 1e-6, hi = 2.0 * std::numbers::pi - 1e-6;
  for (int i = 0; i < 200; ++i)
  {
    const double mid = 0.5 * (lo + hi);
    (poly_length(mid) < length ? lo : hi) = mid;
  }
  const double theta = 0.5 * (lo + hi);
  const double radius = chord / (2.0 * std::sin(theta / 2.0));
  const Point mid{(a.x + b.x) / 2, (a.y + b.y) / 2};
  const Point u{(b.x - a.x) / chord, (b.y - a.y) / chord};
  const Point normal{u.y, -u.x};
  const double offset = radius * std::cos(theta / 2.0);
  const Point centre{mid.x - normal.x * offset, mid.y - normal.y * offset};
  const double a0 = std::atan2(a.y - centre.y, a.x - centre.x);
  // Sweep in whichever sense ends at b.
  const double end_x = centre.x + radius * std::cos(a0 - theta);
  const double end_y = centre.y + radius * std::sin(a0 - theta);
  const double sense =
    std::hypot(end_x - b.x, end_y - b.y) < 1e-6 * chord ? -1.0 : 1.0;
  std::vector<test::NodeDef> out;
  for (int i = 1; i < segments; ++i)
  {
    const double phi = a0 + sense * theta * i / segments;
    out.push_back({prefix + std::to_string(i),
        centre.x + radius * std::cos(phi), centre.y + radius * std::sin(phi)});
  }
  return out;
}

struct DetourMap
{
  std::shared_ptr<const TopologicalMap> map;
  std::size_t origin;
  std::size_t dest;
};

// Two-turn staircase O→P→Q→D (30 m) plus a 0-maneuver polygon detour.
DetourMap staircase_with_detour(double detour_length, int segments)
{
  const Point o{0, 0}, d{20, 10};
  auto arc = gentle_arc(o, d, detour_length, segments, "G");
  // Shift everything into positive coordinates.
  double min_x = 0, min_y = 0, max_x = 20, max_y = 10;
  for (const auto& n : arc)
  {
    min_x = std::min(min_x, n.x);
    min_y = std::min(min_y, n.y);
    max_x = std::max(max_x, n.x);
    max_y = std::max(max_y, n.y);
  }
  const double dx = 1 - min_x, dy = 1 - min_y;
  std::vector<test::NodeDef> nodes{
    {"O", o.x + dx, o.y + dy}, {"P", 10 + dx, dy}, {"Q", 10 + dx, 10 + dy},
    {"D", d.x + dx, d.y + dy}};
  std::vector<test::ArcDef> arcs{{"O", "P"}, {"P", "Q"}, {"Q", "D"}};
  std::string prev = "O";
  for (auto n : arc)
  {
    n.x += dx;
    n.y += dy;
    nodes.push_back(n);
    arcs.push_back({prev, n.id});
    prev = n.id;
  }
  arcs.push_back({prev, "D"});
  auto map = make_map(nodes, arcs, max_x + dx + 1, max_y + dy + 1);
  return {map, map->node_index("O"), map->node_index("D")};
}

} // namespace

//==============================================================================
TEST(TraversalTime, Examples)
{
  const Arc ten{"a", 0, 1, 10.0, ArcDirection::Bidirectional};
  const Arc quarter{"b", 0, 1, 25.0, ArcDirection::Bidirectional};
  EXPECT_DOUBLE_EQ(traversal_time(ten, Kin), 10.0);
  EXPECT_DOUBLE_EQ(traversal_time(quarter, Kin), 25.0);
  VehicleKinematics fast = Kin;
  fast.max_speed = 2.0;
  EXPECT_DOUBLE_EQ(traversal_time(quarter, fast), 12.5);
}

TEST(TurnTime, Examples)
{
  EXPECT_DOUBLE_EQ(turn_time(TurnAngle{0.0}, Kin), 0.0);
  EXPECT_DOUBLE_EQ(turn_time(TurnAngle{90.0}, Kin), 18.0);
  EXPECT_DOUBLE_EQ(turn_time(TurnAngle{180.0}, Kin), 36.0);
  EXPECT_DOUBLE_EQ(turn_time(TurnAngle{44.9}, Kin), 0.0);
  EXPECT_DOUBLE_EQ(turn_time(TurnAngle{45.0}, Kin), 9.0);
}

//==============================================================================
TEST(Plan, OriginEqualsDestination)
{
  const auto map = test::line_map();
  ReservationTable table(map);
  const auto path = plan(*map, table, 1, 1, 7.0, Kin, 1.0);
  EXPECT_TRUE(path.elements.empty());
  EXPECT_DOUBLE_EQ(path.completion, 7.0);
  EXPECT_TRUE(check_path(*map, path).empty());
}

TEST(Plan, LineMapEmptyTable)
{
  const auto map = test::line_map();
  ReservationTable table(map);
  const auto a = map->node_index("A");
  const auto c = map->node_index("C");
  const auto path = plan(*map, table, a, c, 0.0, Kin, 1.0);
  EXPECT_DOUBLE_EQ(path.completion, 20.0);
  EXPECT_EQ(path.turn_count, 0u);
  EXPECT_EQ(path.arc_count(), 2u);
  EXPECT_DOUBLE_EQ(path.cost, 20.0);
  EXPECT_EQ(check_path(*map, path), "");

  test::BruteForceOracle oracle(*map, {});
  test::OracleQuery q;
  q.origin = a;
  q.dest = c;
  q.margin = 1.0;
  EXPECT_EQ(oracle.solve(q, 100.0), 20.0);
}

TEST(Plan, WaitsForReservedArc)
{
  const auto map = test::line_map();
  const Reservation other{Resource::arc(map->arc_index("AB")), {0, 10},
    VehicleId{2}, 1};
  auto table = make_table(map, {other});
  const auto a = map->node_index("A");
  const auto c = map->node_index("C");
  const auto path = plan(*map, table, a, c, 0.0, Kin, 0.0);
  EXPECT_DOUBLE_EQ(path.completion, 30.0);
  ASSERT_FALSE(path.elements.empty());
  EXPECT_EQ(path.elements.front().action, PathAction::Wait);
  EXPECT_DOUBLE_EQ(path.elements.front().exit, 10.0);

  test::BruteForceOracle oracle(*map, {other});
  test::OracleQuery q;
  q.origin = a;
  q.dest = c;
  EXPECT_EQ(oracle.solve(q, 100.0), 30.0);
}

TEST(Plan, ZeroManeuverDetourBeatsTwoTurns)
{
  const auto fx = staircase_with_detour(46.0, 8);
  ReservationTable table(fx.map);

  // Expected value by enumerating every candidate with its turn time.
  const auto candidates = enumerate_paths(*fx.map, fx.origin, fx.dest);
  ASSERT_EQ(candidates.size(), 2u);
  const auto best = std::min_element(candidates.begin(), candidates.end(),
      [](const Candidate& x, const Candidate& y) { return x.time < y.time; });
  const auto stair = std::find_if(candidates.begin(), candidates.end(),
      [](const Candidate& c) { return c.nodes.size() == 4; });
  ASSERT_NE(stair, candidates.end());
  EXPECT_NEAR(stair->time, 30.0 + 36.0, 1e-9);
  EXPECT_EQ(stair->turns, 2u);
  EXPECT_EQ(best->turns, 0u);
  EXPECT_NEAR(best->time, 46.0, 1e-6);

  const auto path = plan(*fx.map, table, fx.origin, fx.dest, 0.0, Kin, 1.0);
  EXPECT_NEAR(path.completion, best->time, 1e-9);
  EXPECT_EQ(path.turn_count, 0u);
  EXPECT_EQ(path.node_sequence(), best->nodes);
}

TEST(Plan, HandlingAppendedAtDestination)
{
  const auto map = test::line_map();
  ReservationTable table(map);
  PlanRequest r;
  r.origin = map->node_index("A");
  r.dest = map->node_index("C");
  r.dest_action = PathAction::Unload;
  const auto path = plan(*map, table, r, Kin);
  EXPECT_DOUBLE_EQ(path.completion, 30.0);
  EXPECT_EQ(path.elements.back().action, PathAction::Unload);
  EXPECT_DOUBLE_EQ(path.elements.back().entry, 20.0);

  // Already at the destination: only the handling element.
  r.origin = r.dest;
  const auto here = plan(*map, table, r, Kin);
  ASSERT_EQ(here.elements.size(), 1u);
  EXPECT_EQ(here.arc_count(), 0u);
  EXPECT_DOUBLE_EQ(here.completion, 10.0);
}

TEST(Plan, InitialHeadingChargesTurn)
{
  const auto map = test::line_map();
  ReservationTable table(map);
  PlanRequest r;
  r.origin = map->node_index("A");
  r.dest = map->node_index("C");
  r.heading = 180.0;
  const auto path = plan(*map, table, r, Kin);
  EXPECT_DOUBLE_EQ(path.completion, 56.0);
  EXPECT_EQ(path.turn_count, 1u);
  EXPECT_EQ(path.elements.front().action, PathAction::Turn);
  EXPECT_DOUBLE_EQ(path.elements.front().angle, 180.0);
}

TEST(Plan, Errors)
{
  const auto map = make_map({{"A", 0, 0}, {"B", 10, 0}, {"C", 20, 0}},
    {{"A", "B", true}, {"B", "C"}});
  ReservationTable table(map);
  try
  {
    plan(*map, table, 1, 0, 0.0, Kin, 1.0);
    FAIL();
  }
  catch (const PlanningError& e)
  {
    EXPECT_EQ(e.code(), PlanningError::Code::Unreachable);
  }

  table.block_resource(Resource::arc(map->arc_index("BC")), {0, Infinity});
  try
  {
    plan(*map, table, 0, 2, 0.0, Kin, 1.0);
    FAIL();
  }
  catch (const PlanningError& e)
  {
    EXPECT_EQ(e.code(), PlanningError::Code::UnreachableInTime);
  }
  EXPECT_THROW(plan(*map, table, 0, 7, 0.0, Kin, 1.0), PlanningError);
  EXPECT_THROW(plan(*map, table, 0, 1, -1.0, Kin, 1.0), PlanningError);
}

TEST(Plan, BlockForcesWaitOrDetour)
{
  // Square A-B-C-D; blocking AB for a minute makes the planner either wait
  // or go round, whichever is faster.
  const auto map = make_map(
    {{"A", 0, 0}, {"B", 10, 0}, {"C", 10, 10}, {"D", 0, 10}},
    {{"A", "B"}, {"B", "C"}, {"C", "D"}, {"D", "A"}});
  ReservationTable table(map);
  const auto a = map->node_index("A");
  const auto b = map->node_index("B");
  const auto ab = Resource::arc(map->arc_index("AB"));
  table.block_resource(ab, {0, 60});
  const auto path = plan(*map, table, a, b, 0.0, Kin, 1.0);

  // Around: 30 m plus two 90° turns. Waiting: 61 + 10.
  EXPECT_DOUBLE_EQ(path.completion, 66.0);
  for (const auto& e : path.elements)
    EXPECT_NE(e.resource, ab);

  test::BruteForceOracle oracle(*map, table.on(ab));
  test::OracleQuery q;
  q.origin = a;
  q.dest = b;
  q.margin = 1.0;
  EXPECT_EQ(oracle.solve(q, 200.0), 66.0);
}

TEST(Plan, Deterministic)
{
  const auto map = test::grid_map(4, 4);
  ReservationTable table(map);
  const auto p1 = plan(*map, table, 0, 15, 0.0, Kin, 1.0);
  const auto p2 = plan(*map, table, 0, 15, 0.0, Kin, 1.0);
  EXPECT_EQ(p1, p2);
}

TEST(Plan, MatchesBruteForceOracle)
{
  std::mt19937 rng(2026);
  int compared = 0, unreachable = 0;
  for (int i = 0; i < 300; ++i)
  {
    const auto inst = test::random_instance(rng);
    const auto& q = inst.query;
    auto table = make_table(inst.map, inst.reservations);
    RouterConfig config;
    config.margin = q.margin;

    test::BruteForceOracle oracle(*inst.map, inst.reservations);
    const auto expected = oracle.solve(q, test::oracle_horizon(inst));
    try
    {
      const auto path = plan(*inst.map, table, to_request(q), Kin, config);
      ASSERT_TRUE(expected) << "instance " << i << " planner found "
                            << path.completion;
      EXPECT_NEAR(path.completion, *expected, 0.5) << "instance " << i;
      EXPECT_EQ(path.completion, *expected) << "instance " << i;
      EXPECT_EQ(check_path(*inst.map, path, config), "");
      EXPECT_TRUE(independently_feasible(path, inst.reservations, q.margin));
      ++compared;
    }
    catch (const PlanningError& e)
    {
      EXPECT_FALSE(expected) << "instance " << i << ": " << e.what()
                             << " but oracle found " << *expected;
      ++unreachable;
    }
  }
  EXPECT_GT(compared, 200);
}

//==============================================================================
TEST(Commit, Examples)
{
  const auto map = test::line_map();
  ReservationTable table(map);
  const auto path = plan(*map, table, 0, 2, 0.0, Kin, 1.0);
  commit(table, path, VehicleId{1}, 1, 1.0);
  EXPECT_EQ(table.size(), path_reservations(path, VehicleId{1}, 1, 1.0).size());
  const auto ab = Resource::arc(map->arc_index("AB"));
  EXPECT_EQ(table.free_windows(ab, 0).front().start, 11.0);

  // A competing commit steals the window.
  ReservationTable other(map);
  const auto p = plan(*map, other, 0, 2, 0.0, Kin, 1.0);
  other.reserve(ab, {5, 6}, VehicleId{9}, 1);
  const auto before = other.serialize();
  EXPECT_THROW(commit(other, p, VehicleId{1}, 1, 1.0), ConflictError);
  EXPECT_EQ(other.serialize(), before);

  const auto empty = plan(*map, table, 1, 1, 0.0, Kin, 1.0);
  commit(table, empty, VehicleId{3}, 1, 1.0);
  EXPECT_TRUE(table.of(VehicleId{3}).empty());
}

TEST(Commit, PlannedPathsNeverConflict)
{
  // Plan and commit many vehicles one after another on a shared grid.
  const auto map = test::grid_map(4, 5);
  std::mt19937 rng(5);
  std::uniform_int_distribution<std::size_t> node_d(0, map->nodes().size() - 1);
  for (double margin : {0.0, 0.5, 1.0})
  {
    ReservationTable table(map);
    RouterConfig config;
    config.margin = margin;
    for (std::uint32_t v = 1; v <= 30; ++v)
    {
      PlanRequest r;
      r.origin = node_d(rng);
      r.dest = node_d(rng);
      r.start = std::uniform_int_distribution<int>(0, 60)(rng);
      r.vehicle = VehicleId{v};
      try
      {
        const auto path = plan(*map, table, r, Kin, config);
        ASSERT_TRUE(window_feasible(table, path, margin, r.vehicle));
        ASSERT_NO_THROW(commit(table, path, VehicleId{v}, 1, margin));
      }
      catch (const PlanningError&)
      {
        // Origin occupied at start by an earlier vehicle.
      }
    }
    EXPECT_TRUE(table.scan_overlaps().empty());
  }
}

//==============================================================================
TEST(OptimizeManeuvers, StraightPathUnchanged)
{
  const auto map = test::line_map();
  ReservationTable table(map);
  PlanRequest r;
  r.origin = 0;
  r.dest = 2;
  const auto path = plan(*map, table, r, Kin);
  EXPECT_EQ(optimize_maneuvers(*map, table, r, path, Kin), path);
}

TEST(OptimizeManeuvers, StaircaseBecomesL)
{
  const auto map = test::grid_map(3, 3);
  ReservationTable table(map);
  PlanRequest r;
  r.origin = map->node_index("r0c0");
  r.dest = map->node_index("r2c2");
  r.heading = 90.0;  // facing north

  // E, N, E, N: three bends plus the initial turn east.
  std::vector<std::size_t> stairs;
  for (auto id : {"r0c0", "r0c1", "r1c1", "r1c2", "r2c2"})
    stairs.push_back(map->node_index(id));
  const auto input = time_route(*map, table, r, stairs, Kin);
  EXPECT_EQ(input.turn_count, 4u);

  // Oracle: every simple path, ranked by (turns, time).
  const auto candidates = enumerate_paths(*map, r.origin, r.dest, Point{0, 1});
  const auto best = std::min_element(candidates.begin(), candidates.end(),
      [](const Candidate& x, const Candidate& y)
      { return std::tie(x.turns, x.time) < std::tie(y.turns, y.time); });
  EXPECT_EQ(best->turns, 1u);

  const auto out = optimize_maneuvers(*map, table, r, input, Kin);
  EXPECT_EQ(out.turn_count, 1u);
  EXPECT_DOUBLE_EQ(out.completion, best->time);
  EXPECT_DOUBLE_EQ(input.completion - out.completion,
    3 * turn_time(TurnAngle{90.0}, Kin));
  EXPECT_EQ(out.node_sequence(), best->nodes);
  EXPECT_EQ(check_path(*map, out), "");
}

TEST(OptimizeManeuvers, LongerAlternativeLeavesInputUnchanged)
{
  // The only 0-maneuver alternative is 60 m longer than the staircase.
  const auto fx = staircase_with_detour(90.0, 14);
  ReservationTable table(fx.map);
  const auto candidates = enumerate_paths(*fx.map, fx.origin, fx.dest);
  ASSERT_EQ(candidates.size(), 2u);
  for (const auto& c : candidates)
  {
    if (c.turns == 0)
      EXPECT_NEAR(c.time, 90.0, 1e-6);
  }

  PlanRequest r;
  r.origin = fx.origin;
  r.dest = fx.dest;
  const auto input = plan(*fx.map, table, r, Kin);
  EXPECT_EQ(input.turn_count, 2u);
  EXPECT_DOUBLE_EQ(input.completion, 66.0);
  EXPECT_EQ(optimize_maneuvers(*fx.map, table, r, input, Kin), input);
}

TEST(OptimizeManeuvers, GuardOnRandomInstances)
{
  std::mt19937 rng(99);
  int improved = 0;
  for (int i = 0; i < 300; ++i)
  {
    const auto inst = test::random_instance(rng);
    auto table = make_table(inst.map, inst.reservations);
    RouterConfig config;
    config.margin = inst.query.margin;
    const auto request = to_request(inst.query);

    // Inputs: the planner output and, when it exists, the static shortest
    // route scheduled as-is.
    std::vector<TimedPath> inputs;
    try { inputs.push_back(plan(*inst.map, table, request, Kin, config)); }
    catch (const PlanningError&) {}
    try
    {
      const auto nodes = static_shortest_path(*inst.map, request.origin,
          request.dest).nodes;
      inputs.push_back(time_route(*inst.map, table, request, nodes, Kin,
        config));
    }
    catch (const std::exception&) {}

    for (const auto& in : inputs)
    {
      const auto out = optimize_maneuvers(*inst.map, table, request, in, Kin,
          config);
      EXPECT_LE(out.completion, in.completion);
      EXPECT_LE(out.turn_count, in.turn_count);
      EXPECT_EQ(check_path(*inst.map, out, config), "");
      EXPECT_TRUE(independently_feasible(out, inst.reservations,
        config.margin));
      improved += out.turn_count < in.turn_count;
    }
  }
  EXPECT_GT(improved, 0);
}
