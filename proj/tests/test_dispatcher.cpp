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

#include "fixtures.hpp"

#include <forkroute/dispatcher.hpp>

#include <gtest/gtest.h>

#include <set>

using namespace forkroute;

namespace {

std::vector<VehicleSpec> six_vehicles(const TopologicalMap& map)
{
  std::vector<VehicleSpec> fleet;
  for (std::uint32_t i = 0; i < 6; ++i)
  {
    VehicleSpec v;
    v.id = VehicleId{i + 1};
    v.depot = map.node_index("D" + std::to_string(i));
    fleet.push_back(v);
  }
  return fleet;
}

std::vector<VehicleSpec> vehicles_at(const TopologicalMap& map,
  std::initializer_list<const char*> depots)
{
  std::vector<VehicleSpec> fleet;
  std::uint32_t id = 1;
  for (const auto* d : depots)
  {
    VehicleSpec v;
    v.id = VehicleId{id++};
    v.depot = map.node_index(d);
    fleet.push_back(v);
  }
  return fleet;
}

// All-pairs arc-length distances by Floyd-Warshall.
std::vector<std::vector<double>> all_pairs(const TopologicalMap& map)
{
  const auto n = map.nodes().size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, Infinity));
  for (std::size_t i = 0; i < n; ++i)
    d[i][i] = 0.0;
  for (const auto& a : map.arcs())
  {
    d[a.from][a.to] = std::min(d[a.from][a.to], a.length);
    if (a.direction == ArcDirection::Bidirectional)
      d[a.to][a.from] = std::min(d[a.to][a.from], a.length);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

// Greedy earliest-completion over at most k vehicles, from scratch.
double greedy_makespan(const TopologicalMap& map,
  const std::vector<VehicleSpec>& fleet,
  const std::vector<std::pair<std::size_t, std::size_t>>& tasks, std::size_t k)
{
  const auto d = all_pairs(map);
  std::vector<std::size_t> at;
  std::vector<double> free_at(fleet.size(), 0.0);
  std::vector<bool> used(fleet.size(), false);
  for (const auto& v : fleet)
    at.push_back(v.depot);
  std::size_t n_used = 0;
  double makespan = 0.0;
  for (const auto& [load, unload] : tasks)
  {
    std::size_t best = 0;
    double best_done = Infinity;
    for (std::size_t i = 0; i < fleet.size(); ++i)
    {
      if (n_used >= k && !used[i])
        continue;
      const double done = free_at[i] + d[at[i]][load] + d[load][unload] + 20.0;
      if (done < best_done)
      {
        best_done = done;
        best = i;
      }
    }
    n_used += !used[best];
    used[best] = true;
    at[best] = unload;
    free_at[best] = best_done;
    makespan = std::max(makespan, best_done);
  }
  return makespan;
}

std::vector<Reservation> reservations_of(const Dispatcher& d, VehicleId v,
  SubRouteId s)
{
  auto list = d.table().of(v, s);
  std::sort(list.begin(), list.end());
  return list;
}

class DispatcherTest : public ::testing::Test
{
protected:
  std::shared_ptr<const TopologicalMap> map = test::depot_grid_map();

  std::size_t node(const char* id) const { return map->node_index(id); }

  void expect_sound(const Dispatcher& d)
  {
    const auto problems = d.check_invariants();
    for (const auto& p : problems)
      ADD_FAILURE() << p;
  }
};

} // namespace

//==============================================================================
TEST_F(DispatcherTest, IntakeExpandsQuantity)
{
  Dispatcher d(map, six_vehicles(*map));
  EXPECT_EQ(d.intake({{"L0", "U1", 1, 0}}).size(), 1u);
  const auto three = d.intake({{"L2", "U3", 3, 5}});
  ASSERT_EQ(three.size(), 3u);
  for (const auto t : three)
  {
    EXPECT_EQ(d.tasks()[t].load_node, node("L2"));
    EXPECT_EQ(d.tasks()[t].unload_node, node("U3"));
    EXPECT_EQ(d.tasks()[t].quantity, 1);
    EXPECT_EQ(d.tasks()[t].phase, TaskPhase::Pending);
  }
  EXPECT_EQ(d.tasks().size(), 4u);
}

TEST_F(DispatcherTest, IntakeRejectsBadRows)
{
  Dispatcher d(map, six_vehicles(*map));
  EXPECT_THROW(d.intake({{"L0", "L1", 1, 0}}), IntakeError);
  EXPECT_THROW(d.intake({{"U0", "U1", 1, 0}}), IntakeError);
  EXPECT_THROW(d.intake({{"L0", "U1", 0, 0}}), IntakeError);
  try
  {
    d.intake({{"L0", "U1", 1, 0}, {"L9", "U1", 1, 0}});
    FAIL();
  }
  catch (const IntakeError& e)
  {
    EXPECT_NE(std::string(e.what()).find("L9"), std::string::npos);
  }
  EXPECT_TRUE(d.tasks().empty());
}

//==============================================================================
TEST_F(DispatcherTest, SizeFleetTrivialCases)
{
  Dispatcher d(map, six_vehicles(*map));
  std::vector<VehicleId> all;
  for (const auto& v : d.fleet())
    all.push_back(v.id);
  const auto none = d.size_fleet({}, all, std::nullopt);
  EXPECT_EQ(none.count, 0u);
  EXPECT_TRUE(none.assignment.empty());

  const auto t = d.intake({{"L0", "U0", 1, 0}});
  const auto one = d.size_fleet(t, all, std::nullopt);
  EXPECT_EQ(one.count, 1u);
  ASSERT_EQ(one.assignment.size(), 1u);

  // Nearest depot to L0 by independent all-pairs distances.
  const auto dist = all_pairs(*map);
  VehicleId nearest;
  double best = Infinity;
  for (const auto& v : d.fleet())
    if (dist[v.depot][node("L0")] < best)
    {
      best = dist[v.depot][node("L0")];
      nearest = v.id;
    }
  EXPECT_EQ(one.assignment[0], nearest);
  EXPECT_EQ(d.spec(nearest).depot, node("D2"));
}

TEST_F(DispatcherTest, SizeFleetMeetsDeadlineWithTwo)
{
  Dispatcher d(map, six_vehicles(*map));
  std::vector<VehicleId> all;
  for (const auto& v : d.fleet())
    all.push_back(v.id);
  const std::vector<OrderRow> rows{{"L0", "U0", 1, 0}, {"L3", "U3", 1, 0},
    {"L1", "U2", 1, 0}, {"L2", "U1", 1, 0}, {"L0", "U3", 1, 0},
    {"L3", "U0", 1, 0}};
  const auto tasks = d.intake(rows);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto t : tasks)
    pairs.push_back({d.tasks()[t].load_node, d.tasks()[t].unload_node});

  const double k1 = greedy_makespan(*map, d.fleet(), pairs, 1);
  const double k2 = greedy_makespan(*map, d.fleet(), pairs, 2);
  ASSERT_LT(k2, k1);

  const auto sizing = d.size_fleet(tasks, all, (k1 + k2) / 2);
  EXPECT_EQ(sizing.count, 2u);
  EXPECT_NEAR(sizing.makespan, k2, 1e-9);
  EXPECT_EQ(sizing.assignment.size(), tasks.size());

  const double k6 = greedy_makespan(*map, d.fleet(), pairs, 6);
  try
  {
    d.size_fleet(tasks, all, k6 - 1.0);
    FAIL();
  }
  catch (const FleetSizingError& e)
  {
    EXPECT_LE(e.best_makespan, k6 + 1e-9);
  }
}

//==============================================================================
TEST_F(DispatcherTest, ComposeOneTask)
{
  Dispatcher d(map, six_vehicles(*map));
  const auto t = d.intake({{"L1", "U2", 1, 0}});
  const auto& s = d.compose_schedule(VehicleId{1}, t, 0.0);
  ASSERT_EQ(s.subroutes.size(), 3u);
  EXPECT_EQ(s.subroutes[0].kind, SubRouteKind::ToLoad);
  EXPECT_EQ(s.subroutes[1].kind, SubRouteKind::ToUnload);
  EXPECT_EQ(s.subroutes[2].kind, SubRouteKind::ToDepot);
  EXPECT_EQ(s.subroutes[0].path.origin, node("D0"));
  EXPECT_EQ(s.subroutes[0].path.dest, node("L1"));
  EXPECT_EQ(s.subroutes[1].path.dest, node("U2"));
  EXPECT_EQ(s.subroutes[2].path.dest, node("D0"));
  EXPECT_EQ(s.subroutes[0].path.elements.back().action, PathAction::Load);
  EXPECT_EQ(s.subroutes[1].path.elements.back().action, PathAction::Unload);
  EXPECT_EQ(d.tasks()[t[0]].assigned_vehicle, VehicleId{1});
  EXPECT_EQ(d.tasks()[t[0]].phase, TaskPhase::Assigned);

  // Parking at the depot after the last leg.
  const auto parked = d.table().of(VehicleId{1}, s.subroutes[2].id);
  EXPECT_TRUE(std::any_of(parked.begin(), parked.end(),
      [](const Reservation& r) { return std::isinf(r.interval.end); }));
  expect_sound(d);
}

TEST_F(DispatcherTest, ComposeFromLoadNodeHasNoDriving)
{
  auto fleet = vehicles_at(*map, {"D0"});
  fleet[0].depot = node("L1");
  Dispatcher d(map, fleet);
  const auto t = d.intake({{"L1", "U1", 1, 0}});
  const auto& s = d.compose_schedule(VehicleId{1}, t, 0.0);
  ASSERT_EQ(s.subroutes.size(), 3u);
  const auto& to_load = s.subroutes[0].path;
  EXPECT_EQ(to_load.arc_count(), 0u);
  ASSERT_EQ(to_load.elements.size(), 1u);
  EXPECT_EQ(to_load.elements[0].action, PathAction::Load);
  expect_sound(d);
}

TEST_F(DispatcherTest, ComposeTwoTasksChains)
{
  Dispatcher d(map, six_vehicles(*map));
  const auto t = d.intake({{"L0", "U3", 1, 0}, {"L2", "U1", 1, 0}});
  const auto& s = d.compose_schedule(VehicleId{4}, t, 0.0);
  ASSERT_EQ(s.subroutes.size(), 5u);
  const std::vector<SubRouteKind> kinds{SubRouteKind::ToLoad,
    SubRouteKind::ToUnload, SubRouteKind::ToLoad, SubRouteKind::ToUnload,
    SubRouteKind::ToDepot};
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_EQ(s.subroutes[i].kind, kinds[i]);
  EXPECT_EQ(s.subroutes[2].path.dest, node("L2"));
  expect_sound(d);
}

TEST_F(DispatcherTest, ComposeFailureLeavesStateUntouched)
{
  Dispatcher d(map, six_vehicles(*map));
  const auto t = d.intake({{"L3", "U0", 1, 0}});
  d.table().block_resource(Resource::node(node("L3")), {0, Infinity});
  const auto before = d.table().serialize();
  try
  {
    d.compose_schedule(VehicleId{1}, t, 0.0);
    FAIL();
  }
  catch (const CompositionError& e)
  {
    EXPECT_EQ(e.kind, SubRouteKind::ToLoad);
    EXPECT_EQ(e.task, t[0]);
    EXPECT_NE(std::string(e.what()).find("T1"), std::string::npos);
  }
  EXPECT_EQ(d.table().serialize(), before);
  EXPECT_TRUE(d.schedule(VehicleId{1}).subroutes.empty());
  EXPECT_EQ(d.tasks()[t[0]].phase, TaskPhase::Pending);
}

TEST_F(DispatcherTest, AppendingReplacesPendingDepotLeg)
{
  Dispatcher d(map, six_vehicles(*map));
  const auto a = d.intake({{"L0", "U0", 1, 0}});
  d.compose_schedule(VehicleId{1}, a, 0.0);
  const auto b = d.intake({{"L1", "U1", 1, 0}});
  const auto& s = d.compose_schedule(VehicleId{1}, b, 0.0);
  ASSERT_EQ(s.subroutes.size(), 5u);
  EXPECT_EQ(s.subroutes[2].kind, SubRouteKind::ToLoad);
  EXPECT_EQ(s.subroutes[4].kind, SubRouteKind::ToDepot);
  expect_sound(d);
}

//==============================================================================
TEST_F(DispatcherTest, MonitorCodes)
{
  Dispatcher d(map, six_vehicles(*map));
  const auto t = d.intake({{"L1", "U2", 1, 0}});
  const auto& s = d.compose_schedule(VehicleId{1}, t, 0.0);

  StatusReport done{VehicleId{1}, {Resource::node(node("L1"))}, 0, "", 0};
  EXPECT_EQ(d.monitor(done).kind, Action::Kind::None);
  EXPECT_EQ(s.current, 1u);
  EXPECT_FALSE(d.tasks()[t[0]].status);
  EXPECT_EQ(d.monitor(done).kind, Action::Kind::None);
  EXPECT_EQ(d.tasks()[t[0]].status, 0);
  EXPECT_EQ(d.tasks()[t[0]].phase, TaskPhase::Finished);

  const auto arc = Resource::arc(map->arc_index("J00J01"));
  StatusReport late{VehicleId{1}, {arc, 3.0}, 1, "late", 50};
  const auto reroute = d.monitor(late);
  EXPECT_EQ(reroute.kind, Action::Kind::Reroute);
  EXPECT_EQ(reroute.resource, arc);

  StatusReport dead{VehicleId{1}, {arc, 3.0}, 2, "", 50};
  EXPECT_EQ(d.monitor(dead).kind, Action::Kind::Escalate);

  StatusReport stranger{VehicleId{99}, {arc}, 0, "", 0};
  EXPECT_THROW(d.monitor(stranger), std::invalid_argument);
}

//==============================================================================
namespace {

// First arc element of a sub-route.
const PathElement& first_arc(const SubRoute& sub)
{
  for (const auto& e : sub.path.elements)
    if (e.resource.is_arc())
      return e;
  throw std::logic_error("sub-route without arcs");
}

} // namespace

TEST_F(DispatcherTest, RerouteWithZeroShiftLeavesDownstream)
{
  Dispatcher d(map, vehicles_at(*map, {"D0"}));
  const auto t = d.intake({{"L0", "U3", 1, 0}, {"L2", "U1", 1, 0}});
  d.compose_schedule(VehicleId{1}, t, 0.0);
  d.monitor({VehicleId{1}, {}, 0, "", 0});
  const auto s0 = d.schedule(VehicleId{1});
  const auto& e = first_arc(s0.subroutes[1]);
  const double now = (e.entry + e.exit) / 2;

  std::vector<std::vector<Reservation>> before;
  for (std::size_t i = 2; i < 5; ++i)
    before.push_back(reservations_of(d, VehicleId{1}, s0.subroutes[i].id));

  StatusReport r{VehicleId{1}, {e.resource, 1.0}, 1, "", now};
  r.expected_clear = e.exit;
  d.handle(r, now);

  const auto& s1 = d.schedule(VehicleId{1});
  EXPECT_DOUBLE_EQ(s1.subroutes[1].path.completion,
    s0.subroutes[1].path.completion);
  for (std::size_t i = 2; i < 5; ++i)
  {
    EXPECT_EQ(s1.subroutes[i].path, s0.subroutes[i].path);
    EXPECT_EQ(reservations_of(d, VehicleId{1}, s1.subroutes[i].id),
      before[i - 2]);
  }
  EXPECT_EQ(d.tasks()[t[0]].status, 1);
  expect_sound(d);
}

TEST_F(DispatcherTest, RerouteDelayShiftsThreeDownstream)
{
  Dispatcher d(map, vehicles_at(*map, {"D0"}));
  const auto t = d.intake({{"L0", "U3", 1, 0}, {"L2", "U1", 1, 0}});
  d.compose_schedule(VehicleId{1}, t, 0.0);
  d.monitor({VehicleId{1}, {}, 0, "", 0});
  const auto s0 = d.schedule(VehicleId{1});
  const auto& e = first_arc(s0.subroutes[1]);
  const double now = (e.entry + e.exit) / 2;

  std::vector<std::vector<Reservation>> before;
  for (std::size_t i = 2; i < 5; ++i)
    before.push_back(reservations_of(d, VehicleId{1}, s0.subroutes[i].id));

  StatusReport r{VehicleId{1}, {e.resource, 1.0}, 1, "", now};
  r.expected_clear = e.exit + 12.0;
  EXPECT_EQ(d.handle(r, now).kind, Action::Kind::Reroute);

  const auto& s1 = d.schedule(VehicleId{1});
  EXPECT_NEAR(s1.subroutes[1].path.completion,
    s0.subroutes[1].path.completion + 12.0, 1e-9);
  for (std::size_t i = 2; i < 5; ++i)
  {
    EXPECT_NEAR(s1.subroutes[i].path.start, s0.subroutes[i].path.start + 12.0,
      1e-9);
    auto after = reservations_of(d, VehicleId{1}, s1.subroutes[i].id);
    ASSERT_EQ(after.size(), before[i - 2].size());
    for (std::size_t k = 0; k < after.size(); ++k)
    {
      EXPECT_EQ(after[k].resource, before[i - 2][k].resource);
      EXPECT_NEAR(after[k].interval.start,
        before[i - 2][k].interval.start + 12.0, 1e-9);
      if (std::isfinite(before[i - 2][k].interval.end))
        EXPECT_NEAR(after[k].interval.end,
          before[i - 2][k].interval.end + 12.0, 1e-9);
    }
  }
  EXPECT_GE(d.reroute_count(), 1u);
  expect_sound(d);
}

TEST_F(DispatcherTest, NodeConflictDetoursReporter)
{
  Dispatcher d(map, vehicles_at(*map, {"D1", "D0"}));
  // Vehicle 1 goes east along row 1 and will sit on J11 at some point.
  const auto t1 = d.intake({{"L3", "U3", 1, 0}});
  d.compose_schedule(VehicleId{1}, t1, 0.0);
  const auto x = Resource::node(node("J11"));
  const auto& p1 = d.schedule(VehicleId{1}).subroutes[0].path;
  double at_x = -1;
  for (const auto& e : p1.elements)
    if (e.resource == x)
      at_x = e.entry;
  ASSERT_GE(at_x, 0.0) << "fixture route no longer passes J11";

  // Vehicle 2 starts later from D0 and its shortest way runs through J11.
  const auto t2 = d.intake({{"L2", "U0", 1, at_x}});
  d.compose_schedule(VehicleId{2}, t2, at_x);
  const auto v1_before = d.schedule(VehicleId{1}).subroutes;

  StatusReport r{VehicleId{2}, {Resource::node(node("D0"))}, 1, "obstacle",
    at_x};
  r.conflict = x;
  d.handle(r, at_x);

  // The other vehicle keeps its route.
  EXPECT_EQ(d.schedule(VehicleId{1}).subroutes[0].path, v1_before[0].path);

  const auto& p2 = d.schedule(VehicleId{2}).subroutes[0].path;
  for (const auto& e : p2.elements)
    if (e.resource == x)
      EXPECT_GE(e.entry, at_x + d.config().default_block);
  EXPECT_EQ(p2.dest, node("L2"));
  EXPECT_TRUE(d.table().scan_overlaps().empty());
  expect_sound(d);
}

//==============================================================================
TEST_F(DispatcherTest, EscalateReassignsToPeer)
{
  Dispatcher d(map, vehicles_at(*map, {"D0", "D3"}));
  const auto t = d.intake({{"L1", "U1", 1, 0}});
  d.compose_schedule(VehicleId{1}, t, 0.0);

  StatusReport dead{VehicleId{1}, {Resource::node(node("D0"))}, 2, "motor",
    0.0};
  EXPECT_EQ(d.handle(dead, 0.0).kind, Action::Kind::Escalate);
  EXPECT_FALSE(d.schedule(VehicleId{1}).in_service);
  EXPECT_TRUE(d.table().of(VehicleId{1}).empty());
  EXPECT_EQ(d.tasks()[t[0]].assigned_vehicle, VehicleId{2});
  EXPECT_EQ(d.tasks()[t[0]].status, 2);
  EXPECT_EQ(d.schedule(VehicleId{2}).subroutes.size(), 3u);

  const auto& ev = d.events();
  EXPECT_TRUE(std::any_of(ev.begin(), ev.end(),
      [](const DispatchEvent& e) { return e.kind == "operator_notification"; }));
  EXPECT_TRUE(std::any_of(ev.begin(), ev.end(),
      [](const DispatchEvent& e) { return e.kind == "task_reassigned"; }));
  expect_sound(d);
}

TEST_F(DispatcherTest, EscalateIdleVehicleOnlyNotifies)
{
  Dispatcher d(map, vehicles_at(*map, {"D0", "D3"}));
  d.escalate(VehicleId{1}, 5.0, "operator request");
  EXPECT_FALSE(d.schedule(VehicleId{1}).in_service);
  EXPECT_TRUE(d.schedule(VehicleId{2}).subroutes.empty());
  std::size_t notes = 0, assigned = 0;
  for (const auto& e : d.events())
  {
    notes += e.kind == "operator_notification";
    assigned += e.kind == "task_reassigned" || e.kind == "task_assigned";
  }
  EXPECT_EQ(notes, 1u);
  EXPECT_EQ(assigned, 0u);
}

TEST_F(DispatcherTest, AllVehiclesFailedParksTasks)
{
  Dispatcher d(map, vehicles_at(*map, {"D0"}));
  const auto t = d.intake({{"L1", "U1", 1, 0}});
  d.step(0.0);
  d.escalate(VehicleId{1}, 1.0, "battery");
  EXPECT_EQ(d.tasks()[t[0]].phase, TaskPhase::Parked);
  EXPECT_TRUE(std::any_of(d.events().begin(), d.events().end(),
      [](const DispatchEvent& e) { return e.kind == "operator_alert"; }));
}

//==============================================================================
TEST_F(DispatcherTest, StepIdlesWithoutTasks)
{
  Dispatcher d(map, six_vehicles(*map));
  const auto before = d.table().serialize();
  EXPECT_EQ(d.step(0.0), 0u);
  EXPECT_EQ(d.step(100.0), 0u);
  EXPECT_EQ(d.table().serialize(), before);
  EXPECT_EQ(d.table().size(), 6u);
}

TEST_F(DispatcherTest, StepPicksUpTaskInjectedMidRun)
{
  Dispatcher d(map, six_vehicles(*map));
  const auto t = d.intake({{"L3", "U0", 1, 50.0}}, 50.0);
  EXPECT_EQ(d.step(40.0), 0u);
  EXPECT_EQ(d.step(50.0), 1u);
  const auto v = d.tasks()[t[0]].assigned_vehicle;
  ASSERT_TRUE(v);
  const auto& s = d.schedule(*v);
  ASSERT_EQ(s.subroutes.size(), 3u);
  EXPECT_GE(s.subroutes[0].path.start, 50.0);
  expect_sound(d);
}

//==============================================================================
TEST(DispatcherProperty, RandomReroutesKeepTableSound)
{
  const auto map = std::make_shared<const TopologicalMap>(
    load_map(FORKROUTE_DATA_DIR "/maps/warehouse_50x30.json"));
  std::vector<std::string> loads, unloads, depots;
  for (const auto& n : map->nodes())
  {
    if (n.kind == NodeKind::LoadingStation) loads.push_back(n.id);
    if (n.kind == NodeKind::UnloadingStation) unloads.push_back(n.id);
    if (n.kind == NodeKind::Depot) depots.push_back(n.id);
  }

  std::mt19937 rng(17);
  std::size_t reroutes = 0, escalations = 0;
  for (int run = 0; run < 15; ++run)
  {
    std::vector<VehicleSpec> fleet;
    for (std::uint32_t i = 0; i < depots.size(); ++i)
      fleet.push_back({VehicleId{i + 1}, map->node_index(depots[i]), {}, {}});
    Dispatcher d(map, fleet);
    std::vector<OrderRow> rows;
    std::uniform_int_distribution<std::size_t> li(0, loads.size() - 1);
    std::uniform_int_distribution<std::size_t> ui(0, unloads.size() - 1);
    for (int k = 0; k < 8; ++k)
      rows.push_back({loads[li(rng)], unloads[ui(rng)], 1, 0.0});
    d.intake(rows);
    d.step(0.0);

    std::uniform_int_distribution<std::size_t> vi(0, fleet.size() - 1);
    std::uniform_int_distribution<std::size_t> ri(0, map->resource_count() - 1);
    double now = 0.0;
    for (int step = 0; step < 12; ++step)
    {
      now += 7.0;
      const VehicleId v = fleet[vi(rng)].id;
      if (!d.schedule(v).in_service)
        continue;
      if (step % 3 == 2)
      {
        d.block(map->resource_at_slot(ri(rng)), {now, now + 30.0}, now);
      }
      else
      {
        const auto pos = d.planned_position(v, now);
        StatusReport r{v, pos, 1, "", now};
        r.expected_clear = now + 8.0;
        d.handle(r, now);
      }
      ASSERT_TRUE(d.table().scan_overlaps().empty()) << "run " << run;
      const auto problems = d.check_invariants();
      ASSERT_TRUE(problems.empty()) << problems.front();
    }
    EXPECT_EQ(d.post_reroute_overlaps(), 0u);
    EXPECT_LE(d.max_cascade_rounds(), d.config().cascade_cap);
    reroutes += d.reroute_count();
    for (const auto& e : d.events())
      escalations += e.kind == "escalation";
  }
  EXPECT_GT(reroutes, 50u);
  RecordProperty("reroutes", static_cast<int>(reroutes));
  RecordProperty("escalations", static_cast<int>(escalations));
}
