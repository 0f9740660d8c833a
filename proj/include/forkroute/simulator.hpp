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

#ifndef FORKROUTE__SIMULATOR_HPP
#define FORKROUTE__SIMULATOR_HPP

#include <forkroute/dispatcher.hpp>
#include <forkroute/trace.hpp>

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace forkroute {

//==============================================================================
struct Fault
{
  enum class Kind : std::uint8_t { Delay, BlockArc, Disable };

  Kind kind = Kind::Delay;
  double time = 0.0;
  VehicleId vehicle;

  /// Delay: how long the vehicle stands still.
  double seconds = 0.0;

  /// BlockArc: arc id and the end of the block.
  std::string arc;
  double until = 0.0;
};

struct Scenario
{
  std::shared_ptr<const TopologicalMap> map;
  std::vector<VehicleSpec> vehicles;
  std::vector<OrderRow> orders;
  std::vector<Fault> faults;
  double tick = 0.1;
  double duration = 3600.0;
  DispatcherConfig dispatcher;

  /// Speed factor a late vehicle may use to catch up.
  double overspeed_cap = 1.2;

  /// End the run as soon as the fleet is idle. A live session keeps its
  /// clock running instead.
  bool stop_when_idle = true;
};

class ScenarioError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Parses a scenario document. A string "map" is resolved against
/// `base_dir`; an object is an inline map. Without "vehicles" one vehicle
/// per depot is created. "random_tasks" draws orders from `seed`.
/// Throws ScenarioError.
Scenario parse_scenario(const std::string& text, const std::string& base_dir,
  std::uint64_t seed = 0);
Scenario load_scenario(const std::string& path, std::uint64_t seed = 0);

//==============================================================================
enum class LegOutcome : std::uint8_t
{
  OnTime,
  Recovered,
  Exceeded
};

std::string_view to_string(LegOutcome outcome);

/// Local planner surrogate for one leg: the vehicle stands still for
/// `disturbance` seconds and then drives at up to `cap` times the planned
/// speed until it is back on schedule.
struct LegResult
{
  LegOutcome outcome = LegOutcome::OnTime;
  double actual = 0.0;
};

LegResult local_leg_control(double planned, double safety, double disturbance,
  double cap = 1.2);

//==============================================================================
struct VehicleState
{
  VehicleId vehicle;
  Resource resource;

  /// Metres travelled along the current arc in the direction of travel.
  double offset = 0.0;
  bool reversed = false;

  double heading = 0.0;
  double speed = 0.0;
  std::size_t subroute = 0;
  double clock = 0.0;
  bool in_service = true;
};

struct SimulationSummary
{
  double makespan = 0.0;
  std::size_t reroutes = 0;
  std::size_t violations = 0;
  std::size_t tasks = 0;
  std::size_t finished = 0;
  std::size_t code1 = 0;
  std::size_t code2 = 0;
  std::size_t escalations = 0;
  std::size_t max_cascade_rounds = 0;
  std::size_t post_reroute_overlaps = 0;
  bool completed = false;
};

std::string format_summary(const SimulationSummary& summary);

//==============================================================================
/// Fixed-step execution of dispatcher schedules. Within a tick every
/// discrete change (element boundaries, safety time expiry) happens at its
/// exact time, in time order across vehicles.
class Simulator
{
public:
  explicit Simulator(Scenario scenario);

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  const Scenario& scenario() const { return _scenario; }
  const TopologicalMap& map() const { return *_scenario.map; }
  Dispatcher& dispatcher() { return *_dispatcher; }
  const Dispatcher& dispatcher() const { return *_dispatcher; }

  double now() const { return _now; }
  const Trace& trace() const { return _trace; }
  std::vector<VehicleState> states() const;
  std::optional<Position> position(VehicleId v) const;

  /// Status reports sent to the dispatcher, in order.
  const std::vector<StatusReport>& reports() const { return _reports; }

  /// Advances one tick. Returns false once the run is over.
  bool tick();

  /// Ticks until done or the scenario duration.
  SimulationSummary run();

  /// True when no task is pending or assigned and no vehicle is moving.
  bool idle() const;
  bool done() const;

  SimulationSummary summary() const;

  /// Injects a fault at the current time.
  void inject(const Fault& fault);

  /// Orders arriving during the run, dispatched at the next tick. Throws
  /// IntakeError.
  std::vector<std::size_t> submit(const std::vector<OrderRow>& rows);

private:
  struct Vehicle
  {
    VehicleId id;
    VehicleSpec spec;
    Resource resource;
    double offset = 0.0;
    bool reversed = false;
    double heading = 0.0;
    double speed = 0.0;

    /// Copy of the sub-route being followed, to notice re-plans.
    SubRouteId subroute = 0;
    std::vector<PathElement> elements;
    std::size_t element = 0;
    bool started = false;
    double done_at = 0.0;

    double hold_until = 0.0;
    bool disabled = false;
    bool frozen = false;
    std::set<std::pair<SubRouteId, std::size_t>> reported;
  };

  void sync(Vehicle& v);
  void attach(Vehicle& v, const SubRoute& sub);
  double next_event(const Vehicle& v) const;
  const PathElement* next_arc(const Vehicle& v) const;
  void advance(Vehicle& v, double to);
  bool settle(Vehicle& v);
  void move_to(Vehicle& v, Resource r, bool reversed);
  void report(Vehicle& v, int code, std::optional<double> clear,
    const std::string& detail);
  void apply(const Fault& fault);
  void sync_all();
  double arc_length(const Vehicle& v) const;
  double arc_speed(const Vehicle& v) const;
  void record(const Vehicle& v, TraceEvent event, Resource r);

  Scenario _scenario;
  std::unique_ptr<Dispatcher> _dispatcher;
  std::vector<Vehicle> _vehicles;
  std::vector<Fault> _faults;
  std::size_t _next_fault = 0;
  Trace _trace;
  std::vector<StatusReport> _reports;
  double _now = 0.0;
  double _last_finish = 0.0;
  std::size_t _ticks = 0;
};

} // namespace forkroute

#endif // FORKROUTE__SIMULATOR_HPP
