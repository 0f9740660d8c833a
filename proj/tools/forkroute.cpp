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

#include <forkroute/graph.hpp>
#include <forkroute/router.hpp>
#include <forkroute/service.hpp>
#include <forkroute/simulator.hpp>
#include <forkroute/trace.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>

using namespace forkroute;

namespace {

// Exit codes.
constexpr int Ok = 0;
constexpr int Findings = 1;
constexpr int Usage = 2;

class InputError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path)
{
  if (path == "-")
    return {std::istreambuf_iterator<char>(std::cin), {}};
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& text)
{
  if (path == "-")
  {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text))
    throw InputError("cannot write '" + path + "'");
}

std::shared_ptr<const TopologicalMap> read_map(const std::string& path)
{
  try
  {
    return std::make_shared<const TopologicalMap>(parse_map(slurp(path)));
  }
  catch (const InputError&)
  {
    throw;
  }
  catch (const std::exception& e)
  {
    throw InputError("map '" + path + "': " + e.what());
  }
}

//==============================================================================
struct RouteArgs
{
  std::string map;
  std::string origin;
  std::string dest;
  double start = 0.0;
  std::string reservations;
  double margin = 1.0;
  std::string format = "text";
};

/// Reservations file: [{"resource", "start", "end" (null = forever),
/// "vehicle" (default 0)}].
void load_reservations(ReservationTable& table, const std::string& path)
{
  using nlohmann::json;
  json doc;
  try
  {
    doc = json::parse(slurp(path));
    if (!doc.is_array())
      throw InputError("expected an array");
    std::uint32_t n = 0;
    for (const auto& r : doc)
    {
      const auto name = r.at("resource").get<std::string>();
      const auto res = table.map().find_resource(name);
      if (!res)
        throw InputError("unknown resource '" + name + "'");
      const auto& end = r.at("end");
      Interval interval{r.at("start").get<double>(),
        end.is_null() ? Infinity : end.get<double>()};
      const VehicleId v{r.value("vehicle", 0u)};
      table.reserve(*res, interval, v, ++n);
    }
  }
  catch (const std::exception& e)
  {
    throw InputError("reservations '" + path + "': " + e.what());
  }
}

int cmd_route(const RouteArgs& a)
{
  const auto map = read_map(a.map);
  ReservationTable table(map);
  if (!a.reservations.empty())
    load_reservations(table, a.reservations);

  const auto origin = map->find_node(a.origin);
  if (!origin)
    throw InputError("unknown node '" + a.origin + "'");
  const auto dest = map->find_node(a.dest);
  if (!dest)
    throw InputError("unknown node '" + a.dest + "'");

  PlanRequest request;
  request.origin = *origin;
  request.dest = *dest;
  request.start = a.start;
  request.vehicle = VehicleId{1};
  RouterConfig config;
  config.margin = a.margin;

  TimedPath path;
  try
  {
    path = plan(*map, table, request, VehicleKinematics{}, config);
    path = optimize_maneuvers(*map, table, request, path, VehicleKinematics{},
      config);
  }
  catch (const PlanningError& e)
  {
    std::cerr << "route: " << e.what() << "\n";
    return e.code() == PlanningError::Code::UnreachableInTime ? Findings :
      Usage;
  }

  if (a.format == "table")
  {
    std::printf("%-24s %-8s %10s %10s\n", "resource", "action", "entry",
      "exit");
    for (const auto& e : path.elements)
      std::printf("%-24s %-8s %10.3f %10.3f\n",
        map->resource_name(e.resource).c_str(),
        std::string(to_string(e.action)).c_str(), e.entry, e.exit);
  }
  else
  {
    std::cout << write_trace(path_trace(path, *map, 1));
  }
  std::printf("# completion=%.3f arcs=%zu turns=%zu\n", path.completion,
    path.arc_count(), path.turn_count);
  return Ok;
}

//==============================================================================
struct SimulateArgs
{
  std::string scenario;
  std::uint64_t seed = 0;
  std::optional<double> tick;
  std::optional<double> margin;
  std::string out;
  std::string format = "text";
};

int cmd_simulate(const SimulateArgs& a)
{
  Scenario scenario;
  try
  {
    scenario = load_scenario(a.scenario, a.seed);
  }
  catch (const std::exception& e)
  {
    throw InputError("scenario '" + a.scenario + "': " + e.what());
  }
  if (a.tick)
    scenario.tick = *a.tick;
  if (a.margin)
    scenario.dispatcher.router.margin = *a.margin;
  if (!(scenario.tick > 0.0))
    throw InputError("tick must be positive");

  Simulator sim(std::move(scenario));
  const auto summary = sim.run();
  if (!a.out.empty())
    spill(a.out, write_trace(sim.trace()));

  // With the trace on stdout the summary moves to stderr.
  std::ostream& os = a.out == "-" ? std::cerr : std::cout;
  if (a.format == "table")
  {
    std::istringstream fields(format_summary(summary));
    std::string kv;
    while (fields >> kv)
    {
      const auto eq = kv.find('=');
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%-16s %s\n",
        kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
      os << buf;
    }
  }
  else
  {
    os << format_summary(summary) << "\n";
  }
  return summary.violations == 0 ? Ok : Findings;
}

//==============================================================================
int cmd_verify(const std::string& trace_path, const std::string& map_path)
{
  const auto map = read_map(map_path);
  std::vector<Violation> found;
  try
  {
    found = verify_trace(read_trace(slurp(trace_path)), *map);
  }
  catch (const TraceError& e)
  {
    std::cerr << "trace '" << trace_path << "': " << e.what() << "\n";
    return Usage;
  }
  for (const auto& v : found)
    std::cout << describe(v) << "\n";
  std::cout << found.size() << (found.size() == 1 ? " violation" :
    " violations") << "\n";
  return found.empty() ? Ok : Findings;
}

int cmd_plot(const std::string& trace_path, const std::string& map_path,
  const std::string& out)
{
  const auto map = read_map(map_path);
  Trace trace;
  try
  {
    trace = read_trace(slurp(trace_path));
  }
  catch (const TraceError& e)
  {
    std::cerr << "trace '" << trace_path << "': " << e.what() << "\n";
    return Usage;
  }
  spill(out.empty() ? "-" : out, export_plot(trace, *map));
  return Ok;
}

//==============================================================================
struct ServeArgs
{
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string map;
  std::string scenario;
  std::uint64_t seed = 0;
  double rate = 1.0;
};

int cmd_serve(const ServeArgs& a)
{
  FleetService service;
  if (!a.scenario.empty())
  {
    try
    {
      service.load(load_scenario(a.scenario, a.seed));
    }
    catch (const std::exception& e)
    {
      throw InputError("scenario '" + a.scenario + "': " + e.what());
    }
  }
  else if (!a.map.empty())
  {
    service.load_map_document(slurp(a.map));
  }
  service.set_rate(a.rate);

  HttpServer server(service);
  if (!server.bind(a.host, a.port))
  {
    std::cerr << "serve: cannot listen on " << a.host << ":" << a.port
      << "\n";
    return Usage;
  }
  std::cerr << "listening on http://" << a.host << ":" << server.port()
    << "/api/v1\n";
  server.listen();
  return Ok;
}

} // namespace

//==============================================================================
int main(int argc, char** argv)
{
  CLI::App app{"Conflict-free routing and dispatch for warehouse vehicles"};
  app.require_subcommand(1);

  RouteArgs route;
  auto* r = app.add_subcommand("route", "Plan one route and print it");
  r->add_option("origin", route.origin, "Origin node id")->required();
  r->add_option("dest", route.dest, "Destination node id")->required();
  r->add_option("--map", route.map, "Map file")->required();
  r->add_option("--start", route.start, "Departure time in seconds");
  r->add_option("--reservations", route.reservations,
    "JSON array of existing reservations");
  r->add_option("--margin", route.margin, "Reservation margin in seconds");
  r->add_option("--format", route.format)->check(
    CLI::IsMember({"text", "table"}));

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run a scenario headless");
  s->add_option("--scenario", sim.scenario, "Scenario file")->required();
  s->add_option("--seed", sim.seed, "Seed for random orders");
  s->add_option("--tick", sim.tick, "Simulation step in seconds");
  s->add_option("--margin", sim.margin, "Reservation margin in seconds");
  s->add_option("--out", sim.out, "Trace output file, '-' for stdout");
  s->add_option("--format", sim.format)->check(
    CLI::IsMember({"text", "table"}));

  std::string verify_trace_path, verify_map;
  auto* v = app.add_subcommand("verify", "Check a trace for conflicts");
  v->add_option("trace", verify_trace_path, "Trace file, '-' for stdin")
    ->required();
  v->add_option("--map", verify_map, "Map file")->required();

  std::string plot_trace, plot_map, plot_out;
  auto* p = app.add_subcommand("plot", "Export per-vehicle polylines");
  p->add_option("trace", plot_trace, "Trace file, '-' for stdin")->required();
  p->add_option("--map", plot_map, "Map file")->required();
  p->add_option("--out", plot_out, "Output file (default stdout)");

  ServeArgs serve;
  auto* sv = app.add_subcommand("serve", "Run the dispatch service");
  sv->add_option("--host", serve.host);
  sv->add_option("--port", serve.port);
  sv->add_option("--map", serve.map, "Map to load at start");
  sv->add_option("--scenario", serve.scenario, "Scenario to load at start");
  sv->add_option("--seed", serve.seed);
  sv->add_option("--rate", serve.rate,
    "Simulated seconds per wall-clock second");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::CallForHelp& e)
  {
    return app.exit(e);
  }
  catch (const CLI::ParseError& e)
  {
    app.exit(e);
    return Usage;
  }

  try
  {
    if (*r)
      return cmd_route(route);
    if (*s)
      return cmd_simulate(sim);
    if (*v)
      return cmd_verify(verify_trace_path, verify_map);
    if (*p)
      return cmd_plot(plot_trace, plot_map, plot_out);
    return cmd_serve(serve);
  }
  catch (const InputError& e)
  {
    std::cerr << e.what() << "\n";
    return Usage;
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return Usage;
  }
}
