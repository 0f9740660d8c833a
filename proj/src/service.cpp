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

#include <forkroute/service.hpp>

#include "json_util.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdio>

namespace forkroute {

using nlohmann::json;

namespace {

json time_json(double t)
{
  return time_to_json<json>(t);
}

json point_json(Point p)
{
  return {{"x", p.x}, {"y", p.y}};
}

json parse_body(const std::string& body)
{
  try
  {
    return json::parse(body);
  }
  catch (const json::parse_error& e)
  {
    throw ServiceError(400, std::string("malformed JSON: ") + e.what());
  }
}

template<typename T>
T field(const json& j, const char* key)
{
  if (!j.contains(key))
    throw ServiceError(400, std::string("missing '") + key + "'");
  try
  {
    return j.at(key).get<T>();
  }
  catch (const json::exception&)
  {
    throw ServiceError(400, std::string("bad '") + key + "'");
  }
}

Point vehicle_point(const TopologicalMap& map, const VehicleState& s)
{
  if (s.resource.is_node())
    return map.node(s.resource.index).position;
  const auto& arc = map.arc(s.resource.index);
  auto a = map.node(arc.from).position;
  auto b = map.node(arc.to).position;
  if (s.reversed)
    std::swap(a, b);
  const double f = arc.length > 0.0 ? s.offset / arc.length : 0.0;
  return {a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f};
}

} // namespace

//==============================================================================
std::string ApiEvent::to_json() const
{
  json j;
  j["seq"] = seq;
  j["time"] = time;
  j["kind"] = kind;
  j["payload"] = json::parse(payload);
  return j.dump();
}

std::string_view to_string(Lifecycle state)
{
  switch (state)
  {
    case Lifecycle::Empty: return "empty";
    case Lifecycle::Ready: return "ready";
    case Lifecycle::Running: return "running";
    case Lifecycle::Paused: return "paused";
  }
  return "?";
}

//==============================================================================
FleetService::FleetService()
{
  // Do nothing
}

FleetService::~FleetService()
{
  close();
}

void FleetService::close()
{
  _closed = true;
  _changed.notify_all();
  if (_clock.joinable() && _clock.get_id() != std::this_thread::get_id())
    _clock.join();
}

Lifecycle FleetService::lifecycle() const
{
  std::lock_guard lock(_mutex);
  return _state;
}

void FleetService::set_rate(double rate)
{
  if (!(rate > 0.0) || std::isinf(rate))
    throw ServiceError(400, "rate must be positive");
  std::lock_guard lock(_mutex);
  _rate = rate;
}

void FleetService::require_session() const
{
  if (!_sim)
    throw ServiceError(409, "no map loaded");
}

//==============================================================================
void FleetService::publish(const std::string& kind, const std::string& payload)
{
  ApiEvent e;
  e.seq = _log.size();
  e.time = _sim ? _sim->now() : 0.0;
  e.kind = kind;
  e.payload = payload;
  _log.push_back(std::move(e));
}

void FleetService::collect()
{
  const auto before = _log.size();
  const auto& map = _sim->map();
  const auto& d = _sim->dispatcher();

  for (; _seen_table < d.table().log().size(); ++_seen_table)
    publish("reservation",
      json{{"record", d.table().log()[_seen_table]}}.dump());

  for (; _seen_reports < _sim->reports().size(); ++_seen_reports)
  {
    const auto& r = _sim->reports()[_seen_reports];
    json p;
    p["vehicle"] = r.vehicle.value;
    p["code"] = r.code;
    p["resource"] = map.resource_name(r.position.resource);
    p["offset"] = r.position.offset;
    p["detail"] = r.detail;
    if (r.conflict)
      p["conflict"] = map.resource_name(*r.conflict);
    if (r.expected_clear)
      p["expected_clear"] = time_json(*r.expected_clear);
    publish("status_report", p.dump());
    _log.back().time = r.time;
  }

  for (; _seen_dispatch < d.events().size(); ++_seen_dispatch)
  {
    const auto& e = d.events()[_seen_dispatch];
    json p;
    p["vehicle"] = e.vehicle ? json(e.vehicle->value) : json(nullptr);
    p["task"] = e.task ? json(*e.task) : json(nullptr);
    p["detail"] = e.detail;
    publish(e.kind, p.dump());
    _log.back().time = e.time;
  }

  for (; _seen_trace < _sim->trace().size(); ++_seen_trace)
  {
    const auto& r = _sim->trace()[_seen_trace];
    publish("trace", json{{"vehicle", r.vehicle},
      {"event", r.event == TraceEvent::Enter ? "enter" : "exit"},
      {"resource", r.resource}}.dump());
    _log.back().time = r.time;
  }

  if (_log.size() != before)
    _changed.notify_all();
}

void FleetService::step_locked()
{
  _sim->tick();
  collect();
}

//==============================================================================
void FleetService::load(Scenario scenario)
{
  std::unique_lock lock(_mutex);
  if (_state == Lifecycle::Running)
    throw ServiceError(409, "pause the simulation before loading a map");
  scenario.duration = Infinity;
  scenario.stop_when_idle = false;
  try
  {
    _sim = std::make_unique<Simulator>(std::move(scenario));
  }
  catch (const ScenarioError& e)
  {
    throw ServiceError(400, e.what());
  }
  _state = Lifecycle::Ready;
  _seen_dispatch = _seen_reports = _seen_table = _seen_trace = 0;

  json p;
  p["nodes"] = _sim->map().nodes().size();
  p["arcs"] = _sim->map().arcs().size();
  p["vehicles"] = json::array();
  for (const auto& v : _sim->dispatcher().fleet())
    p["vehicles"].push_back(v.id.value);
  publish("session_started", p.dump());
  collect();
  _changed.notify_all();
}

std::string FleetService::load_map_document(const std::string& body)
{
  auto doc = parse_body(body);
  if (!doc.is_object())
    throw ServiceError(400, "map body must be an object");
  if (!doc.contains("map"))
    doc = json{{"map", doc}};
  if (!doc["map"].is_object())
    throw ServiceError(400, "'map' must be an inline map document");

  Scenario scenario;
  try
  {
    scenario = parse_scenario(doc.dump(), ".", 0);
  }
  catch (const std::exception& e)
  {
    throw ServiceError(400, e.what());
  }
  const auto nodes = scenario.map->nodes().size();
  const auto arcs = scenario.map->arcs().size();
  const auto vehicles = scenario.vehicles.size();
  load(std::move(scenario));
  return json{{"ok", true}, {"nodes", nodes}, {"arcs", arcs},
    {"vehicles", vehicles}}.dump();
}

std::string FleetService::map_document() const
{
  std::lock_guard lock(_mutex);
  require_session();
  return render_map(_sim->map());
}

std::string FleetService::reservations() const
{
  std::lock_guard lock(_mutex);
  require_session();
  return _sim->dispatcher().table().serialize();
}

std::string FleetService::submit_tasks(const std::string& body)
{
  const auto doc = parse_body(body);
  const json* rows = &doc;
  if (doc.is_object())
  {
    if (!doc.contains("tasks"))
      throw ServiceError(400, "missing 'tasks'");
    rows = &doc["tasks"];
  }
  if (!rows->is_array())
    throw ServiceError(400, "'tasks' must be an array");

  std::lock_guard lock(_mutex);
  require_session();
  std::vector<OrderRow> orders;
  for (const auto& r : *rows)
  {
    if (!r.is_object())
      throw ServiceError(400, "order rows must be objects");
    OrderRow o;
    o.load = field<std::string>(r, "load");
    o.unload = field<std::string>(r, "unload");
    o.quantity = r.contains("quantity") ? field<int>(r, "quantity") : 1;
    o.request_time = r.contains("request_time") ?
      field<double>(r, "request_time") : _sim->now();
    orders.push_back(o);
  }

  std::vector<std::size_t> ids;
  try
  {
    ids = _sim->submit(orders);
  }
  catch (const IntakeError& e)
  {
    throw ServiceError(400, e.what());
  }
  collect();

  json out;
  out["ids"] = json::array();
  for (const auto i : ids)
    out["ids"].push_back(_sim->dispatcher().tasks()[i].id);
  return out.dump();
}

//==============================================================================
std::string FleetService::state() const
{
  std::lock_guard lock(_mutex);
  json s;
  s["lifecycle"] = to_string(_state);
  s["head"] = _log.size();
  s["time"] = _sim ? _sim->now() : 0.0;
  s["vehicles"] = json::array();
  s["tasks"] = json::array();
  s["schedules"] = json::array();
  s["blocked"] = json::array();
  if (!_sim)
    return s.dump();

  const auto& map = _sim->map();
  const auto& d = _sim->dispatcher();
  for (const auto& v : _sim->states())
  {
    json j;
    j["id"] = v.vehicle.value;
    j["depot"] = map.node(d.spec(v.vehicle).depot).id;
    j["resource"] = map.resource_name(v.resource);
    j["offset"] = v.offset;
    j["position"] = point_json(vehicle_point(map, v));
    j["heading"] = v.heading;
    j["speed"] = v.speed;
    j["subroute"] = v.subroute;
    j["in_service"] = v.in_service;
    s["vehicles"].push_back(j);
  }
  for (const auto& t : d.tasks())
  {
    json j;
    j["id"] = t.id;
    j["load"] = map.node(t.load_node).id;
    j["unload"] = map.node(t.unload_node).id;
    j["quantity"] = t.quantity;
    j["request_time"] = t.request_time;
    j["phase"] = to_string(t.phase);
    j["status"] = t.status ? json(*t.status) : json(nullptr);
    j["vehicle"] = t.assigned_vehicle ?
      json(t.assigned_vehicle->value) : json(nullptr);
    s["tasks"].push_back(j);
  }
  for (const auto& sch : d.schedules())
  {
    json j;
    j["vehicle"] = sch.vehicle.value;
    j["current"] = sch.current;
    j["in_service"] = sch.in_service;
    j["subroutes"] = json::array();
    for (const auto& sub : sch.subroutes)
    {
      json r;
      r["id"] = sub.id;
      r["kind"] = to_string(sub.kind);
      r["task"] = sub.task ? json(d.tasks()[*sub.task].id) : json(nullptr);
      r["origin"] = map.node(sub.path.origin).id;
      r["dest"] = map.node(sub.path.dest).id;
      r["start"] = sub.path.start;
      r["completion"] = sub.path.completion;
      r["nodes"] = json::array();
      for (const auto n : sub.path.node_sequence())
        r["nodes"].push_back(map.node(n).id);
      j["subroutes"].push_back(r);
    }
    s["schedules"].push_back(j);
  }
  for (const auto& r : d.table().of(SystemVehicle))
    s["blocked"].push_back({{"resource", map.resource_name(r.resource)},
      {"start", r.interval.start}, {"end", time_json(r.interval.end)}});
  return s.dump();
}

//==============================================================================
std::string FleetService::command(const std::string& body)
{
  const auto doc = parse_body(body);
  if (!doc.is_object())
    throw ServiceError(400, "command must be an object");
  const auto op = field<std::string>(doc, "op");

  std::unique_lock lock(_mutex);
  auto need = [&](bool ok, const std::string& what) {
    if (!ok)
      throw ServiceError(409, op + ": " + what);
  };
  auto vehicle = [&]() {
    const VehicleId v{field<std::uint32_t>(doc, "vehicle")};
    for (const auto& spec : _sim->dispatcher().fleet())
      if (spec.id == v)
        return v;
    throw ServiceError(404, "unknown vehicle " + to_string(v));
  };
  auto arc = [&]() {
    const auto id = field<std::string>(doc, "arc");
    if (!_sim->map().find_arc(id))
      throw ServiceError(404, "unknown arc '" + id + "'");
    return id;
  };

  if (op == "start_sim" || op == "pause" || op == "resume" ||
    op == "advance" || op == "inject_fault" || op == "block_arc" ||
    op == "fail_vehicle")
  {
    require_session();
  }
  else
  {
    throw ServiceError(400, "unknown op '" + op + "'");
  }

  Fault fault;
  bool has_fault = false;
  double advance_to = 0.0;
  if (op == "start_sim")
  {
    need(_state == Lifecycle::Ready, "simulation already started");
    if (doc.contains("rate"))
    {
      const auto rate = field<double>(doc, "rate");
      if (!(rate > 0.0) || std::isinf(rate))
        throw ServiceError(400, "rate must be positive");
      _rate = rate;
    }
    _state = Lifecycle::Running;
  }
  else if (op == "pause")
  {
    need(_state == Lifecycle::Running, "simulation is not running");
    _state = Lifecycle::Paused;
  }
  else if (op == "resume")
  {
    need(_state == Lifecycle::Paused, "simulation is not paused");
    _state = Lifecycle::Running;
  }
  else if (op == "advance")
  {
    need(_state != Lifecycle::Running, "simulation is running");
    const auto seconds = field<double>(doc, "seconds");
    if (!(seconds >= 0.0) || std::isinf(seconds))
      throw ServiceError(400, "seconds must be non-negative");
    advance_to = _sim->now() + seconds;
  }
  else if (op == "fail_vehicle")
  {
    fault.kind = Fault::Kind::Disable;
    fault.vehicle = vehicle();
    has_fault = true;
  }
  else if (op == "block_arc")
  {
    fault.kind = Fault::Kind::BlockArc;
    fault.arc = arc();
    has_fault = true;
  }
  else
  {
    const auto kind = field<std::string>(doc, "kind");
    has_fault = true;
    if (kind == "delay")
    {
      fault.kind = Fault::Kind::Delay;
      fault.vehicle = vehicle();
      fault.seconds = field<double>(doc, "seconds");
      if (!(fault.seconds >= 0.0) || std::isinf(fault.seconds))
        throw ServiceError(400, "seconds must be non-negative");
    }
    else if (kind == "disable")
    {
      fault.kind = Fault::Kind::Disable;
      fault.vehicle = vehicle();
    }
    else if (kind == "block_arc")
    {
      fault.kind = Fault::Kind::BlockArc;
      fault.arc = arc();
    }
    else
    {
      throw ServiceError(400, "unknown fault kind '" + kind + "'");
    }
  }

  if (has_fault && fault.kind == Fault::Kind::Disable)
    need(_sim->dispatcher().schedule(fault.vehicle).in_service,
      "vehicle " + to_string(fault.vehicle) + " is out of service");
  if (has_fault && fault.kind == Fault::Kind::BlockArc)
  {
    const double now = _sim->now();
    if (doc.contains("until"))
      fault.until = doc["until"].is_null() ? Infinity :
        field<double>(doc, "until");
    else if (doc.contains("seconds"))
      fault.until = now + field<double>(doc, "seconds");
    else
      fault.until = now + _sim->dispatcher().config().default_block;
    if (!(fault.until > now))
      throw ServiceError(400, "block must end in the future");
  }

  json audit = doc;
  publish("command", audit.dump());
  if (has_fault)
    _sim->inject(fault);
  if (op == "advance")
    while (_sim->now() < advance_to - 1e-9)
      step_locked();
  if (op == "start_sim" || op == "pause" || op == "resume")
    publish("lifecycle", json{{"state", to_string(_state)}}.dump());
  collect();
  _changed.notify_all();

  if (op == "start_sim" && !_clock.joinable())
    _clock = std::thread([this] { run_clock(); });

  return json{{"ok", true}, {"op", op}, {"head", _log.size()},
    {"time", _sim->now()}}.dump();
}

void FleetService::run_clock()
{
  using clock = std::chrono::steady_clock;
  auto next = clock::now();
  while (!_closed)
  {
    double period;
    {
      std::lock_guard lock(_mutex);
      period = _sim ? _sim->scenario().tick / _rate : 0.1;
    }
    next += std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double>(period));
    const auto now = clock::now();
    if (next < now)
      next = now;
    {
      std::unique_lock lock(_mutex);
      _changed.wait_until(lock, next, [this] { return _closed.load(); });
      if (_closed)
        break;
      if (_state == Lifecycle::Running && _sim)
        step_locked();
    }
  }
}

void FleetService::advance(double seconds)
{
  command(json{{"op", "advance"}, {"seconds", seconds}}.dump());
}

//==============================================================================
std::vector<ApiEvent> FleetService::events(std::uint64_t from) const
{
  std::lock_guard lock(_mutex);
  if (from > _log.size())
    throw ServiceError(416, "sequence " + std::to_string(from) +
      " is beyond the head " + std::to_string(_log.size()));
  return {_log.begin() + static_cast<std::ptrdiff_t>(from), _log.end()};
}

std::uint64_t FleetService::head() const
{
  std::lock_guard lock(_mutex);
  return _log.size();
}

bool FleetService::wait(std::uint64_t from,
  std::chrono::milliseconds timeout) const
{
  std::unique_lock lock(_mutex);
  return _changed.wait_for(lock, timeout,
    [&] { return _closed || _log.size() > from; }) && _log.size() > from;
}

std::string FleetService::trace() const
{
  std::lock_guard lock(_mutex);
  return _sim ? write_trace(_sim->trace()) : std::string();
}

std::string FleetService::log() const
{
  std::lock_guard lock(_mutex);
  std::string out;
  for (const auto& e : _log)
  {
    out += e.to_json();
    out += '\n';
  }
  return out;
}

//==============================================================================
struct HttpServer::Impl
{
  FleetService& service;
  httplib::Server server;
  std::atomic<bool> stopping{false};

  explicit Impl(FleetService& s)
  : service(s)
  {
    // Do nothing
  }
};

namespace {

void reply_error(httplib::Response& res, int status, const std::string& what)
{
  res.status = status;
  res.set_content(json{{"error", what}}.dump(), "application/json");
}

template<typename F>
httplib::Server::Handler guarded(F f)
{
  return [f](const httplib::Request& req, httplib::Response& res) {
    try
    {
      f(req, res);
    }
    catch (const ServiceError& e)
    {
      reply_error(res, e.status, e.what());
    }
    catch (const std::exception& e)
    {
      reply_error(res, 500, e.what());
    }
  };
}

std::string sse_frame(const ApiEvent& e)
{
  return "id: " + std::to_string(e.seq) + "\nevent: " + e.kind +
    "\ndata: " + e.to_json() + "\n\n";
}

} // namespace

HttpServer::HttpServer(FleetService& service)
: _impl(std::make_unique<Impl>(service))
{
  auto& svc = service;
  auto& srv = _impl->server;
  auto* impl = _impl.get();
  const std::string base = "/api/v1";

  auto json_reply = [](httplib::Response& res, const std::string& body) {
    res.set_content(body, "application/json");
  };

  auto load_map = guarded([&svc, json_reply](const httplib::Request& req,
    httplib::Response& res) {
    json_reply(res, svc.load_map_document(req.body));
  });
  srv.Put(base + "/map", load_map);
  srv.Post(base + "/map", load_map);
  srv.Get(base + "/map", guarded([&svc, json_reply](const httplib::Request&,
    httplib::Response& res) {
    json_reply(res, svc.map_document());
  }));
  srv.Post(base + "/tasks", guarded([&svc, json_reply](
    const httplib::Request& req, httplib::Response& res) {
    json_reply(res, svc.submit_tasks(req.body));
  }));
  srv.Get(base + "/state", guarded([&svc, json_reply](const httplib::Request&,
    httplib::Response& res) {
    json_reply(res, svc.state());
  }));
  srv.Post(base + "/command", guarded([&svc, json_reply](
    const httplib::Request& req, httplib::Response& res) {
    json_reply(res, svc.command(req.body));
  }));
  srv.Get(base + "/trace", guarded([&svc](const httplib::Request&,
    httplib::Response& res) {
    res.set_content(svc.trace(), "text/plain");
  }));
  srv.Get(base + "/reservations", guarded([&svc](const httplib::Request&,
    httplib::Response& res) {
    res.set_content(svc.reservations(), "text/plain");
  }));
  srv.Get(base + "/log", guarded([&svc](const httplib::Request&,
    httplib::Response& res) {
    res.set_content(svc.log(), "application/x-ndjson");
  }));

  // ?from=N replays from N; follow=0 answers with a JSON array instead of
  // a live stream.
  srv.Get(base + "/events", guarded([&svc, impl](const httplib::Request& req,
    httplib::Response& res) {
    std::uint64_t from = 0;
    if (req.has_param("from"))
    {
      try
      {
        std::size_t used = 0;
        const auto text = req.get_param_value("from");
        from = std::stoull(text, &used);
        if (used != text.size())
          throw std::invalid_argument(text);
      }
      catch (const std::exception&)
      {
        throw ServiceError(400, "bad 'from'");
      }
    }
    else if (req.has_header("Last-Event-ID"))
    {
      from = std::stoull(req.get_header_value("Last-Event-ID")) + 1;
    }
    const auto first = svc.events(from);

    if (req.get_param_value("follow") == "0")
    {
      std::string out = "[";
      for (std::size_t i = 0; i < first.size(); ++i)
        out += (i ? "," : "") + first[i].to_json();
      res.set_content(out + "]", "application/json");
      return;
    }

    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream",
      [&svc, impl, next = from](std::size_t, httplib::DataSink& sink) mutable {
        while (!impl->stopping && !svc.closed())
        {
          if (!sink.is_writable())
            return false;
          if (!svc.wait(next, std::chrono::milliseconds(200)))
            continue;
          std::string out;
          for (const auto& e : svc.events(next))
          {
            out += sse_frame(e);
            next = e.seq + 1;
          }
          if (!sink.write(out.data(), out.size()))
            return false;
          return true;
        }
        sink.done();
        return true;
      });
  }));
}

HttpServer::~HttpServer()
{
  stop();
}

bool HttpServer::bind(const std::string& host, int port)
{
  if (port == 0)
    _port = _impl->server.bind_to_any_port(host);
  else
    _port = _impl->server.bind_to_port(host, port) ? port : -1;
  return _port > 0;
}

void HttpServer::listen()
{
  _impl->server.listen_after_bind();
}

void HttpServer::start()
{
  _thread = std::thread([this] { listen(); });
  _impl->server.wait_until_ready();
}

void HttpServer::stop()
{
  _impl->stopping = true;
  _impl->server.stop();
  if (_thread.joinable())
    _thread.join();
}

} // namespace forkroute
