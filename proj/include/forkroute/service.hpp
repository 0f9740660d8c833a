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

#ifndef FORKROUTE__SERVICE_HPP
#define FORKROUTE__SERVICE_HPP

#include <forkroute/simulator.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace forkroute {

//==============================================================================
/// One entry of the session event log. `payload` is a JSON object.
struct ApiEvent
{
  std::uint64_t seq = 0;
  double time = 0.0;
  std::string kind;
  std::string payload;

  std::string to_json() const;
};

/// Request failure carrying the HTTP status to answer with.
class ServiceError : public std::runtime_error
{
public:
  ServiceError(int status, const std::string& what)
  : std::runtime_error(what),
    status(status)
  {
    // Do nothing
  }

  int status;
};

enum class Lifecycle : std::uint8_t
{
  Empty,    // no map
  Ready,    // map loaded, clock stopped
  Running,
  Paused
};

std::string_view to_string(Lifecycle state);

//==============================================================================
/// A live dispatch session: one simulator and its dispatcher behind a
/// single lock. Every mutation is applied under the lock and followed by
/// publishing what it changed, so the event log is the complete history.
/// Request bodies and replies are JSON text.
class FleetService
{
public:
  FleetService();
  ~FleetService();

  FleetService(const FleetService&) = delete;
  FleetService& operator=(const FleetService&) = delete;

  /// Starts a new session on the scenario's map, fleet and orders. The
  /// event log continues across sessions.
  void load(Scenario scenario);

  /// Body: a map document, or an object with an inline "map" plus any
  /// scenario keys (vehicles, margin, ...).
  std::string load_map_document(const std::string& body);

  /// Body: {"tasks": [order rows]} or a bare array. Returns {"ids": [...]}.
  std::string submit_tasks(const std::string& body);

  std::string state() const;
  std::string map_document() const;

  /// Canonical text of the reservation table.
  std::string reservations() const;

  /// Body: {"op": ..., ...}. Returns an acknowledgement.
  std::string command(const std::string& body);

  /// Events with seq >= from. Throws ServiceError(416) beyond the head.
  std::vector<ApiEvent> events(std::uint64_t from) const;

  /// Sequence number the next event will get.
  std::uint64_t head() const;

  /// Blocks until an event with seq >= from exists, the timeout passes or
  /// the service closes. Returns true when such an event exists.
  bool wait(std::uint64_t from, std::chrono::milliseconds timeout) const;

  std::string trace() const;

  /// The event log, one JSON object per line.
  std::string log() const;

  Lifecycle lifecycle() const;

  /// Simulated seconds per wall-clock second while running.
  void set_rate(double rate);

  /// Advances the clock by hand while not running.
  void advance(double seconds);

  /// Stops the clock thread and wakes all waiters.
  void close();
  bool closed() const { return _closed; }

private:
  void run_clock();
  void require_session() const;
  void publish(const std::string& kind, const std::string& payload);
  void collect();
  void step_locked();

  mutable std::mutex _mutex;
  mutable std::condition_variable _changed;
  std::unique_ptr<Simulator> _sim;
  Lifecycle _state = Lifecycle::Empty;
  double _rate = 1.0;

  std::vector<ApiEvent> _log;
  std::size_t _seen_dispatch = 0;
  std::size_t _seen_reports = 0;
  std::size_t _seen_table = 0;
  std::size_t _seen_trace = 0;

  std::atomic<bool> _closed{false};
  std::thread _clock;
};

//==============================================================================
/// HTTP front end for a FleetService. Paths live under /api/v1.
class HttpServer
{
public:
  explicit HttpServer(FleetService& service);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port.
  bool bind(const std::string& host, int port);
  int port() const { return _port; }

  /// Serves until stop().
  void listen();

  /// Serves on a background thread.
  void start();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> _impl;
  int _port = 0;
  std::thread _thread;
};

} // namespace forkroute

#endif // FORKROUTE__SERVICE_HPP
