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

#ifndef FORKROUTE__RESERVATION_HPP
#define FORKROUTE__RESERVATION_HPP

#include <forkroute/graph.hpp>

#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace forkroute {

constexpr double Infinity = std::numeric_limits<double>::infinity();

//==============================================================================
struct VehicleId
{
  std::uint32_t value = 0;

  friend auto operator<=>(const VehicleId&, const VehicleId&) = default;
};

/// Owner of arc/node blocks. No real vehicle uses id 0.
constexpr VehicleId SystemVehicle{0};

using SubRouteId = std::uint32_t;

/// Sub-route id under which a vehicle parks at its depot.
constexpr SubRouteId ParkingSubRoute = 0;

std::string to_string(VehicleId v);

//==============================================================================
/// Half-open occupancy interval [start, end). `end` may be Infinity.
struct Interval
{
  double start = 0.0;
  double end = 0.0;

  bool valid() const;
  bool overlaps(const Interval& other) const
  {
    return start < other.end && other.start < end;
  }
  bool contains(const Interval& inner) const
  {
    return start <= inner.start && inner.end <= end;
  }

  friend auto operator<=>(const Interval&, const Interval&) = default;
};

struct Reservation
{
  Resource resource;
  Interval interval;
  VehicleId vehicle;
  SubRouteId subroute = 0;

  friend auto operator<=>(const Reservation&, const Reservation&) = default;
};

//==============================================================================
/// Thrown when a reservation would overlap another vehicle's.
class ConflictError : public std::runtime_error
{
public:
  ConflictError(const std::string& what, Reservation attempted,
    Reservation blocking)
  : std::runtime_error(what),
    attempted(attempted),
    blocking(blocking)
  {
    // Do nothing
  }

  Reservation attempted;
  Reservation blocking;
};

/// Overlap between two reservations of distinct vehicles.
struct Overlap
{
  Resource resource;
  VehicleId first;
  VehicleId second;
  Interval overlap;
};

struct SubRouteKey
{
  VehicleId vehicle;
  SubRouteId subroute = 0;

  friend auto operator<=>(const SubRouteKey&, const SubRouteKey&) = default;
};

//==============================================================================
/// Per-resource occupancy intervals. Reservations of distinct vehicles never
/// overlap on a resource; one vehicle's own reservations may.
///
/// Every mutation is appended to an event log (one JSON object per line),
/// which `replay` turns back into an identical table.
class ReservationTable
{
public:
  explicit ReservationTable(std::shared_ptr<const TopologicalMap> map);

  const TopologicalMap& map() const { return *_map; }
  std::shared_ptr<const TopologicalMap> map_ptr() const { return _map; }

  /// Maximal gaps between reservations on `resource`, clipped to
  /// [from, Infinity). Reservations held by `ignore` are treated as free.
  std::vector<Interval> free_windows(Resource resource, double from,
    std::optional<VehicleId> ignore = std::nullopt) const;

  /// Throws ConflictError when another vehicle holds an overlapping interval.
  void reserve(Resource resource, Interval interval, VehicleId vehicle,
    SubRouteId subroute);

  /// All-or-nothing insert of several reservations.
  void reserve_all(const std::vector<Reservation>& reservations);

  /// First reservation of a vehicle other than `vehicle` that overlaps.
  std::optional<Reservation> find_conflict(Resource resource,
    Interval interval, VehicleId vehicle) const;

  /// Removes every reservation of the sub-route. Returns the number removed.
  std::size_t release_subroute(VehicleId vehicle, SubRouteId subroute);

  /// Removes every reservation held by the vehicle.
  std::size_t release_vehicle(VehicleId vehicle);

  /// Translates the sub-route by `delta` seconds. On overlap with another
  /// vehicle nothing changes and the overlap is returned. Throws
  /// std::invalid_argument when a shifted start would become negative.
  std::optional<Overlap> shift_subroute(VehicleId vehicle, SubRouteId subroute,
    double delta);

  /// Inserts a SystemVehicle reservation. Sub-routes of vehicles that overlap
  /// the block are released whole and returned, in deterministic order.
  std::vector<SubRouteKey> block_resource(Resource resource, Interval interval);

  const std::vector<Reservation>& on(Resource resource) const;
  std::vector<Reservation> of(VehicleId vehicle, SubRouteId subroute) const;
  std::vector<Reservation> of(VehicleId vehicle) const;
  std::vector<SubRouteKey> subroutes() const;
  std::size_t size() const { return _size; }

  /// Pairwise scan for overlaps between distinct vehicles.
  std::vector<Overlap> scan_overlaps() const;

  /// Canonical text form, one reservation per line.
  std::string serialize() const;

  /// Timestamp attached to subsequent log records.
  void set_log_time(double t) { _log_time = t; }
  const std::vector<std::string>& log() const { return _log; }

  /// Rebuilds a table from log lines. Throws std::invalid_argument on a
  /// malformed record.
  static ReservationTable replay(std::shared_ptr<const TopologicalMap> map,
    const std::vector<std::string>& log);

private:
  void check_resource(Resource resource) const;
  void insert(const Reservation& r);
  std::vector<Reservation>& slot(Resource r);
  void append_log(std::string line);

  std::shared_ptr<const TopologicalMap> _map;
  std::vector<std::vector<Reservation>> _by_resource;
  std::map<SubRouteKey, std::vector<Resource>> _by_subroute;
  std::size_t _size = 0;
  double _log_time = 0.0;
  std::vector<std::string> _log;
};

} // namespace forkroute

#endif // FORKROUTE__RESERVATION_HPP
