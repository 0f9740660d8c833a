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

#include <forkroute/reservation.hpp>

#include "json_util.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <set>

namespace forkroute {

namespace {

using json = nlohmann::json;

std::string format_time(double t)
{
  if (std::isinf(t))
    return "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", t);
  return buf;
}

bool entry_less(const Reservation& a, const Reservation& b)
{
  return std::tie(a.interval.start, a.interval.end, a.vehicle, a.subroute) <
    std::tie(b.interval.start, b.interval.end, b.vehicle, b.subroute);
}

} // anonymous namespace

//==============================================================================
std::string to_string(VehicleId v)
{
  return std::to_string(v.value);
}

//==============================================================================
bool Interval::valid() const
{
  return std::isfinite(start) && start >= 0.0 && !std::isnan(end) &&
    end > start && (std::isfinite(end) || end == Infinity);
}

//==============================================================================
ReservationTable::ReservationTable(std::shared_ptr<const TopologicalMap> map)
: _map(std::move(map))
{
  if (!_map)
    throw std::invalid_argument("reservation table needs a map");
  _by_resource.resize(_map->resource_count());
}

//==============================================================================
void ReservationTable::check_resource(Resource resource) const
{
  const std::size_t limit = resource.is_node() ?
    _map->nodes().size() : _map->arcs().size();
  if (resource.index >= limit)
    throw std::out_of_range("unknown resource");
}

//==============================================================================
std::vector<Reservation>& ReservationTable::slot(Resource r)
{
  return _by_resource[_map->resource_slot(r)];
}

//==============================================================================
const std::vector<Reservation>& ReservationTable::on(Resource resource) const
{
  check_resource(resource);
  return _by_resource[_map->resource_slot(resource)];
}

//==============================================================================
std::vector<Interval> ReservationTable::free_windows(
  Resource resource,
  double from,
  std::optional<VehicleId> ignore) const
{
  const auto& entries = on(resource);
  std::vector<Interval> windows;
  double cursor = from;
  for (const auto& r : entries)
  {
    if (ignore && r.vehicle == *ignore)
      continue;
    if (r.interval.end <= cursor)
      continue;
    if (r.interval.start > cursor)
      windows.push_back({cursor, r.interval.start});
    cursor = std::max(cursor, r.interval.end);
    if (cursor == Infinity)
      break;
  }
  if (cursor < Infinity)
    windows.push_back({cursor, Infinity});
  return windows;
}

//==============================================================================
std::optional<Reservation> ReservationTable::find_conflict(
  Resource resource,
  Interval interval,
  VehicleId vehicle) const
{
  for (const auto& r : on(resource))
  {
    if (r.interval.start >= interval.end)
      break;
    if (r.vehicle != vehicle && r.interval.overlaps(interval))
      return r;
  }
  return std::nullopt;
}

//==============================================================================
void ReservationTable::insert(const Reservation& r)
{
  auto& entries = slot(r.resource);
  entries.insert(
    std::upper_bound(entries.begin(), entries.end(), r, entry_less), r);
  _by_subroute[{r.vehicle, r.subroute}].push_back(r.resource);
  ++_size;
}

//==============================================================================
void ReservationTable::append_log(std::string line)
{
  _log.push_back(std::move(line));
}

//==============================================================================
void ReservationTable::reserve(
  Resource resource,
  Interval interval,
  VehicleId vehicle,
  SubRouteId subroute)
{
  reserve_all({Reservation{resource, interval, vehicle, subroute}});
}

//==============================================================================
void ReservationTable::reserve_all(const std::vector<Reservation>& batch)
{
  for (const auto& r : batch)
  {
    check_resource(r.resource);
    if (!r.interval.valid())
    {
      throw std::invalid_argument("invalid interval [" +
        format_time(r.interval.start) + ", " + format_time(r.interval.end) +
        ") on '" + _map->resource_name(r.resource) + "'");
    }
    if (const auto blocking = find_conflict(r.resource, r.interval, r.vehicle))
    {
      throw ConflictError(
        "reservation of '" + _map->resource_name(r.resource) +
        "' for vehicle " + to_string(r.vehicle) + " overlaps vehicle " +
        to_string(blocking->vehicle) + " holding [" +
        format_time(blocking->interval.start) + ", " +
        format_time(blocking->interval.end) + ")",
        r, *blocking);
    }
  }

  // Entries inside one batch never conflict with each other unless they
  // belong to different vehicles; check those pairs too.
  for (std::size_t i = 0; i < batch.size(); ++i)
  {
    for (std::size_t j = i + 1; j < batch.size(); ++j)
    {
      const auto& a = batch[i];
      const auto& b = batch[j];
      if (a.vehicle != b.vehicle && a.resource == b.resource &&
        a.interval.overlaps(b.interval))
      {
        throw ConflictError("batch reservations overlap each other", b, a);
      }
    }
  }

  for (const auto& r : batch)
  {
    insert(r);
    json rec = {
      {"t", _log_time}, {"op", "reserve"},
      {"res", _map->resource_name(r.resource)},
      {"start", r.interval.start},
      {"end", time_to_json<json>(r.interval.end)},
      {"vehicle", r.vehicle.value}, {"subroute", r.subroute}};
    append_log(rec.dump());
  }
}

//==============================================================================
namespace {

std::size_t erase_matching(std::vector<Reservation>& entries,
  const SubRouteKey& key)
{
  const auto before = entries.size();
  entries.erase(
    std::remove_if(entries.begin(), entries.end(), [&](const Reservation& r)
    {
      return r.vehicle == key.vehicle && r.subroute == key.subroute;
    }),
    entries.end());
  return before - entries.size();
}

} // anonymous namespace

//==============================================================================
std::size_t ReservationTable::release_subroute(
  VehicleId vehicle,
  SubRouteId subroute)
{
  const SubRouteKey key{vehicle, subroute};
  const auto it = _by_subroute.find(key);
  if (it == _by_subroute.end())
    return 0;

  std::set<Resource> touched(it->second.begin(), it->second.end());
  std::size_t removed = 0;
  for (const auto& r : touched)
    removed += erase_matching(slot(r), key);
  _by_subroute.erase(it);
  _size -= removed;

  json rec = {
    {"t", _log_time}, {"op", "release"},
    {"vehicle", vehicle.value}, {"subroute", subroute}};
  append_log(rec.dump());
  return removed;
}

//==============================================================================
std::size_t ReservationTable::release_vehicle(VehicleId vehicle)
{
  std::vector<SubRouteId> ids;
  for (const auto& [key, _] : _by_subroute)
  {
    if (key.vehicle == vehicle)
      ids.push_back(key.subroute);
  }
  std::size_t removed = 0;
  for (const auto id : ids)
    removed += release_subroute(vehicle, id);
  return removed;
}

//==============================================================================
std::optional<Overlap> ReservationTable::shift_subroute(
  VehicleId vehicle,
  SubRouteId subroute,
  double delta)
{
  if (!std::isfinite(delta))
    throw std::invalid_argument("shift delta must be finite");

  const SubRouteKey key{vehicle, subroute};
  auto moved = of(vehicle, subroute);
  if (moved.empty() || delta == 0.0)
    return std::nullopt;

  for (auto& r : moved)
  {
    r.interval.start += delta;
    r.interval.end += delta;
    if (r.interval.start < 0.0)
    {
      throw std::invalid_argument("shift of sub-route " +
        std::to_string(subroute) + " by " + format_time(delta) +
        " s produces a negative start");
    }
  }

  for (const auto& r : moved)
  {
    if (const auto b = find_conflict(r.resource, r.interval, vehicle))
    {
      return Overlap{r.resource, vehicle, b->vehicle,
        Interval{std::max(r.interval.start, b->interval.start),
          std::min(r.interval.end, b->interval.end)}};
    }
  }

  std::set<Resource> touched;
  for (const auto& r : moved)
    touched.insert(r.resource);
  for (const auto& r : touched)
    _size -= erase_matching(slot(r), key);
  _by_subroute.erase(key);
  for (const auto& r : moved)
    insert(r);

  json rec = {
    {"t", _log_time}, {"op", "shift"}, {"vehicle", vehicle.value},
    {"subroute", subroute}, {"delta", delta}};
  append_log(rec.dump());
  return std::nullopt;
}

//==============================================================================
std::vector<SubRouteKey> ReservationTable::block_resource(
  Resource resource,
  Interval interval)
{
  check_resource(resource);
  if (!interval.valid())
    throw std::invalid_argument("invalid block interval");

  std::set<SubRouteKey> evicted;
  for (const auto& r : on(resource))
  {
    if (r.vehicle != SystemVehicle && r.interval.overlaps(interval))
      evicted.insert({r.vehicle, r.subroute});
  }

  for (const auto& key : evicted)
  {
    const auto it = _by_subroute.find(key);
    std::set<Resource> touched(it->second.begin(), it->second.end());
    for (const auto& r : touched)
      _size -= erase_matching(slot(r), key);
    _by_subroute.erase(it);
  }

  insert(Reservation{resource, interval, SystemVehicle, 0});
  json rec = {
    {"t", _log_time}, {"op", "block"},
    {"res", _map->resource_name(resource)},
    {"start", interval.start}, {"end", time_to_json<json>(interval.end)}};
  append_log(rec.dump());

  return {evicted.begin(), evicted.end()};
}

//==============================================================================
std::vector<Reservation> ReservationTable::of(
  VehicleId vehicle,
  SubRouteId subroute) const
{
  std::vector<Reservation> result;
  const auto it = _by_subroute.find({vehicle, subroute});
  if (it == _by_subroute.end())
    return result;
  std::set<Resource> touched(it->second.begin(), it->second.end());
  for (const auto& res : touched)
  {
    for (const auto& r : _by_resource[_map->resource_slot(res)])
    {
      if (r.vehicle == vehicle && r.subroute == subroute)
        result.push_back(r);
    }
  }
  return result;
}

//==============================================================================
std::vector<Reservation> ReservationTable::of(VehicleId vehicle) const
{
  std::vector<Reservation> result;
  for (const auto& [key, _] : _by_subroute)
  {
    if (key.vehicle != vehicle)
      continue;
    auto part = of(key.vehicle, key.subroute);
    result.insert(result.end(), part.begin(), part.end());
  }
  return result;
}

//==============================================================================
std::vector<SubRouteKey> ReservationTable::subroutes() const
{
  std::vector<SubRouteKey> keys;
  for (const auto& [key, _] : _by_subroute)
    keys.push_back(key);
  return keys;
}

//==============================================================================
std::vector<Overlap> ReservationTable::scan_overlaps() const
{
  std::vector<Overlap> found;
  for (std::size_t s = 0; s < _by_resource.size(); ++s)
  {
    const auto& entries = _by_resource[s];
    for (std::size_t i = 0; i < entries.size(); ++i)
    {
      for (std::size_t j = i + 1; j < entries.size(); ++j)
      {
        const auto& a = entries[i];
        const auto& b = entries[j];
        if (a.vehicle != b.vehicle && a.interval.overlaps(b.interval))
        {
          found.push_back({_map->resource_at_slot(s), a.vehicle, b.vehicle,
              Interval{std::max(a.interval.start, b.interval.start),
                std::min(a.interval.end, b.interval.end)}});
        }
      }
    }
  }
  return found;
}

//==============================================================================
std::string ReservationTable::serialize() const
{
  std::string out;
  for (std::size_t s = 0; s < _by_resource.size(); ++s)
  {
    const auto& name = _map->resource_name(_map->resource_at_slot(s));
    for (const auto& r : _by_resource[s])
    {
      out += name + ' ' + format_time(r.interval.start) + ' ' +
        format_time(r.interval.end) + ' ' + to_string(r.vehicle) + ' ' +
        std::to_string(r.subroute) + '\n';
    }
  }
  return out;
}

//==============================================================================
ReservationTable ReservationTable::replay(
  std::shared_ptr<const TopologicalMap> map,
  const std::vector<std::string>& log)
{
  ReservationTable table(std::move(map));
  for (std::size_t i = 0; i < log.size(); ++i)
  {
    try
    {
      const auto rec = json::parse(log[i]);
      table.set_log_time(rec.at("t").get<double>());
      const auto op = rec.at("op").get<std::string>();
      auto resource = [&]()
        {
          const auto name = rec.at("res").get<std::string>();
          const auto r = table.map().find_resource(name);
          if (!r)
            throw std::invalid_argument("unknown resource '" + name + "'");
          return *r;
        };
      auto interval = [&]()
        {
          return Interval{rec.at("start").get<double>(),
            time_from_json(rec.at("end"))};
        };
      if (op == "reserve")
      {
        table.reserve(resource(), interval(),
          VehicleId{rec.at("vehicle").get<std::uint32_t>()},
          rec.at("subroute").get<SubRouteId>());
      }
      else if (op == "release")
      {
        table.release_subroute(
          VehicleId{rec.at("vehicle").get<std::uint32_t>()},
          rec.at("subroute").get<SubRouteId>());
      }
      else if (op == "shift")
      {
        const auto overlap = table.shift_subroute(
          VehicleId{rec.at("vehicle").get<std::uint32_t>()},
          rec.at("subroute").get<SubRouteId>(),
          rec.at("delta").get<double>());
        if (overlap)
          throw std::invalid_argument("logged shift does not replay");
      }
      else if (op == "block")
        table.block_resource(resource(), interval());
      else
        throw std::invalid_argument("unknown op '" + op + "'");
    }
    catch (const std::exception& e)
    {
      throw std::invalid_argument("log record " + std::to_string(i + 1) +
        ": " + e.what());
    }
  }
  return table;
}

} // namespace forkroute
