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

#ifndef FORKROUTE__GRAPH_HPP
#define FORKROUTE__GRAPH_HPP

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace forkroute {

//==============================================================================
enum class NodeKind : std::uint8_t
{
  Junction,
  LoadingStation,
  UnloadingStation,
  Depot
};

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> node_kind_from_string(std::string_view text);

enum class ArcDirection : std::uint8_t
{
  OneWay,
  Bidirectional
};

//==============================================================================
struct Point
{
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Node
{
  std::string id;
  Point position;
  NodeKind kind = NodeKind::Junction;

  friend bool operator==(const Node&, const Node&) = default;
};

/// A straight aisle segment between two nodes. Curvature lives at nodes.
struct Arc
{
  std::string id;
  std::size_t from = 0;
  std::size_t to = 0;
  double length = 0.0;
  ArcDirection direction = ArcDirection::Bidirectional;

  friend bool operator==(const Arc&, const Arc&) = default;
};

/// An arc as actually driven. Bidirectional arcs may be traversed reversed.
struct Traversal
{
  std::size_t arc = 0;
  bool reversed = false;

  friend auto operator<=>(const Traversal&, const Traversal&) = default;
};

/// Anything a vehicle can occupy: a node or an arc.
struct Resource
{
  enum class Kind : std::uint8_t { Node, Arc };

  Kind kind = Kind::Node;
  std::size_t index = 0;

  static Resource node(std::size_t i) { return {Kind::Node, i}; }
  static Resource arc(std::size_t i) { return {Kind::Arc, i}; }

  bool is_node() const { return kind == Kind::Node; }
  bool is_arc() const { return kind == Kind::Arc; }

  friend auto operator<=>(const Resource&, const Resource&) = default;
};

/// Turn angle in degrees, always in [0, 180]. Zero means straight through.
struct TurnAngle
{
  double value = 0.0;

  friend auto operator<=>(const TurnAngle&, const TurnAngle&) = default;
};

//==============================================================================
class MapError : public std::runtime_error
{
public:
  enum class Code
  {
    Syntax,
    UnknownKey,
    MissingKey,
    DuplicateId,
    DanglingEndpoint,
    SelfLoop,
    NonPositiveLength,
    LengthMismatch,
    OutOfBounds,
    Disconnected,
    NonFinite,
    UnknownId,
    NotIncident,
    Unreachable
  };

  MapError(Code code, const std::string& what)
  : std::runtime_error(what),
    _code(code)
  {
    // Do nothing
  }

  Code code() const { return _code; }

private:
  Code _code;
};

//==============================================================================
/// Immutable topological warehouse map. Safe to share read-only.
class TopologicalMap
{
public:
  struct Bounds
  {
    double width = 0.0;
    double height = 0.0;
    friend bool operator==(const Bounds&, const Bounds&) = default;
  };

  /// Validates every invariant; throws MapError on the first violation.
  /// Arcs carry endpoint ids; lengths are derived from node positions when
  /// not given.
  struct ArcSpec
  {
    std::string id;
    std::string from;
    std::string to;
    ArcDirection direction = ArcDirection::Bidirectional;
    std::optional<double> length;
  };

  TopologicalMap(Bounds bounds, std::vector<Node> nodes,
    const std::vector<ArcSpec>& arcs);

  const Bounds& bounds() const { return _bounds; }
  const std::vector<Node>& nodes() const { return _nodes; }
  const std::vector<Arc>& arcs() const { return _arcs; }

  const Node& node(std::size_t i) const { return _nodes.at(i); }
  const Arc& arc(std::size_t i) const { return _arcs.at(i); }

  std::optional<std::size_t> find_node(std::string_view id) const;
  std::optional<std::size_t> find_arc(std::string_view id) const;
  std::optional<Resource> find_resource(std::string_view id) const;

  std::size_t node_index(std::string_view id) const;
  std::size_t arc_index(std::string_view id) const;

  /// Resources are numbered nodes first, then arcs.
  std::size_t resource_count() const { return _nodes.size() + _arcs.size(); }
  std::size_t resource_slot(Resource r) const
  {
    return r.is_node() ? r.index : _nodes.size() + r.index;
  }
  Resource resource_at_slot(std::size_t slot) const
  {
    return slot < _nodes.size() ?
      Resource::node(slot) : Resource::arc(slot - _nodes.size());
  }
  const std::string& resource_name(Resource r) const;

  /// Traversals leaving a node, in deterministic (arc index, forward first)
  /// order.
  const std::vector<Traversal>& outgoing(std::size_t node) const
  {
    return _outgoing.at(node);
  }

  std::size_t tail(Traversal t) const
  {
    const auto& a = _arcs[t.arc];
    return t.reversed ? a.to : a.from;
  }
  std::size_t head(Traversal t) const
  {
    const auto& a = _arcs[t.arc];
    return t.reversed ? a.from : a.to;
  }

  /// Unit direction of travel, as (dx, dy).
  Point direction(Traversal t) const;

  /// Position of the lexicographic rank of each node id, used as a total
  /// tie-breaker.
  std::size_t lexicographic_rank(std::size_t node) const
  {
    return _lex_rank[node];
  }

  friend bool operator==(const TopologicalMap& a, const TopologicalMap& b)
  {
    return a._bounds == b._bounds && a._nodes == b._nodes &&
      a._arcs == b._arcs;
  }

private:
  Bounds _bounds;
  std::vector<Node> _nodes;
  std::vector<Arc> _arcs;
  std::unordered_map<std::string, Resource> _ids;
  std::vector<std::vector<Traversal>> _outgoing;
  std::vector<std::size_t> _lex_rank;
};

//==============================================================================
/// Parses the JSON map document. Throws MapError.
TopologicalMap parse_map(std::string_view text);

/// Reads and parses a map file.
TopologicalMap load_map(const std::string& path);

/// Renders a map back into the map document format.
std::string render_map(const TopologicalMap& map);

/// Angle between two direction vectors in degrees, in [0, 180].
TurnAngle angle_between(Point a, Point b);

/// Turn needed when leaving `outgoing` right after arriving on `incoming`.
/// Throws MapError::NotIncident when the traversals do not meet.
TurnAngle turn_angle(const TopologicalMap& map, Traversal incoming,
  Traversal outgoing);

/// Same, for arcs driven in their stored from→to direction.
TurnAngle turn_angle(const TopologicalMap& map, std::size_t incoming_arc,
  std::size_t outgoing_arc);

struct StaticPath
{
  std::vector<std::size_t> nodes;
  std::vector<Traversal> traversals;
  double length = 0.0;
};

/// Plain Dijkstra on arc lengths, ignoring time. Empty path when
/// origin == dest. Throws MapError::Unreachable.
StaticPath static_shortest_path(const TopologicalMap& map, std::size_t origin,
  std::size_t dest);

} // namespace forkroute

#endif // FORKROUTE__GRAPH_HPP
