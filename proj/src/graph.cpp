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

#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <queue>
#include <sstream>

namespace forkroute {

namespace {
constexpr double LengthTolerance = 1e-3;

const char* kind_names[] = {
  "junction", "loading_station", "unloading_station", "depot"};
} // anonymous namespace

//==============================================================================
std::string_view to_string(NodeKind kind)
{
  return kind_names[static_cast<int>(kind)];
}

//==============================================================================
std::optional<NodeKind> node_kind_from_string(std::string_view text)
{
  for (int i = 0; i < 4; ++i)
  {
    if (text == kind_names[i])
      return static_cast<NodeKind>(i);
  }
  return std::nullopt;
}

//==============================================================================
TopologicalMap::TopologicalMap(
  Bounds bounds,
  std::vector<Node> nodes,
  const std::vector<ArcSpec>& arcs)
: _bounds(bounds),
  _nodes(std::move(nodes))
{
  if (!std::isfinite(_bounds.width) || !std::isfinite(_bounds.height) ||
    _bounds.width <= 0.0 || _bounds.height <= 0.0)
  {
    throw MapError(MapError::Code::NonFinite,
      "map bounds must be finite and positive");
  }

  for (std::size_t i = 0; i < _nodes.size(); ++i)
  {
    const auto& n = _nodes[i];
    if (!_ids.emplace(n.id, Resource::node(i)).second)
      throw MapError(MapError::Code::DuplicateId, "duplicate id '" + n.id + "'");

    if (!std::isfinite(n.position.x) || !std::isfinite(n.position.y))
    {
      throw MapError(MapError::Code::NonFinite,
        "node '" + n.id + "' has a non-finite position");
    }

    if (n.position.x < 0.0 || n.position.x > _bounds.width ||
      n.position.y < 0.0 || n.position.y > _bounds.height)
    {
      throw MapError(MapError::Code::OutOfBounds,
        "node '" + n.id + "' lies outside the map bounds");
    }
  }

  _arcs.reserve(arcs.size());
  for (const auto& spec : arcs)
  {
    const auto from = _ids.find(spec.from);
    const auto to = _ids.find(spec.to);
    if (from == _ids.end() || !from->second.is_node())
    {
      throw MapError(MapError::Code::DanglingEndpoint,
        "arc '" + spec.id + "' references unknown node '" + spec.from + "'");
    }
    if (to == _ids.end() || !to->second.is_node())
    {
      throw MapError(MapError::Code::DanglingEndpoint,
        "arc '" + spec.id + "' references unknown node '" + spec.to + "'");
    }
    if (from->second.index == to->second.index)
    {
      throw MapError(MapError::Code::SelfLoop,
        "arc '" + spec.id + "' is a self-loop");
    }

    const auto& p = _nodes[from->second.index].position;
    const auto& q = _nodes[to->second.index].position;
    const double euclid = std::hypot(q.x - p.x, q.y - p.y);
    const double length = spec.length.value_or(euclid);
    if (!(length > 0.0) || !(euclid > 0.0))
    {
      throw MapError(MapError::Code::NonPositiveLength,
        "arc '" + spec.id + "' has non-positive length");
    }
    if (std::abs(length - euclid) > LengthTolerance * euclid)
    {
      throw MapError(MapError::Code::LengthMismatch,
        "arc '" + spec.id + "' length differs from its endpoint distance");
    }

    const std::size_t index = _arcs.size();
    if (!_ids.emplace(spec.id, Resource::arc(index)).second)
    {
      throw MapError(MapError::Code::DuplicateId,
        "duplicate id '" + spec.id + "'");
    }

    _arcs.push_back(Arc{spec.id, from->second.index, to->second.index,
        length, spec.direction});
  }

  _outgoing.resize(_nodes.size());
  for (std::size_t i = 0; i < _arcs.size(); ++i)
  {
    const auto& a = _arcs[i];
    _outgoing[a.from].push_back(Traversal{i, false});
    if (a.direction == ArcDirection::Bidirectional)
      _outgoing[a.to].push_back(Traversal{i, true});
  }
  for (auto& out : _outgoing)
    std::sort(out.begin(), out.end());

  // Weak connectivity over the union of traversable directions.
  if (!_nodes.empty())
  {
    std::vector<std::size_t> parent(_nodes.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x)
      {
        while (parent[x] != x)
        {
          parent[x] = parent[parent[x]];
          x = parent[x];
        }
        return x;
      };
    std::size_t components = _nodes.size();
    for (const auto& a : _arcs)
    {
      const auto ra = find(a.from);
      const auto rb = find(a.to);
      if (ra != rb)
      {
        parent[ra] = rb;
        --components;
      }
    }
    if (components != 1)
    {
      throw MapError(MapError::Code::Disconnected,
        "map graph is disconnected (" + std::to_string(components) +
        " components)");
    }
  }

  std::vector<std::size_t> order(_nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b)
    {
      return _nodes[a].id < _nodes[b].id;
    });
  _lex_rank.resize(_nodes.size());
  for (std::size_t r = 0; r < order.size(); ++r)
    _lex_rank[order[r]] = r;
}

//==============================================================================
std::optional<std::size_t> TopologicalMap::find_node(std::string_view id) const
{
  const auto it = _ids.find(std::string(id));
  if (it == _ids.end() || !it->second.is_node())
    return std::nullopt;
  return it->second.index;
}

//==============================================================================
std::optional<std::size_t> TopologicalMap::find_arc(std::string_view id) const
{
  const auto it = _ids.find(std::string(id));
  if (it == _ids.end() || !it->second.is_arc())
    return std::nullopt;
  return it->second.index;
}

//==============================================================================
std::optional<Resource> TopologicalMap::find_resource(std::string_view id) const
{
  const auto it = _ids.find(std::string(id));
  if (it == _ids.end())
    return std::nullopt;
  return it->second;
}

//==============================================================================
std::size_t TopologicalMap::node_index(std::string_view id) const
{
  if (const auto i = find_node(id))
    return *i;
  throw MapError(MapError::Code::UnknownId,
    "unknown node '" + std::string(id) + "'");
}

//==============================================================================
std::size_t TopologicalMap::arc_index(std::string_view id) const
{
  if (const auto i = find_arc(id))
    return *i;
  throw MapError(MapError::Code::UnknownId,
    "unknown arc '" + std::string(id) + "'");
}

//==============================================================================
const std::string& TopologicalMap::resource_name(Resource r) const
{
  return r.is_node() ? _nodes.at(r.index).id : _arcs.at(r.index).id;
}

//==============================================================================
Point TopologicalMap::direction(Traversal t) const
{
  const auto& p = _nodes[tail(t)].position;
  const auto& q = _nodes[head(t)].position;
  const double dx = q.x - p.x;
  const double dy = q.y - p.y;
  const double n = std::hypot(dx, dy);
  return {dx / n, dy / n};
}

//==============================================================================
namespace {

std::string position_of(std::string_view text, std::size_t byte)
{
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
  {
    if (text[i] == '\n')
    {
      ++line;
      column = 1;
    }
    else
      ++column;
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

void require_keys(const nlohmann::json& obj, const char* what,
  std::initializer_list<const char*> allowed,
  std::initializer_list<const char*> required)
{
  if (!obj.is_object())
  {
    throw MapError(MapError::Code::Syntax,
      std::string(what) + " must be an object");
  }
  for (const auto& [key, value] : obj.items())
  {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
        [&](const char* k) { return key == k; });
    if (!known)
    {
      throw MapError(MapError::Code::UnknownKey,
        "unknown key '" + key + "' in " + what);
    }
  }
  for (const char* k : required)
  {
    if (!obj.contains(k))
    {
      throw MapError(MapError::Code::MissingKey,
        std::string("missing key '") + k + "' in " + what);
    }
  }
}

double number(const nlohmann::json& v, const std::string& what)
{
  if (!v.is_number())
    throw MapError(MapError::Code::Syntax, what + " must be a number");
  return v.get<double>();
}

std::string text(const nlohmann::json& v, const std::string& what)
{
  if (!v.is_string())
    throw MapError(MapError::Code::Syntax, what + " must be a string");
  return v.get<std::string>();
}

} // anonymous namespace

//==============================================================================
TopologicalMap parse_map(std::string_view input)
{
  nlohmann::json doc;
  try
  {
    doc = nlohmann::json::parse(input.begin(), input.end());
  }
  catch (const nlohmann::json::parse_error& e)
  {
    throw MapError(MapError::Code::Syntax,
      "syntax error at " + position_of(input, e.byte == 0 ? 0 : e.byte - 1) +
      ": " + e.what());
  }

  require_keys(doc, "map", {"bounds", "nodes", "arcs"},
    {"bounds", "nodes", "arcs"});

  const auto& b = doc["bounds"];
  require_keys(b, "bounds", {"width", "height"}, {"width", "height"});
  const TopologicalMap::Bounds bounds{
    number(b["width"], "bounds.width"), number(b["height"], "bounds.height")};

  if (!doc["nodes"].is_array())
    throw MapError(MapError::Code::Syntax, "'nodes' must be an array");
  if (!doc["arcs"].is_array())
    throw MapError(MapError::Code::Syntax, "'arcs' must be an array");

  std::vector<Node> nodes;
  for (const auto& n : doc["nodes"])
  {
    require_keys(n, "node", {"id", "x", "y", "kind"}, {"id", "x", "y"});
    Node node;
    node.id = text(n["id"], "node id");
    node.position = {number(n["x"], "node x"), number(n["y"], "node y")};
    if (n.contains("kind"))
    {
      const auto kind = node_kind_from_string(text(n["kind"], "node kind"));
      if (!kind)
      {
        throw MapError(MapError::Code::Syntax,
          "node '" + node.id + "' has unknown kind");
      }
      node.kind = *kind;
    }
    nodes.push_back(std::move(node));
  }

  std::vector<TopologicalMap::ArcSpec> arcs;
  for (const auto& a : doc["arcs"])
  {
    require_keys(a, "arc", {"id", "from", "to", "direction", "length"},
      {"id", "from", "to"});
    TopologicalMap::ArcSpec spec;
    spec.id = text(a["id"], "arc id");
    spec.from = text(a["from"], "arc from");
    spec.to = text(a["to"], "arc to");
    if (a.contains("direction"))
    {
      const auto d = text(a["direction"], "arc direction");
      if (d == "one_way")
        spec.direction = ArcDirection::OneWay;
      else if (d == "bidirectional")
        spec.direction = ArcDirection::Bidirectional;
      else
      {
        throw MapError(MapError::Code::Syntax,
          "arc '" + spec.id + "' has unknown direction '" + d + "'");
      }
    }
    if (a.contains("length"))
      spec.length = number(a["length"], "arc length");
    arcs.push_back(std::move(spec));
  }

  return TopologicalMap(bounds, std::move(nodes), arcs);
}

//==============================================================================
TopologicalMap load_map(const std::string& path)
{
  return parse_map(read_file(path));
}

//==============================================================================
std::string render_map(const TopologicalMap& map)
{
  nlohmann::ordered_json doc;
  doc["bounds"] = {
    {"width", map.bounds().width}, {"height", map.bounds().height}};
  doc["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : map.nodes())
  {
    doc["nodes"].push_back({
        {"id", n.id},
        {"x", n.position.x},
        {"y", n.position.y},
        {"kind", std::string(to_string(n.kind))}});
  }
  doc["arcs"] = nlohmann::ordered_json::array();
  for (const auto& a : map.arcs())
  {
    doc["arcs"].push_back({
        {"id", a.id},
        {"from", map.node(a.from).id},
        {"to", map.node(a.to).id},
        {"direction",
          a.direction == ArcDirection::OneWay ? "one_way" : "bidirectional"},
        {"length", a.length}});
  }
  return doc.dump(2) + "\n";
}

//==============================================================================
TurnAngle angle_between(Point a, Point b)
{
  const double dot = a.x * b.x + a.y * b.y;
  const double cross = a.x * b.y - a.y * b.x;
  double deg = std::atan2(std::abs(cross), dot) * 180.0 / M_PI;
  // Snap round-off so axis-aligned turns come out exact.
  const double snapped = std::round(deg * 1e9) / 1e9;
  deg = std::clamp(snapped, 0.0, 180.0);
  return TurnAngle{deg};
}

//==============================================================================
TurnAngle turn_angle(const TopologicalMap& map, Traversal incoming,
  Traversal outgoing)
{
  if (map.head(incoming) != map.tail(outgoing))
  {
    throw MapError(MapError::Code::NotIncident,
      "arcs '" + map.arc(incoming.arc).id + "' and '" +
      map.arc(outgoing.arc).id + "' do not meet at a shared node");
  }
  return angle_between(map.direction(incoming), map.direction(outgoing));
}

//==============================================================================
TurnAngle turn_angle(const TopologicalMap& map, std::size_t incoming_arc,
  std::size_t outgoing_arc)
{
  return turn_angle(map, Traversal{incoming_arc, false},
    Traversal{outgoing_arc, false});
}

//==============================================================================
StaticPath static_shortest_path(const TopologicalMap& map, std::size_t origin,
  std::size_t dest)
{
  const std::size_t n = map.nodes().size();
  if (origin >= n || dest >= n)
    throw MapError(MapError::Code::UnknownId, "unknown origin or destination");

  StaticPath result;
  if (origin == dest)
    return result;

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, inf);
  std::vector<std::optional<Traversal>> via(n);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[origin] = 0.0;
  queue.emplace(0.0, origin);
  while (!queue.empty())
  {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u])
      continue;
    if (u == dest)
      break;
    for (const auto& t : map.outgoing(u))
    {
      const auto v = map.head(t);
      const double nd = d + map.arc(t.arc).length;
      if (nd < dist[v])
      {
        dist[v] = nd;
        via[v] = t;
        queue.emplace(nd, v);
      }
    }
  }

  if (dist[dest] == inf)
  {
    throw MapError(MapError::Code::Unreachable,
      "destination '" + map.node(dest).id + "' is unreachable from '" +
      map.node(origin).id + "'");
  }

  for (std::size_t v = dest; v != origin; v = map.tail(*via[v]))
  {
    result.nodes.push_back(v);
    result.traversals.push_back(*via[v]);
  }
  result.nodes.push_back(origin);
  std::reverse(result.nodes.begin(), result.nodes.end());
  std::reverse(result.traversals.begin(), result.traversals.end());
  result.length = dist[dest];
  return result;
}

} // namespace forkroute
