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

#ifndef FORKROUTE__TESTS__FIXTURES_HPP
#define FORKROUTE__TESTS__FIXTURES_HPP

#include <forkroute/graph.hpp>

#include <algorithm>
#include <cstdlib>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace forkroute::test {

struct NodeDef
{
  std::string id;
  double x;
  double y;
  NodeKind kind = NodeKind::Junction;
};

struct ArcDef
{
  std::string from;
  std::string to;
  bool one_way = false;
};

inline std::shared_ptr<const TopologicalMap> make_map(
  const std::vector<NodeDef>& nodes, const std::vector<ArcDef>& arcs,
  double width = 100.0, double height = 100.0)
{
  std::vector<Node> n;
  for (const auto& d : nodes)
    n.push_back(Node{d.id, Point{d.x, d.y}, d.kind});
  std::vector<TopologicalMap::ArcSpec> a;
  for (const auto& d : arcs)
  {
    TopologicalMap::ArcSpec spec;
    spec.id = d.from + d.to;
    spec.from = d.from;
    spec.to = d.to;
    spec.direction = d.one_way ?
      ArcDirection::OneWay : ArcDirection::Bidirectional;
    a.push_back(spec);
  }
  return std::make_shared<const TopologicalMap>(
    TopologicalMap::Bounds{width, height}, std::move(n), a);
}

/// A-B-C along the x axis, 10 m apart.
inline std::shared_ptr<const TopologicalMap> line_map()
{
  return make_map({{"A", 0, 0}, {"B", 10, 0}, {"C", 20, 0}},
    {{"A", "B"}, {"B", "C"}});
}

/// rows x cols grid, spacing metres apart, ids "r<row>c<col>".
inline std::shared_ptr<const TopologicalMap> grid_map(int rows, int cols,
  double spacing = 10.0)
{
  std::vector<NodeDef> nodes;
  std::vector<ArcDef> arcs;
  auto id = [](int r, int c)
    { return "r" + std::to_string(r) + "c" + std::to_string(c); };
  for (int r = 0; r < rows; ++r)
  {
    for (int c = 0; c < cols; ++c)
    {
      nodes.push_back({id(r, c), c * spacing, r * spacing});
      if (c + 1 < cols)
        arcs.push_back({id(r, c), id(r, c + 1)});
      if (r + 1 < rows)
        arcs.push_back({id(r, c), id(r + 1, c)});
    }
  }
  return make_map(nodes, arcs, (cols - 1) * spacing + 1,
    (rows - 1) * spacing + 1);
}

/// 3x4 junction grid J<r><c> (10 m spacing, origin at 10,10) with loading
/// stations L<c> above the top row, unloading stations U<c> below the
/// bottom row and depots D0..D2 west, D3..D5 east of the rows.
inline std::shared_ptr<const TopologicalMap> depot_grid_map()
{
  std::vector<NodeDef> nodes;
  std::vector<ArcDef> arcs;
  auto j = [](int r, int c)
    { return "J" + std::to_string(r) + std::to_string(c); };
  for (int r = 0; r < 3; ++r)
  {
    for (int c = 0; c < 4; ++c)
    {
      nodes.push_back({j(r, c), 10.0 + 10 * c, 10.0 + 10 * r});
      if (c + 1 < 4)
        arcs.push_back({j(r, c), j(r, c + 1)});
      if (r + 1 < 3)
        arcs.push_back({j(r, c), j(r + 1, c)});
    }
  }
  for (int c = 0; c < 4; ++c)
  {
    const auto k = std::to_string(c);
    nodes.push_back({"L" + k, 10.0 + 10 * c, 40.0, NodeKind::LoadingStation});
    nodes.push_back({"U" + k, 10.0 + 10 * c, 0.0, NodeKind::UnloadingStation});
    arcs.push_back({j(2, c), "L" + k});
    arcs.push_back({j(0, c), "U" + k});
  }
  for (int r = 0; r < 3; ++r)
  {
    const auto west = "D" + std::to_string(r);
    const auto east = "D" + std::to_string(r + 3);
    nodes.push_back({west, 0.0, 10.0 + 10 * r, NodeKind::Depot});
    nodes.push_back({east, 50.0, 10.0 + 10 * r, NodeKind::Depot});
    arcs.push_back({west, j(r, 0)});
    arcs.push_back({j(r, 3), east});
  }
  return make_map(nodes, arcs, 51, 41);
}

/// Random connected map on integer grid positions: a spanning tree of
/// axis-aligned arcs plus extra axis-aligned chords.
inline std::shared_ptr<const TopologicalMap> random_grid_map(std::mt19937& rng,
  int max_nodes, int max_arcs, bool allow_one_way = true)
{
  // Nodes sit on a 3x3 lattice of spacing 2..6 m so all arcs are axis-aligned.
  std::uniform_int_distribution<int> spacing_d(2, 6);
  const int sx = spacing_d(rng);
  const int sy = spacing_d(rng);
  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      cells.push_back({r, c});
  std::shuffle(cells.begin(), cells.end(), rng);

  std::uniform_int_distribution<int> count_d(3, max_nodes);
  const int n = count_d(rng);

  // Grow a connected set of lattice cells.
  std::vector<std::pair<int, int>> chosen{cells.front()};
  std::vector<ArcDef> arcs;
  auto name = [](std::pair<int, int> c)
    { return "n" + std::to_string(c.first) + std::to_string(c.second); };
  auto adjacent = [](std::pair<int, int> a, std::pair<int, int> b)
    { return std::abs(a.first - b.first) + std::abs(a.second - b.second) == 1; };

  while (static_cast<int>(chosen.size()) < n)
  {
    std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> frontier;
    for (const auto& c : cells)
    {
      if (std::find(chosen.begin(), chosen.end(), c) != chosen.end())
        continue;
      for (const auto& k : chosen)
        if (adjacent(c, k))
          frontier.push_back({k, c});
    }
    if (frontier.empty())
      break;
    std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
    const auto [from, to] = frontier[pick(rng)];
    chosen.push_back(to);
    arcs.push_back({name(from), name(to)});
  }

  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < chosen.size(); ++i)
  {
    for (std::size_t j = i + 1; j < chosen.size(); ++j)
    {
      if (static_cast<int>(arcs.size()) >= max_arcs)
        break;
      if (!adjacent(chosen[i], chosen[j]))
        continue;
      const auto a = name(chosen[i]);
      const auto b = name(chosen[j]);
      const bool exists = std::any_of(arcs.begin(), arcs.end(),
          [&](const ArcDef& d)
          {
            return (d.from == a && d.to == b) || (d.from == b && d.to == a);
          });
      if (!exists && coin(rng))
        arcs.push_back({a, b});
    }
  }

  // A few one-way arcs that keep weak connectivity.
  if (allow_one_way)
  {
    std::bernoulli_distribution one_way(0.2);
    for (auto& a : arcs)
      if (one_way(rng))
      {
        a.one_way = true;
        if (coin(rng))
          std::swap(a.from, a.to);
      }
  }

  std::vector<NodeDef> nodes;
  for (const auto& c : chosen)
    nodes.push_back({name(c), double(c.second * sx), double(c.first * sy)});
  return make_map(nodes, arcs, 2 * sx + 1, 2 * sy + 1);
}

} // namespace forkroute::test

#endif // FORKROUTE__TESTS__FIXTURES_HPP
