// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0
//
// Random placement and the greedy balancing strategies used as human
// baselines: sort tables by a per-table cost estimate descending, then
// assign each to the legal device with the lowest running cost sum.

#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "shardplan/error.hpp"
#include "shardplan/oracle.hpp"
#include "shardplan/rng.hpp"
#include "shardplan/table.hpp"

namespace shardplan {

/// Uniform over the devices that still have room, table by table in id
/// order.
inline Placement random_placement(const PlacementTask& task, Rng& rng) {
  const int D = task.num_devices;
  std::vector<double> mem(D, 0.0);
  Placement p(task.tables.size());
  for (std::size_t i = 0; i < task.tables.size(); ++i) {
    const double need = task.tables[i].table_size_gb;
    std::vector<int> legal;
    for (int d = 0; d < D; ++d)
      if (mem[d] + need <= task.mem_cap_gb) legal.push_back(d);
    if (legal.empty())
      raise(ErrorKind::infeasible,
            "table " + std::to_string(i) + " does not fit on any device");
    const int d = legal[rng.index(legal.size())];
    p[i] = d;
    mem[d] += need;
  }
  return p;
}

/// Longest-processing-time style greedy balance of cost_fn. Ties in the
/// sort go to the lower table id; ties in the device choice go to the
/// lower device index.
inline Placement greedy_placement(
    const PlacementTask& task,
    const std::function<double(const TableDesc&)>& cost_fn) {
  const int D = task.num_devices;
  std::vector<int> order(task.tables.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> cost(task.tables.size());
  for (std::size_t i = 0; i < task.tables.size(); ++i)
    cost[i] = cost_fn(task.tables[i]);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (cost[a] != cost[b]) return cost[a] > cost[b];
    return a < b;
  });

  std::vector<double> load(D, 0.0);
  std::vector<double> mem(D, 0.0);
  Placement p(task.tables.size());
  for (int id : order) {
    const double need = task.tables[id].table_size_gb;
    int best = -1;
    for (int d = 0; d < D; ++d) {
      if (mem[d] + need > task.mem_cap_gb) continue;
      if (best < 0 || load[d] < load[best]) best = d;
    }
    if (best < 0)
      raise(ErrorKind::infeasible,
            "table " + std::to_string(id) + " does not fit on any device");
    p[id] = best;
    load[best] += cost[id];
    mem[best] += need;
  }
  return p;
}

enum class ExpertStrategy { size, dim, lookup, size_lookup };

inline const char* expert_name(ExpertStrategy s) {
  switch (s) {
    case ExpertStrategy::size: return "size";
    case ExpertStrategy::dim: return "dim";
    case ExpertStrategy::lookup: return "lookup";
    case ExpertStrategy::size_lookup: return "size-lookup";
  }
  return "?";
}

inline ExpertStrategy expert_from_name(const std::string& s) {
  if (s == "size") return ExpertStrategy::size;
  if (s == "dim") return ExpertStrategy::dim;
  if (s == "lookup") return ExpertStrategy::lookup;
  if (s == "size-lookup") return ExpertStrategy::size_lookup;
  raise(ErrorKind::bad_input, "unknown expert strategy: " + s);
}

inline double expert_cost(ExpertStrategy s, const TableDesc& t) {
  switch (s) {
    case ExpertStrategy::size: return t.table_size_gb;
    case ExpertStrategy::dim: return static_cast<double>(t.dim);
    case ExpertStrategy::lookup: return t.dim * t.pooling_factor;
    case ExpertStrategy::size_lookup:
      return t.dim * t.pooling_factor * t.table_size_gb;
  }
  return 0.0;
}

inline Placement expert_placement(const PlacementTask& task, ExpertStrategy s) {
  return greedy_placement(task,
                          [s](const TableDesc& t) { return expert_cost(s, t); });
}

inline const std::vector<ExpertStrategy>& all_expert_strategies() {
  static const std::vector<ExpertStrategy> all = {
      ExpertStrategy::size, ExpertStrategy::dim, ExpertStrategy::lookup,
      ExpertStrategy::size_lookup};
  return all;
}

}  // namespace shardplan
