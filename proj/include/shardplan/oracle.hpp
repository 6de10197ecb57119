// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic stand-in for multi-GPU execution of embedding lookups: kernel
// costs for single and fused table sets, all-to-all communication stage
// costs, whole-placement evaluation with a stage trace, and brute-force
// optimal search for small instances.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shardplan/error.hpp"
#include "shardplan/rng.hpp"
#include "shardplan/table.hpp"

namespace shardplan {

struct OracleConfig {
  double kappa_f = 4.0e-9;   // ms per (index * column) of forward lookup
  double c_h = 0.05;         // hash-size cache penalty per doubling past 2^20
  double c_s = 0.3;          // discount for access mass on hot indices
  double bwd_ratio = 2.0;    // backward / forward compute ratio
  double fusion_k0 = 8.0;    // fusion speedup saturation constant
  double fusion_cap = 3.0;   // max fusion speedup
  double comm_a0 = 8.39;     // all-to-all base latency, ms at batch 65536
  double comm_a1 = 0.011128; // ms per dimension unit, calibrated at 4 devices
  double jitter_eps = 0.0;   // multiplicative noise half-width, 0 = off
};

inline nlohmann::json oracle_config_to_json(const OracleConfig& c) {
  return {{"kappa_f", c.kappa_f},   {"c_h", c.c_h},
          {"c_s", c.c_s},           {"bwd_ratio", c.bwd_ratio},
          {"fusion_k0", c.fusion_k0}, {"fusion_cap", c.fusion_cap},
          {"comm_a0", c.comm_a0},   {"comm_a1", c.comm_a1},
          {"jitter_eps", c.jitter_eps}};
}

inline OracleConfig oracle_config_from_json(const nlohmann::json& j) {
  OracleConfig c;
  try {
    if (j.contains("kappa_f")) c.kappa_f = j.at("kappa_f").get<double>();
    if (j.contains("c_h")) c.c_h = j.at("c_h").get<double>();
    if (j.contains("c_s")) c.c_s = j.at("c_s").get<double>();
    if (j.contains("bwd_ratio")) c.bwd_ratio = j.at("bwd_ratio").get<double>();
    if (j.contains("fusion_k0")) c.fusion_k0 = j.at("fusion_k0").get<double>();
    if (j.contains("fusion_cap")) c.fusion_cap = j.at("fusion_cap").get<double>();
    if (j.contains("comm_a0")) c.comm_a0 = j.at("comm_a0").get<double>();
    if (j.contains("comm_a1")) c.comm_a1 = j.at("comm_a1").get<double>();
    if (j.contains("jitter_eps")) c.jitter_eps = j.at("jitter_eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::bad_input, std::string("bad oracle config: ") + e.what());
  }
  return c;
}

/// One placement task: the tables, the device count, and a per-device
/// memory cap.
struct PlacementTask {
  std::vector<TableDesc> tables;
  int num_devices = 1;
  double mem_cap_gb = 0.0;
  int batch_size = kDefaultBatchSize;
};

/// Device assignment indexed by table id; entries in [0, num_devices).
using Placement = std::vector<int>;

enum class Phase { fwd_comp, fwd_comm, bwd_comm, bwd_comp };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::fwd_comp: return "fwd_comp";
    case Phase::fwd_comm: return "fwd_comm";
    case Phase::bwd_comm: return "bwd_comm";
    case Phase::bwd_comp: return "bwd_comp";
  }
  return "?";
}

inline Phase phase_from_name(const std::string& s) {
  if (s == "fwd_comp") return Phase::fwd_comp;
  if (s == "fwd_comm") return Phase::fwd_comm;
  if (s == "bwd_comm") return Phase::bwd_comm;
  if (s == "bwd_comp") return Phase::bwd_comp;
  raise(ErrorKind::bad_input, "unknown phase: " + s);
}

struct TraceEvent {
  int device = 0;
  Phase phase = Phase::fwd_comp;
  double start_ms = 0.0;
  double dur_ms = 0.0;
};

/// Full cost of a placement. overall_ms = max fwd + fwd comm stage +
/// bwd comm stage + max bwd; the events lay the four stages out as
/// synchronized bars per device.
struct CostBreakdown {
  std::vector<double> fwd_ms;
  std::vector<double> bwd_ms;
  std::vector<double> comm_ms;
  double fwd_comm_stage_ms = 0.0;
  double bwd_comm_stage_ms = 0.0;
  double overall_ms = 0.0;
  std::vector<TraceEvent> events;
};

/// Share of access mass on hot indices: bins whose lower edge is >= 8.
inline double hot_mass(const TableDesc& t) {
  double h = 0.0;
  for (int b = 4; b < kNumBins; ++b) h += t.dist[b];
  return h;
}

class CostOracle {
 public:
  explicit CostOracle(OracleConfig cfg = {}) : cfg_(cfg) {}

  const OracleConfig& config() const { return cfg_; }

  /// Number of placement-facing evaluations performed so far
  /// (partial_cost_features + evaluate_placement). Used to audit that
  /// inference and policy updates never touch the oracle.
  std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
  void reset_calls() { calls_.store(0, std::memory_order_relaxed); }

  /// Forward/backward kernel time of one table. Linear in batch, pooling
  /// factor and dimension, with a cache multiplier that grows slowly with
  /// hash size and shrinks with hot access mass.
  std::pair<double, double> single_table_kernel(const TableDesc& t,
                                                int batch) const {
    const double lookups = static_cast<double>(batch) * t.pooling_factor;
    const double hash_penalty =
        1.0 + cfg_.c_h * std::max(0.0, std::log2(static_cast<double>(t.hash_size) /
                                                 1048576.0));
    const double cache =
        std::max(0.25, hash_penalty * (1.0 - cfg_.c_s * hot_mass(t)));
    const double fwd = cfg_.kappa_f * lookups * t.dim * cache;
    return {fwd, cfg_.bwd_ratio * fwd};
  }

  /// Speedup of running k tables as one fused kernel; 1 for k <= 1,
  /// saturating at fusion_cap.
  double fusion_speedup(std::size_t k) const {
    if (k <= 1) return 1.0;
    const double s =
        1.0 + (cfg_.fusion_cap - 1.0) *
                  (1.0 - std::exp(-(static_cast<double>(k) - 1.0) / cfg_.fusion_k0));
    return std::min(cfg_.fusion_cap, s);
  }

  /// Forward/backward time of a fused kernel over a table set.
  std::pair<double, double> fused_kernel(std::span<const TableDesc> tables,
                                         int batch) const {
    double fwd_sum = 0.0;
    double bwd_sum = 0.0;
    for (const TableDesc& t : tables) {
      const auto [f, b] = single_table_kernel(t, batch);
      fwd_sum += f;
      bwd_sum += b;
    }
    const double s = fusion_speedup(tables.size());
    return {fwd_sum / s, bwd_sum / s};
  }

  /// All-to-all time of one device holding tables with dimension sum W.
  /// Calibrated against measured times at 4 devices and batch 65536.
  double device_comm(double dim_sum, int num_devices, int batch) const {
    const double remote =
        num_devices > 0
            ? (static_cast<double>(num_devices - 1) / num_devices) / 0.75
            : 0.0;
    return (static_cast<double>(batch) / 65536.0) *
           (cfg_.comm_a0 + cfg_.comm_a1 * dim_sum * remote);
  }

  CostBreakdown evaluate_placement(const PlacementTask& task,
                                   const Placement& placement) const {
    bump();
    if (placement.size() != task.tables.size())
      raise(ErrorKind::bad_input, "placement length != table count");
    const int D = task.num_devices;
    std::vector<std::vector<TableDesc>> groups(D);
    std::vector<double> mem(D, 0.0);
    std::vector<double> dims(D, 0.0);
    for (std::size_t i = 0; i < placement.size(); ++i) {
      const int d = placement[i];
      if (d < 0 || d >= D)
        raise(ErrorKind::bad_input, "device id out of range");
      groups[d].push_back(task.tables[i]);
      mem[d] += task.tables[i].table_size_gb;
      dims[d] += task.tables[i].dim;
    }
    check_memory(task, mem);

    CostBreakdown out;
    out.fwd_ms.resize(D);
    out.bwd_ms.resize(D);
    out.comm_ms.resize(D);
    for (int d = 0; d < D; ++d) {
      const auto [f, b] = fused_kernel(groups[d], task.batch_size);
      out.fwd_ms[d] = f;
      out.bwd_ms[d] = b;
      out.comm_ms[d] = device_comm(dims[d], D, task.batch_size);
    }
    const double scale = jitter_scale(task, placement);
    if (scale != 1.0) {
      for (double& v : out.fwd_ms) v *= scale;
      for (double& v : out.bwd_ms) v *= scale;
      for (double& v : out.comm_ms) v *= scale;
    }
    const double max_fwd = *std::max_element(out.fwd_ms.begin(), out.fwd_ms.end());
    const double max_bwd = *std::max_element(out.bwd_ms.begin(), out.bwd_ms.end());
    const double stage = *std::max_element(out.comm_ms.begin(), out.comm_ms.end());
    out.fwd_comm_stage_ms = stage;
    out.bwd_comm_stage_ms = stage;
    out.overall_ms = max_fwd + 2.0 * stage + max_bwd;

    const double t0 = 0.0;
    const double t1 = max_fwd;
    const double t2 = max_fwd + stage;
    const double t3 = max_fwd + 2.0 * stage;
    for (int d = 0; d < D; ++d) {
      out.events.push_back({d, Phase::fwd_comp, t0, out.fwd_ms[d]});
      out.events.push_back({d, Phase::fwd_comm, t1, out.comm_ms[d]});
      out.events.push_back({d, Phase::bwd_comm, t2, out.comm_ms[d]});
      out.events.push_back({d, Phase::bwd_comp, t3, out.bwd_ms[d]});
    }
    return out;
  }

  /// Cost features of a partial assignment: per device (fwd, bwd, comm).
  /// A device with no tables reports (0, 0, 0).
  std::vector<std::array<double, 3>> partial_cost_features(
      const PlacementTask& task,
      const std::vector<std::vector<int>>& assignment) const {
    bump();
    const int D = task.num_devices;
    if (assignment.size() != static_cast<std::size_t>(D))
      raise(ErrorKind::bad_input, "assignment has wrong device count");
    std::vector<double> mem(D, 0.0);
    std::vector<std::array<double, 3>> q(D, {0.0, 0.0, 0.0});
    for (int d = 0; d < D; ++d) {
      if (assignment[d].empty()) continue;
      std::vector<TableDesc> group;
      double dims = 0.0;
      for (int id : assignment[d]) {
        if (id < 0 || static_cast<std::size_t>(id) >= task.tables.size())
          raise(ErrorKind::unknown_table, "table id " + std::to_string(id));
        group.push_back(task.tables[id]);
        mem[d] += task.tables[id].table_size_gb;
        dims += task.tables[id].dim;
      }
      const auto [f, b] = fused_kernel(group, task.batch_size);
      q[d] = {f, b, device_comm(dims, D, task.batch_size)};
    }
    check_memory(task, mem);
    return q;
  }

  /// Exact minimum over all memory-legal placements; ties go to the
  /// lexicographically smallest placement. Instances above eval_cap
  /// enumerations are rejected.
  std::pair<Placement, double> brute_force_optimum(
      const PlacementTask& task, std::uint64_t eval_cap = 1ull << 20) const {
    const std::size_t M = task.tables.size();
    const int D = task.num_devices;
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < M; ++i) {
      total *= static_cast<std::uint64_t>(D);
      if (total > eval_cap)
        raise(ErrorKind::too_large,
              "brute force would need more than " + std::to_string(eval_cap) +
                  " evaluations");
    }

    Placement current(M, 0);
    Placement best;
    double best_cost = 0.0;
    bool found = false;
    for (std::uint64_t n = 0; n < total; ++n) {
      // Decode n with table 0 as the most significant digit so placements
      // are visited in lexicographic order.
      std::uint64_t rem = n;
      for (std::size_t i = M; i-- > 0;) {
        current[i] = static_cast<int>(rem % D);
        rem /= D;
      }
      if (!memory_legal(task, current)) continue;
      const CostBreakdown cb = evaluate_placement(task, current);
      if (!found || cb.overall_ms < best_cost) {
        best = current;
        best_cost = cb.overall_ms;
        found = true;
      }
    }
    if (!found)
      raise(ErrorKind::infeasible, "no memory-legal placement exists");
    return {best, best_cost};
  }

  static bool memory_legal(const PlacementTask& task, const Placement& p) {
    std::vector<double> mem(task.num_devices, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] < 0 || p[i] >= task.num_devices) return false;
      mem[p[i]] += task.tables[i].table_size_gb;
    }
    for (double m : mem)
      if (m > task.mem_cap_gb + kMemSlackGb) return false;
    return true;
  }

 private:
  // Absolute slack that absorbs summation-order rounding at exact-fit caps.
  static constexpr double kMemSlackGb = 1e-9;

  void bump() const { calls_.fetch_add(1, std::memory_order_relaxed); }

  void check_memory(const PlacementTask& task,
                    const std::vector<double>& mem) const {
    std::string offenders;
    for (std::size_t d = 0; d < mem.size(); ++d) {
      if (mem[d] > task.mem_cap_gb + kMemSlackGb) {
        if (!offenders.empty()) offenders += ", ";
        offenders += std::to_string(d);
      }
    }
    if (!offenders.empty())
      raise(ErrorKind::memory_violation,
            "memory cap exceeded on device(s) " + offenders);
  }

  double jitter_scale(const PlacementTask& task, const Placement& p) const {
    if (cfg_.jitter_eps == 0.0) return 1.0;
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (const TableDesc& t : task.tables)
      h = mix64(h ^ (static_cast<std::uint64_t>(t.id) * 31 + t.hash_size));
    for (int d : p) h = mix64(h ^ static_cast<std::uint64_t>(d + 1));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return 1.0 + cfg_.jitter_eps * (2.0 * u - 1.0);
  }

  OracleConfig cfg_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

/// Construction-time feasibility warning; the placement environment
/// enforces the caps for real.
inline bool task_probably_feasible(const PlacementTask& task) {
  double total = 0.0;
  double biggest = 0.0;
  for (const TableDesc& t : task.tables) {
    total += t.table_size_gb;
    biggest = std::max(biggest, t.table_size_gb);
  }
  return total <= task.num_devices * task.mem_cap_gb && biggest <= task.mem_cap_gb;
}

// ---------------------------------------------------------------------------
// Task / breakdown JSON

inline nlohmann::json task_to_json(const PlacementTask& task) {
  nlohmann::json tables = nlohmann::json::array();
  for (const TableDesc& t : task.tables) {
    tables.push_back({{"id", t.id},
                      {"dim", t.dim},
                      {"hash_size", t.hash_size},
                      {"pooling_factor", t.pooling_factor},
                      {"table_size_gb", t.table_size_gb},
                      {"dist", t.dist}});
  }
  return {{"num_devices", task.num_devices},
          {"mem_cap_gb", task.mem_cap_gb},
          {"batch_size", task.batch_size},
          {"tables", std::move(tables)}};
}

inline PlacementTask task_from_json(const nlohmann::json& j) {
  PlacementTask task;
  try {
    task.num_devices = j.at("num_devices").get<int>();
    task.mem_cap_gb = j.at("mem_cap_gb").get<double>();
    if (j.contains("batch_size")) task.batch_size = j.at("batch_size").get<int>();
    for (const auto& jt : j.at("tables")) {
      TableDesc t;
      t.id = jt.at("id").get<int>();
      t.dim = jt.at("dim").get<int>();
      t.hash_size = jt.at("hash_size").get<std::int64_t>();
      t.pooling_factor = jt.at("pooling_factor").get<double>();
      t.table_size_gb = jt.at("table_size_gb").get<double>();
      const auto& dist = jt.at("dist");
      if (dist.size() != kNumBins)
        raise(ErrorKind::bad_input, "dist must have 17 entries");
      for (int b = 0; b < kNumBins; ++b) t.dist[b] = dist[b].get<double>();
      task.tables.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::bad_input, std::string("bad task json: ") + e.what());
  }
  if (task.num_devices < 1)
    raise(ErrorKind::bad_input, "num_devices must be >= 1");
  for (std::size_t i = 0; i < task.tables.size(); ++i)
    if (task.tables[i].id != static_cast<int>(i))
      raise(ErrorKind::bad_input, "task table ids must be dense 0..M-1");
  return task;
}

inline nlohmann::json breakdown_to_json(const CostBreakdown& cb) {
  nlohmann::json events = nlohmann::json::array();
  for (const TraceEvent& e : cb.events)
    events.push_back({{"device", e.device},
                      {"phase", phase_name(e.phase)},
                      {"start_ms", e.start_ms},
                      {"dur_ms", e.dur_ms}});
  return {{"devices", cb.fwd_ms.size()},
          {"overall_ms", cb.overall_ms},
          {"fwd_ms", cb.fwd_ms},
          {"bwd_ms", cb.bwd_ms},
          {"comm_ms", cb.comm_ms},
          {"fwd_comm_stage_ms", cb.fwd_comm_stage_ms},
          {"bwd_comm_stage_ms", cb.bwd_comm_stage_ms},
          {"events", std::move(events)}};
}

inline CostBreakdown breakdown_from_json(const nlohmann::json& j) {
  CostBreakdown cb;
  try {
    cb.fwd_ms = j.at("fwd_ms").get<std::vector<double>>();
    cb.bwd_ms = j.at("bwd_ms").get<std::vector<double>>();
    cb.comm_ms = j.at("comm_ms").get<std::vector<double>>();
    cb.fwd_comm_stage_ms = j.at("fwd_comm_stage_ms").get<double>();
    cb.bwd_comm_stage_ms = j.at("bwd_comm_stage_ms").get<double>();
    cb.overall_ms = j.at("overall_ms").get<double>();
    for (const auto& je : j.at("events"))
      cb.events.push_back({je.at("device").get<int>(),
                           phase_from_name(je.at("phase").get<std::string>()),
                           je.at("start_ms").get<double>(),
                           je.at("dur_ms").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::bad_input, std::string("bad breakdown json: ") + e.what());
  }
  return cb;
}

}  // namespace shardplan
