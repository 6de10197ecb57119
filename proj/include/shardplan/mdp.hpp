// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0
//
// Table-by-table placement environment. The cost provider is pluggable so
// the same episode machinery runs against the synthetic oracle and against
// the learned cost model.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shardplan/error.hpp"
#include "shardplan/oracle.hpp"
#include "shardplan/table.hpp"

namespace shardplan {

/// Source of per-device cost features and whole-placement cost. The
/// environment only ever talks to this interface.
class CostProvider {
 public:
  virtual ~CostProvider() = default;
  virtual std::vector<std::array<double, 3>> cost_features(
      const std::vector<std::vector<int>>& assignment) = 0;
  virtual double overall(const Placement& placement) = 0;
};

/// Provider backed by the synthetic oracle (the "measured" environment).
class OracleCostProvider : public CostProvider {
 public:
  OracleCostProvider(const CostOracle& oracle, const PlacementTask& task)
      : oracle_(oracle), task_(task) {}

  std::vector<std::array<double, 3>> cost_features(
      const std::vector<std::vector<int>>& assignment) override {
    return oracle_.partial_cost_features(task_, assignment);
  }

  double overall(const Placement& placement) override {
    return oracle_.evaluate_placement(task_, placement).overall_ms;
  }

 private:
  const CostOracle& oracle_;
  const PlacementTask& task_;
};

/// Observation handed to the policy: the per-device table sets, the
/// per-device cost features, and the feature vector of the table to place.
struct AugmentedState {
  std::vector<std::vector<int>> device_tables;  // sorted table ids per device
  std::vector<std::array<double, 3>> q;
  int step = 0;
  int next_table_id = -1;  // -1 once the episode is done
  FeatureVec next_table{};
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

/// One placement episode over a fixed visit order. Episodes always run
/// exactly M steps; memory legality is enforced through legal_actions.
class PlacementEnv {
 public:
  PlacementEnv(const PlacementTask& task, std::vector<int> order,
               CostProvider& provider, const TaskFeatures& features)
      : task_(task),
        order_(std::move(order)),
        provider_(provider),
        features_(features) {
    const std::size_t M = task_.tables.size();
    if (order_.size() != M)
      raise(ErrorKind::bad_input, "visit order length != table count");
    std::vector<bool> seen(M, false);
    for (int id : order_) {
      if (id < 0 || static_cast<std::size_t>(id) >= M || seen[id])
        raise(ErrorKind::bad_input, "visit order is not a permutation");
      seen[id] = true;
    }
    if (features_.rows.size() != M)
      raise(ErrorKind::bad_input, "feature rows != table count");
    reset();
  }

  const AugmentedState& reset() {
    const int D = task_.num_devices;
    state_.device_tables.assign(D, {});
    state_.q.assign(D, {0.0, 0.0, 0.0});
    state_.step = 0;
    mem_used_.assign(D, 0.0);
    placement_.assign(task_.tables.size(), -1);
    actions_.clear();
    refresh_next_table();
    return state_;
  }

  int num_tables() const { return static_cast<int>(task_.tables.size()); }
  int num_devices() const { return task_.num_devices; }
  bool done() const { return state_.step >= num_tables(); }
  const AugmentedState& state() const { return state_; }
  const std::vector<int>& visit_order() const { return order_; }
  const std::vector<double>& mem_used() const { return mem_used_; }
  const std::vector<int>& actions() const { return actions_; }

  std::vector<bool> legal_mask() const {
    if (done()) raise(ErrorKind::illegal_action, "episode already finished");
    const double need = task_.tables[state_.next_table_id].table_size_gb;
    std::vector<bool> mask(task_.num_devices, false);
    for (int d = 0; d < task_.num_devices; ++d)
      mask[d] = mem_used_[d] + need <= task_.mem_cap_gb;
    return mask;
  }

  /// Devices that can hold the next table. Throws when none can; the
  /// caller aborts the episode (training) or fails the task (inference).
  std::vector<int> legal_actions() const {
    const std::vector<bool> mask = legal_mask();
    std::vector<int> legal;
    for (int d = 0; d < task_.num_devices; ++d)
      if (mask[d]) legal.push_back(d);
    if (legal.empty())
      raise(ErrorKind::infeasible,
            "table " + std::to_string(state_.next_table_id) +
                " does not fit on any device");
    return legal;
  }

  /// Places the next table on device d. Reward is 0 until the final step,
  /// where it is the negative overall cost from the provider (discount 1).
  StepResult step(int d) {
    const std::vector<int> legal = legal_actions();
    if (std::find(legal.begin(), legal.end(), d) == legal.end())
      raise(ErrorKind::illegal_action,
            "device " + std::to_string(d) + " is not a legal action");
    const int id = state_.next_table_id;
    auto& devlist = state_.device_tables[d];
    devlist.insert(std::lower_bound(devlist.begin(), devlist.end(), id), id);
    mem_used_[d] += task_.tables[id].table_size_gb;
    placement_[id] = d;
    actions_.push_back(d);
    ++state_.step;
    state_.q = provider_.cost_features(state_.device_tables);
    refresh_next_table();

    StepResult r;
    r.done = done();
    r.reward = r.done ? -provider_.overall(placement_) : 0.0;
    return r;
  }

  /// Device assignment indexed by table id; valid once done.
  const Placement& placement() const {
    if (!done()) raise(ErrorKind::illegal_action, "episode not finished");
    return placement_;
  }

 private:
  void refresh_next_table() {
    if (state_.step < num_tables()) {
      state_.next_table_id = order_[state_.step];
      state_.next_table = features_.rows[state_.next_table_id];
    } else {
      state_.next_table_id = -1;
      state_.next_table = FeatureVec{};
    }
  }

  const PlacementTask& task_;
  std::vector<int> order_;
  CostProvider& provider_;
  const TaskFeatures& features_;
  AugmentedState state_;
  std::vector<double> mem_used_;
  Placement placement_;
  std::vector<int> actions_;
};

/// Debug record of one episode.
inline nlohmann::json episode_record_json(const std::string& task_ref,
                                          const std::vector<int>& order,
                                          const std::vector<int>& actions,
                                          const std::vector<double>& rewards,
                                          double overall_ms) {
  return {{"task_ref", task_ref},
          {"order", order},
          {"actions", actions},
          {"rewards", rewards},
          {"overall_ms", overall_ms}};
}

}  // namespace shardplan
