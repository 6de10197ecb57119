// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end machinery: pool splitting, task sampling, the iterative
// training loop (collect cost data on the oracle-backed environment, fit
// the cost network, update the policy on the estimated environment),
// inference, and the strategy benchmark.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shardplan/baselines.hpp"
#include "shardplan/checkpoint.hpp"
#include "shardplan/config.hpp"
#include "shardplan/costnet.hpp"
#include "shardplan/error.hpp"
#include "shardplan/mdp.hpp"
#include "shardplan/oracle.hpp"
#include "shardplan/policy.hpp"
#include "shardplan/rng.hpp"
#include "shardplan/table.hpp"

namespace shardplan {

/// Splits a pool into disjoint halves (train gets the extra table when M
/// is odd). Ids are re-densified and per-half statistics recomputed.
inline std::pair<TablePool, TablePool> split_pool(const TablePool& pool,
                                                  std::uint64_t seed) {
  const std::size_t M = pool.tables.size();
  std::vector<int> ids(M);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(mix64(seed));
  for (std::size_t k = 0; k + 1 < M; ++k) {
    const std::size_t j = k + rng.index(M - k);
    std::swap(ids[k], ids[j]);
  }
  const std::size_t n_train = (M + 1) / 2;

  auto build = [&](std::size_t lo, std::size_t hi) {
    std::vector<int> sel(ids.begin() + lo, ids.begin() + hi);
    std::sort(sel.begin(), sel.end());
    TablePool half;
    half.batch_size = pool.batch_size;
    for (int id : sel) {
      TableDesc t = pool.tables[id];
      t.id = static_cast<int>(half.tables.size());
      half.tables.push_back(t);
    }
    half.feature_stats = compute_feature_stats(half.tables);
    return half;
  };
  return {build(0, n_train), build(n_train, M)};
}

/// Samples `count` tasks of `num_tables` distinct tables each.
inline std::vector<PlacementTask> sample_tasks(const TablePool& pool,
                                               int num_tables, int count,
                                               int num_devices,
                                               double mem_cap_gb,
                                               std::uint64_t seed) {
  const std::size_t M = pool.tables.size();
  if (static_cast<std::size_t>(num_tables) > M)
    raise(ErrorKind::bad_input,
          "task needs " + std::to_string(num_tables) + " tables, pool has " +
              std::to_string(M));
  Rng rng(mix64(seed));
  std::vector<PlacementTask> tasks;
  tasks.reserve(count);
  std::vector<int> ids(M);
  for (int c = 0; c < count; ++c) {
    std::iota(ids.begin(), ids.end(), 0);
    for (int k = 0; k < num_tables; ++k) {
      const std::size_t j = k + rng.index(M - k);
      std::swap(ids[k], ids[j]);
    }
    std::vector<int> sel(ids.begin(), ids.begin() + num_tables);
    std::sort(sel.begin(), sel.end());

    PlacementTask task;
    task.num_devices = num_devices;
    task.mem_cap_gb = mem_cap_gb;
    task.batch_size = pool.batch_size;
    for (int id : sel) {
      TableDesc t = pool.tables[id];
      t.id = static_cast<int>(task.tables.size());
      task.tables.push_back(t);
    }
    if (!task_probably_feasible(task))
      std::cerr << "warning: sampled task " << c
                << " may not fit in memory caps\n";
    tasks.push_back(std::move(task));
  }
  return tasks;
}

// ---------------------------------------------------------------------------
// Visit orders

inline std::vector<int> order_by_cost_desc(const std::vector<double>& cost) {
  std::vector<int> order(cost.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (cost[a] != cost[b]) return cost[a] > cost[b];
    return a < b;
  });
  return order;
}

/// Raw lookup-cost ordering used before the cost network has seen any data.
inline std::vector<int> heuristic_order(const PlacementTask& task) {
  std::vector<double> cost(task.tables.size());
  for (std::size_t i = 0; i < cost.size(); ++i)
    cost[i] = task.tables[i].dim * task.tables[i].pooling_factor;
  return order_by_cost_desc(cost);
}

/// Descending predicted single-table cost.
inline std::vector<int> predicted_order(const CostNet& net,
                                        const TaskFeatures& features) {
  std::vector<double> cost(features.rows.size());
  for (std::size_t i = 0; i < cost.size(); ++i)
    cost[i] = single_table_cost(net, static_cast<int>(i), features);
  return order_by_cost_desc(cost);
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  Checkpoint checkpoint;
  nlohmann::json metrics = nlohmann::json::array();
};

namespace detail {

struct CollectedEpisode {
  std::vector<CostSample> samples;
  double overall_ms = 0.0;
};

/// One sampled episode on the oracle-backed environment. Produces one cost
/// sample per step plus a final sample carrying the overall cost.
inline CollectedEpisode collect_episode(
    const PlacementTask& task, const std::vector<int>& order,
    const CostOracle& oracle, const PolicyNet& policy,
    const std::shared_ptr<const TaskFeatures>& features, Rng& rng) {
  OracleCostProvider provider(oracle, task);
  PlacementEnv env(task, order, provider, *features);
  CollectedEpisode out;
  double reward = 0.0;
  while (!env.done()) {
    const std::vector<bool> legal = env.legal_mask();
    const std::vector<double> probs =
        action_probs(policy, env.state(), legal, *features);
    const auto [action, logp] = sample_action(probs, rng);
    (void)logp;
    const StepResult r = env.step(action);
    CostSample s;
    s.features = features;
    s.device_tables = env.state().device_tables;
    s.target_q = env.state().q;
    out.samples.push_back(std::move(s));
    if (r.done) reward = r.reward;
  }
  out.overall_ms = -reward;
  CostSample final_sample;
  final_sample.features = features;
  final_sample.device_tables = env.state().device_tables;
  final_sample.target_q = env.state().q;
  final_sample.target_overall = out.overall_ms;
  out.samples.push_back(std::move(final_sample));
  return out;
}

/// One sampled episode on the estimated environment, recorded for the
/// policy update.
inline Episode estimated_episode(
    const PlacementTask& task, const std::vector<int>& order,
    EstimatedCostProvider& provider, const PolicyNet& policy,
    const std::shared_ptr<const TaskFeatures>& features, Rng& rng) {
  PlacementEnv env(task, order, provider, *features);
  Episode ep;
  ep.features = features;
  while (!env.done()) {
    EpisodeStep st;
    st.device_tables = env.state().device_tables;
    st.q = env.state().q;
    st.legal = env.legal_mask();
    const std::vector<double> probs =
        action_probs(policy, env.state(), st.legal, *features);
    const auto [action, logp] = sample_action(probs, rng);
    st.action = action;
    st.log_prob = logp;
    ep.steps.push_back(std::move(st));
    const StepResult r = env.step(action);
    if (r.done) ep.reward = r.reward;
  }
  return ep;
}

}  // namespace detail

/// Iterative training: collect placements on the oracle-backed environment
/// with the current policy, fit the cost network on the buffered cost
/// data, then update the policy on the estimated environment. The oracle
/// is touched only in the collect phase.
inline TrainResult train(const RunConfig& cfg, const TablePool& pool,
                         const CostOracle& oracle,
                         std::ostream* metrics_stream = nullptr) {
  validate_config(cfg);
  auto [train_pool, test_pool] = split_pool(pool, subseed(cfg.seed, "split"));
  const FeatureStats stats = train_pool.feature_stats;
  const std::vector<PlacementTask> tasks =
      sample_tasks(train_pool, cfg.num_tables, cfg.n_train_tasks,
                   cfg.num_devices, cfg.mem_cap_gb,
                   subseed(cfg.seed, "train_tasks"));

  std::vector<std::shared_ptr<const TaskFeatures>> features;
  features.reserve(tasks.size());
  for (const PlacementTask& t : tasks)
    features.push_back(std::make_shared<const TaskFeatures>(
        make_task_features(t.tables, &stats)));

  CostNet cost = CostNet::make(subseed(cfg.seed, "cost_init"),
                               cfg.reduction_tables, cfg.reduction_devices,
                               cfg.feature_mask);
  PolicyNet policy =
      PolicyNet::make(subseed(cfg.seed, "policy_init"), cfg.feature_mask);
  AdamState adam_cost(cost.param_count(), cfg.lr,
                      static_cast<std::int64_t>(cfg.iterations) * cfg.n_cost);
  AdamState adam_policy(policy.param_count(), cfg.lr,
                        static_cast<std::int64_t>(cfg.iterations) * cfg.n_rl);
  ReplayBuffer buffer;
  Rng rng_collect(subseed(cfg.seed, "collect"));
  Rng rng_cost(subseed(cfg.seed, "cost_batches"));
  Rng rng_rl(subseed(cfg.seed, "rl"));

  TrainResult result;
  bool cost_net_trained = false;

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    double collected_cost = 0.0;
    for (int c = 0; c < cfg.n_collect; ++c) {
      detail::CollectedEpisode ep;
      bool ok = false;
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        const std::size_t ti = rng_collect.index(tasks.size());
        const std::vector<int> order =
            cost_net_trained ? predicted_order(cost, *features[ti])
                             : heuristic_order(tasks[ti]);
        try {
          ep = detail::collect_episode(tasks[ti], order, oracle, policy,
                                       features[ti], rng_collect);
          ok = true;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::infeasible) throw;  // resample the task
        }
      }
      if (!ok)
        raise(ErrorKind::infeasible,
              "could not collect a feasible episode in 100 attempts");
      collected_cost += ep.overall_ms;
      for (CostSample& s : ep.samples) buffer.add(std::move(s));
    }

    const double mean_loss = costnet_train_steps(cost, buffer, cfg.n_cost,
                                                 cfg.n_batch, adam_cost, rng_cost);
    cost_net_trained = true;

    for (int u = 0; u < cfg.n_rl; ++u) {
      bool ok = false;
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        const std::size_t ti = rng_rl.index(tasks.size());
        const std::vector<int> order = predicted_order(cost, *features[ti]);
        EstimatedCostProvider provider(cost, *features[ti], cfg.num_devices);
        std::vector<Episode> episodes;
        try {
          for (int e = 0; e < cfg.n_episode; ++e)
            episodes.push_back(detail::estimated_episode(
                tasks[ti], order, provider, policy, features[ti], rng_rl));
          ok = true;
        } catch (const Error& err) {
          if (err.kind() != ErrorKind::infeasible) throw;
          continue;
        }
        reinforce_update(policy, episodes, cfg.w_entropy, adam_policy);
      }
      if (!ok)
        raise(ErrorKind::infeasible,
              "could not run a feasible policy update in 100 attempts");
    }

    nlohmann::json record = {
        {"iteration", iter},
        {"mean_train_cost_ms", collected_cost / cfg.n_collect},
        {"cost_loss", mean_loss}};
    if (metrics_stream) *metrics_stream << record.dump() << '\n';
    result.metrics.push_back(std::move(record));
  }

  result.checkpoint.stats = stats;
  result.checkpoint.cost = std::move(cost);
  result.checkpoint.policy = std::move(policy);
  result.checkpoint.config = cfg;
  return result;
}

// ---------------------------------------------------------------------------
// Inference

struct InferResult {
  Placement placement;
  double predicted_ms = 0.0;
  std::optional<double> oracle_ms;
};

/// Greedy rollout on the estimated environment. Touches the oracle only
/// when `evaluate` is set; infeasibility is a hard error here.
inline InferResult infer(const Checkpoint& ckpt, const PlacementTask& task,
                         const CostOracle* oracle = nullptr,
                         bool evaluate = false) {
  const TaskFeatures features = make_task_features(task.tables, &ckpt.stats);
  const std::vector<int> order = predicted_order(ckpt.cost, features);
  EstimatedCostProvider provider(ckpt.cost, features, task.num_devices);
  PlacementEnv env(task, order, provider, features);
  double reward = 0.0;
  while (!env.done()) {
    const std::vector<bool> legal = env.legal_mask();
    const std::vector<double> probs =
        action_probs(ckpt.policy, env.state(), legal, features);
    const StepResult r = env.step(greedy_action(probs));
    if (r.done) reward = r.reward;
  }
  InferResult out;
  out.placement = env.placement();
  out.predicted_ms = std::max(0.0, -reward);
  if (evaluate) {
    if (oracle == nullptr)
      raise(ErrorKind::bad_input, "evaluation requested without an oracle");
    out.oracle_ms = oracle->evaluate_placement(task, out.placement).overall_ms;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark

struct StrategyStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double speedup_vs_random = 0.0;
};

struct BenchmarkResult {
  nlohmann::json report;
  std::string table;
};

inline const std::vector<std::string>& known_strategies() {
  static const std::vector<std::string> all = {
      "random", "size", "dim", "lookup", "size-lookup", "dreamshard",
      "bruteforce"};
  return all;
}

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace detail

/// Oracle cost of every strategy over the sampled train and test tasks.
/// `random` is always included as the speedup denominator. The model is
/// required only when `dreamshard` is benchmarked.
inline BenchmarkResult benchmark(const RunConfig& cfg,
                                 std::vector<std::string> strategies,
                                 const TablePool& pool, const CostOracle& oracle,
                                 const Checkpoint* model = nullptr) {
  validate_config(cfg);
  for (const std::string& s : strategies)
    if (std::find(known_strategies().begin(), known_strategies().end(), s) ==
        known_strategies().end())
      raise(ErrorKind::bad_input, "unknown strategy: " + s);
  if (std::find(strategies.begin(), strategies.end(), "random") ==
      strategies.end())
    strategies.insert(strategies.begin(), "random");

  auto [train_pool, test_pool] = split_pool(pool, subseed(cfg.seed, "split"));
  const std::vector<PlacementTask> train_tasks =
      sample_tasks(train_pool, cfg.num_tables, cfg.n_train_tasks,
                   cfg.num_devices, cfg.mem_cap_gb,
                   subseed(cfg.seed, "train_tasks"));
  const std::vector<PlacementTask> test_tasks =
      sample_tasks(test_pool, cfg.num_tables, cfg.n_test_tasks,
                   cfg.num_devices, cfg.mem_cap_gb,
                   subseed(cfg.seed, "test_tasks"));

  auto run_strategy = [&](const std::string& name,
                          const std::vector<PlacementTask>& tasks,
                          const char* split_tag) {
    std::vector<double> costs;
    costs.reserve(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      Placement p;
      if (name == "random") {
        Rng rng(mix64(subseed(cfg.seed, std::string("bench.random.") +
                                            split_tag) +
                      i));
        p = random_placement(tasks[i], rng);
      } else if (name == "dreamshard") {
        if (model == nullptr)
          raise(ErrorKind::bad_input, "dreamshard strategy needs a model");
        p = infer(*model, tasks[i]).placement;
      } else if (name == "bruteforce") {
        p = oracle.brute_force_optimum(tasks[i]).first;
      } else {
        p = expert_placement(tasks[i], expert_from_name(name));
      }
      costs.push_back(oracle.evaluate_placement(tasks[i], p).overall_ms);
    }
    return detail::mean_std(costs);
  };

  struct Row {
    std::string name;
    StrategyStats train, test;
  };
  std::vector<Row> rows;
  for (const std::string& name : strategies) {
    Row row;
    row.name = name;
    std::tie(row.train.mean_ms, row.train.std_ms) =
        run_strategy(name, train_tasks, "train");
    std::tie(row.test.mean_ms, row.test.std_ms) =
        run_strategy(name, test_tasks, "test");
    rows.push_back(std::move(row));
  }
  const Row* random_row = nullptr;
  for (const Row& r : rows)
    if (r.name == "random") random_row = &r;
  for (Row& r : rows) {
    r.train.speedup_vs_random =
        (random_row->train.mean_ms - r.train.mean_ms) / r.train.mean_ms;
    r.test.speedup_vs_random =
        (random_row->test.mean_ms - r.test.mean_ms) / r.test.mean_ms;
  }

  nlohmann::json strategies_json;
  for (const Row& r : rows) {
    auto stats_json = [](const StrategyStats& s) {
      return nlohmann::json{{"mean_ms", s.mean_ms},
                            {"std_ms", s.std_ms},
                            {"speedup_vs_random", s.speedup_vs_random}};
    };
    strategies_json[r.name] = {{"train", stats_json(r.train)},
                               {"test", stats_json(r.test)}};
  }

  BenchmarkResult out;
  out.report = {{"num_tables", cfg.num_tables},
                {"num_devices", cfg.num_devices},
                {"n_train_tasks", cfg.n_train_tasks},
                {"n_test_tasks", cfg.n_test_tasks},
                {"strategies", std::move(strategies_json)}};

  std::ostringstream os;
  os << std::left << std::setw(14) << "strategy" << std::right << std::setw(10)
     << "train" << std::setw(8) << "+/-" << std::setw(9) << "vs rnd"
     << std::setw(10) << "test" << std::setw(8) << "+/-" << std::setw(9)
     << "vs rnd" << '\n';
  os << std::string(68, '-') << '\n';
  os << std::fixed;
  for (const Row& r : rows) {
    os << std::left << std::setw(14) << r.name << std::right
       << std::setprecision(2) << std::setw(10) << r.train.mean_ms
       << std::setw(8) << r.train.std_ms << std::setprecision(1)
       << std::setw(8) << 100.0 * r.train.speedup_vs_random << "%"
       << std::setprecision(2) << std::setw(10) << r.test.mean_ms
       << std::setw(8) << r.test.std_ms << std::setprecision(1) << std::setw(8)
       << 100.0 * r.test.speedup_vs_random << "%" << '\n';
  }
  out.table = os.str();
  return out;
}

}  // namespace shardplan
