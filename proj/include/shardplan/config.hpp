// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shardplan/costnet.hpp"
#include "shardplan/error.hpp"
#include "shardplan/oracle.hpp"
#include "shardplan/table.hpp"

namespace shardplan {

struct RunConfig {
  std::string pool_path;
  int num_tables = 50;     // tables per sampled task
  int num_devices = 4;
  double mem_cap_gb = 4.0;
  int n_train_tasks = 50;
  int n_test_tasks = 50;
  int iterations = 10;
  int n_collect = 10;
  int n_cost = 300;
  int n_batch = 64;
  int n_rl = 10;
  int n_episode = 10;
  double w_entropy = 0.001;
  double lr = 5e-4;
  std::uint64_t seed = 1;
  OracleConfig oracle;
  FeatureMask feature_mask = full_feature_mask();
  Reduction reduction_tables = Reduction::sum;
  Reduction reduction_devices = Reduction::max;
};

inline void validate_config(const RunConfig& c) {
  auto positive = [](int v, const char* name) {
    if (v < 1) raise(ErrorKind::bad_input, std::string(name) + " must be >= 1");
  };
  positive(c.num_tables, "num_tables");
  positive(c.num_devices, "num_devices");
  positive(c.n_train_tasks, "n_train_tasks");
  positive(c.n_test_tasks, "n_test_tasks");
  positive(c.n_collect, "n_collect");
  positive(c.n_cost, "n_cost");
  positive(c.n_batch, "n_batch");
  positive(c.n_rl, "n_rl");
  positive(c.n_episode, "n_episode");
  if (c.iterations < 0) raise(ErrorKind::bad_input, "iterations must be >= 0");
  if (c.mem_cap_gb <= 0.0) raise(ErrorKind::bad_input, "mem_cap_gb must be > 0");
  if (c.lr <= 0.0) raise(ErrorKind::bad_input, "lr must be > 0");
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  std::vector<bool> mask(c.feature_mask.begin(), c.feature_mask.end());
  return {{"pool", c.pool_path},
          {"num_tables", c.num_tables},
          {"num_devices", c.num_devices},
          {"mem_cap_gb", c.mem_cap_gb},
          {"n_train_tasks", c.n_train_tasks},
          {"n_test_tasks", c.n_test_tasks},
          {"iterations", c.iterations},
          {"n_collect", c.n_collect},
          {"n_cost", c.n_cost},
          {"n_batch", c.n_batch},
          {"n_rl", c.n_rl},
          {"n_episode", c.n_episode},
          {"w_entropy", c.w_entropy},
          {"lr", c.lr},
          {"seed", c.seed},
          {"oracle", oracle_config_to_json(c.oracle)},
          {"feature_mask", mask},
          {"reduction_tables", reduction_name(c.reduction_tables)},
          {"reduction_devices", reduction_name(c.reduction_devices)}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("pool")) c.pool_path = j.at("pool").get<std::string>();
    auto get_int = [&](const char* key, int& out) {
      if (j.contains(key)) out = j.at(key).get<int>();
    };
    get_int("num_tables", c.num_tables);
    get_int("num_devices", c.num_devices);
    get_int("n_train_tasks", c.n_train_tasks);
    get_int("n_test_tasks", c.n_test_tasks);
    get_int("iterations", c.iterations);
    get_int("n_collect", c.n_collect);
    get_int("n_cost", c.n_cost);
    get_int("n_batch", c.n_batch);
    get_int("n_rl", c.n_rl);
    get_int("n_episode", c.n_episode);
    if (j.contains("mem_cap_gb")) c.mem_cap_gb = j.at("mem_cap_gb").get<double>();
    if (j.contains("w_entropy")) c.w_entropy = j.at("w_entropy").get<double>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("oracle")) c.oracle = oracle_config_from_json(j.at("oracle"));
    if (j.contains("feature_mask")) {
      const auto& m = j.at("feature_mask");
      if (m.size() != kNumFeatures)
        raise(ErrorKind::bad_input, "feature_mask must have 21 entries");
      for (int f = 0; f < kNumFeatures; ++f) c.feature_mask[f] = m[f].get<bool>();
    }
    if (j.contains("mask_without")) {
      // Convenience for ablations: names of feature groups to drop.
      for (const auto& name : j.at("mask_without")) {
        const std::string s = name.get<std::string>();
        if (s == "dim") c.feature_mask[0] = false;
        else if (s == "hash_size") c.feature_mask[1] = false;
        else if (s == "pooling_factor") c.feature_mask[2] = false;
        else if (s == "table_size") c.feature_mask[3] = false;
        else if (s == "distribution")
          for (int b = 0; b < kNumBins; ++b)
            c.feature_mask[kNumScalarFeatures + b] = false;
        else
          raise(ErrorKind::bad_input, "unknown feature group: " + s);
      }
    }
    if (j.contains("reduction_tables"))
      c.reduction_tables =
          reduction_from_name(j.at("reduction_tables").get<std::string>());
    if (j.contains("reduction_devices"))
      c.reduction_devices =
          reduction_from_name(j.at("reduction_devices").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::bad_input, std::string("bad run config: ") + e.what());
  }
  validate_config(c);
  return c;
}

}  // namespace shardplan
