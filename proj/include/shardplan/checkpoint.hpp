// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0
//
// Model checkpoint: feature normalization statistics, the cost and policy
// network parameters, and a numeric echo of the run configuration.
// Binary format, little-endian: magic "DSHD", u32 version, u32 section
// count, then length-prefixed named sections of f64 arrays.

#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "shardplan/config.hpp"
#include "shardplan/costnet.hpp"
#include "shardplan/error.hpp"
#include "shardplan/policy.hpp"
#include "shardplan/table.hpp"

namespace shardplan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  FeatureStats stats{};
  CostNet cost;
  PolicyNet policy;
  RunConfig config;
};

namespace detail {

inline void write_f64(std::ostream& os, double v) {
  write_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64(std::istream& is) {
  return std::bit_cast<double>(read_le<std::uint64_t>(is));
}

inline void write_section(std::ostream& os, const std::string& name,
                          const std::vector<double>& data) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_le<std::uint64_t>(os, data.size());
  for (double v : data) write_f64(os, v);
}

// Fixed order of the numeric config echo.
inline std::vector<double> config_echo(const RunConfig& c) {
  return {static_cast<double>(c.num_tables),
          static_cast<double>(c.num_devices),
          c.mem_cap_gb,
          static_cast<double>(c.n_train_tasks),
          static_cast<double>(c.n_test_tasks),
          static_cast<double>(c.iterations),
          static_cast<double>(c.n_collect),
          static_cast<double>(c.n_cost),
          static_cast<double>(c.n_batch),
          static_cast<double>(c.n_rl),
          static_cast<double>(c.n_episode),
          c.w_entropy,
          c.lr,
          static_cast<double>(c.seed & 0xffffffffULL),
          static_cast<double>(c.seed >> 32),
          c.oracle.kappa_f,
          c.oracle.c_h,
          c.oracle.c_s,
          c.oracle.bwd_ratio,
          c.oracle.fusion_k0,
          c.oracle.fusion_cap,
          c.oracle.comm_a0,
          c.oracle.comm_a1,
          c.oracle.jitter_eps};
}

inline RunConfig config_from_echo(const std::vector<double>& e) {
  if (e.size() != 24)
    raise(ErrorKind::bad_input, "config section has wrong length");
  RunConfig c;
  c.num_tables = static_cast<int>(e[0]);
  c.num_devices = static_cast<int>(e[1]);
  c.mem_cap_gb = e[2];
  c.n_train_tasks = static_cast<int>(e[3]);
  c.n_test_tasks = static_cast<int>(e[4]);
  c.iterations = static_cast<int>(e[5]);
  c.n_collect = static_cast<int>(e[6]);
  c.n_cost = static_cast<int>(e[7]);
  c.n_batch = static_cast<int>(e[8]);
  c.n_rl = static_cast<int>(e[9]);
  c.n_episode = static_cast<int>(e[10]);
  c.w_entropy = e[11];
  c.lr = e[12];
  c.seed = static_cast<std::uint64_t>(e[13]) |
           (static_cast<std::uint64_t>(e[14]) << 32);
  c.oracle.kappa_f = e[15];
  c.oracle.c_h = e[16];
  c.oracle.c_s = e[17];
  c.oracle.bwd_ratio = e[18];
  c.oracle.fusion_k0 = e[19];
  c.oracle.fusion_cap = e[20];
  c.oracle.comm_a0 = e[21];
  c.oracle.comm_a1 = e[22];
  c.oracle.jitter_eps = e[23];
  return c;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorKind::bad_input, "cannot open " + path + " for writing");
  os.write("DSHD", 4);
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);

  std::vector<std::pair<std::string, std::vector<double>>> sections;
  std::vector<double> mean(kNumFeatures), stdv(kNumFeatures), mask(kNumFeatures);
  for (int f = 0; f < kNumFeatures; ++f) {
    mean[f] = ckpt.stats[f].mean;
    stdv[f] = ckpt.stats[f].std;
    mask[f] = ckpt.config.feature_mask[f] ? 1.0 : 0.0;
  }
  sections.emplace_back("feature_mean", std::move(mean));
  sections.emplace_back("feature_std", std::move(stdv));
  sections.emplace_back("feature_mask", std::move(mask));
  sections.emplace_back(
      "reductions",
      std::vector<double>{static_cast<double>(ckpt.cost.reduction_tables),
                          static_cast<double>(ckpt.cost.reduction_devices)});
  sections.emplace_back("config", detail::config_echo(ckpt.config));
  sections.emplace_back("cost.table_mlp", ckpt.cost.table_mlp.params);
  sections.emplace_back("cost.head_fwd", ckpt.cost.head_fwd.params);
  sections.emplace_back("cost.head_bwd", ckpt.cost.head_bwd.params);
  sections.emplace_back("cost.head_comm", ckpt.cost.head_comm.params);
  sections.emplace_back("cost.head_overall", ckpt.cost.head_overall.params);
  sections.emplace_back("policy.table_mlp", ckpt.policy.table_mlp.params);
  sections.emplace_back("policy.cost_mlp", ckpt.policy.cost_mlp.params);
  sections.emplace_back("policy.head", ckpt.policy.head.params);

  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, data] : sections) detail::write_section(os, name, data);
  if (!os) raise(ErrorKind::bad_input, "write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorKind::bad_input, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DSHD", 4) != 0)
    raise(ErrorKind::bad_input, path + ": not a checkpoint file");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    raise(ErrorKind::bad_input,
          "unsupported checkpoint version " + std::to_string(version));

  std::map<std::string, std::vector<double>> sections;
  const auto count = detail::read_le<std::uint32_t>(is);
  for (std::uint32_t s = 0; s < count; ++s) {
    const auto name_len = detail::read_le<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto n = detail::read_le<std::uint64_t>(is);
    std::vector<double> data(n);
    for (auto& v : data) v = detail::read_f64(is);
    if (!is) raise(ErrorKind::bad_input, "truncated checkpoint");
    sections[name] = std::move(data);
  }

  auto need = [&](const std::string& name) -> const std::vector<double>& {
    auto it = sections.find(name);
    if (it == sections.end())
      raise(ErrorKind::bad_input, "checkpoint missing section " + name);
    return it->second;
  };

  Checkpoint ckpt;
  ckpt.config = detail::config_from_echo(need("config"));
  const auto& mean = need("feature_mean");
  const auto& stdv = need("feature_std");
  const auto& mask = need("feature_mask");
  if (mean.size() != kNumFeatures || stdv.size() != kNumFeatures ||
      mask.size() != kNumFeatures)
    raise(ErrorKind::bad_input, "feature sections have wrong length");
  for (int f = 0; f < kNumFeatures; ++f) {
    ckpt.stats[f] = {mean[f], stdv[f]};
    ckpt.config.feature_mask[f] = mask[f] != 0.0;
  }
  const auto& red = need("reductions");
  if (red.size() != 2) raise(ErrorKind::bad_input, "bad reductions section");
  ckpt.config.reduction_tables = static_cast<Reduction>(static_cast<int>(red[0]));
  ckpt.config.reduction_devices = static_cast<Reduction>(static_cast<int>(red[1]));

  ckpt.cost = CostNet::make(0, ckpt.config.reduction_tables,
                            ckpt.config.reduction_devices,
                            ckpt.config.feature_mask);
  ckpt.policy = PolicyNet::make(0, ckpt.config.feature_mask);
  auto load_params = [&](Mlp& mlp, const std::string& name) {
    const auto& data = need(name);
    if (data.size() != mlp.params.size())
      raise(ErrorKind::bad_input, "section " + name + " has wrong length");
    mlp.params = data;
  };
  load_params(ckpt.cost.table_mlp, "cost.table_mlp");
  load_params(ckpt.cost.head_fwd, "cost.head_fwd");
  load_params(ckpt.cost.head_bwd, "cost.head_bwd");
  load_params(ckpt.cost.head_comm, "cost.head_comm");
  load_params(ckpt.cost.head_overall, "cost.head_overall");
  load_params(ckpt.policy.table_mlp, "policy.table_mlp");
  load_params(ckpt.policy.cost_mlp, "policy.cost_mlp");
  load_params(ckpt.policy.head, "policy.head");
  return ckpt;
}

}  // namespace shardplan
