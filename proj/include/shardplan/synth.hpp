// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "shardplan/error.hpp"
#include "shardplan/rng.hpp"
#include "shardplan/table.hpp"

namespace shardplan {

/// Generator spec for synthetic pools shaped like large production table
/// sets: log-uniform hash sizes around 10^6, power-law pooling factors,
/// and a variable share of accesses concentrated on hot indices.
struct SynthSpec {
  int num_tables = 856;
  std::vector<std::pair<int, double>> dim_choices = {{16, 1.0}};
  double hash_log10_lo = 4.5;
  double hash_log10_hi = 7.3;
  double pooling_exponent = 1.7;  // pdf ~ x^-a on [1, pooling_max]
  double pooling_max = 200.0;
  double hot_fraction_lo = 0.0;
  double hot_fraction_hi = 0.8;
  int batch_size = kDefaultBatchSize;
  int bytes_per_param = kDefaultBytesPerParam;
};

inline void validate_spec(const SynthSpec& s) {
  if (s.num_tables < 1) raise(ErrorKind::bad_spec, "num_tables must be >= 1");
  if (s.dim_choices.empty()) raise(ErrorKind::bad_spec, "dim_choices empty");
  double wsum = 0.0;
  for (const auto& [dim, w] : s.dim_choices) {
    if (dim < 1) raise(ErrorKind::bad_spec, "dim choice must be >= 1");
    if (w < 0.0) raise(ErrorKind::bad_spec, "dim weight must be >= 0");
    wsum += w;
  }
  if (wsum <= 0.0) raise(ErrorKind::bad_spec, "dim weights sum to 0");
  if (s.hash_log10_lo > s.hash_log10_hi || s.hash_log10_lo < 0.0)
    raise(ErrorKind::bad_spec, "empty hash size range");
  if (s.pooling_max < 1.0) raise(ErrorKind::bad_spec, "pooling_max must be >= 1");
  if (s.pooling_exponent <= 0.0)
    raise(ErrorKind::bad_spec, "pooling_exponent must be > 0");
  if (s.hot_fraction_lo > s.hot_fraction_hi || s.hot_fraction_lo < 0.0 ||
      s.hot_fraction_hi > 1.0)
    raise(ErrorKind::bad_spec, "hot_fraction range must lie in [0, 1]");
  if (s.batch_size < 1) raise(ErrorKind::bad_spec, "batch_size must be >= 1");
  if (s.bytes_per_param < 1)
    raise(ErrorKind::bad_spec, "bytes_per_param must be >= 1");
}

namespace detail {

// Inverse CDF of the truncated power law pdf ~ x^-a on [1, L].
inline double power_law(double u, double a, double L) {
  if (L <= 1.0) return 1.0;
  if (std::abs(a - 1.0) < 1e-12) return std::pow(L, u);
  const double p = 1.0 - a;
  return std::pow(1.0 + u * (std::pow(L, p) - 1.0), 1.0 / p);
}

}  // namespace detail

/// Deterministic for a fixed seed: same seed, byte-identical pool.
inline TablePool synth_pool(const SynthSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Rng rng(mix64(seed));

  double wsum = 0.0;
  for (const auto& [dim, w] : spec.dim_choices) wsum += w;

  TablePool pool;
  pool.batch_size = spec.batch_size;
  pool.tables.reserve(spec.num_tables);
  for (int i = 0; i < spec.num_tables; ++i) {
    TableDesc t;
    t.id = i;

    double pick = rng.u01() * wsum;
    t.dim = spec.dim_choices.back().first;
    for (const auto& [dim, w] : spec.dim_choices) {
      pick -= w;
      if (pick < 0.0) {
        t.dim = dim;
        break;
      }
    }

    t.hash_size = static_cast<std::int64_t>(
        std::llround(std::pow(10.0, rng.uniform(spec.hash_log10_lo,
                                                spec.hash_log10_hi))));
    if (t.hash_size < 1) t.hash_size = 1;
    t.pooling_factor =
        detail::power_law(rng.u01(), spec.pooling_exponent, spec.pooling_max);
    t.table_size_gb =
        table_memory_gb(t.hash_size, t.dim, spec.bytes_per_param);

    // Hot mass lands in one of the top frequency bins, the remainder in the
    // three lowest bins.
    const double hot = rng.uniform(spec.hot_fraction_lo, spec.hot_fraction_hi);
    const int hot_bin = 12 + static_cast<int>(rng.below(5));
    t.dist[hot_bin] += hot;
    const double rest = 1.0 - hot;
    t.dist[0] += 0.5 * rest;
    t.dist[1] += 0.3 * rest;
    t.dist[2] += 0.2 * rest;

    pool.tables.push_back(t);
  }
  pool.feature_stats = compute_feature_stats(pool.tables);
  return pool;
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    if (j.contains("num_tables")) s.num_tables = j.at("num_tables").get<int>();
    if (j.contains("dim_choices")) {
      s.dim_choices.clear();
      for (const auto& c : j.at("dim_choices"))
        s.dim_choices.emplace_back(c.at(0).get<int>(), c.at(1).get<double>());
    }
    if (j.contains("hash_size_log10_range")) {
      s.hash_log10_lo = j.at("hash_size_log10_range").at(0).get<double>();
      s.hash_log10_hi = j.at("hash_size_log10_range").at(1).get<double>();
    }
    if (j.contains("pooling_exponent"))
      s.pooling_exponent = j.at("pooling_exponent").get<double>();
    if (j.contains("pooling_max")) s.pooling_max = j.at("pooling_max").get<double>();
    if (j.contains("hot_fraction_range")) {
      s.hot_fraction_lo = j.at("hot_fraction_range").at(0).get<double>();
      s.hot_fraction_hi = j.at("hot_fraction_range").at(1).get<double>();
    }
    if (j.contains("batch_size")) s.batch_size = j.at("batch_size").get<int>();
    if (j.contains("bytes_per_param"))
      s.bytes_per_param = j.at("bytes_per_param").get<int>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::bad_input, std::string("bad pool spec json: ") + e.what());
  }
  validate_spec(s);
  return s;
}

}  // namespace shardplan
