// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0
//
// Embedding table descriptors, their 21-entry feature vectors, and raw
// lookup-batch ingestion.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "shardplan/error.hpp"

namespace shardplan {

inline constexpr int kNumBins = 17;
inline constexpr int kNumScalarFeatures = 4;  // dim, hash_size, pooling, size
inline constexpr int kNumFeatures = kNumScalarFeatures + kNumBins;
inline constexpr int kDefaultBatchSize = 65536;
inline constexpr int kDefaultBytesPerParam = 2;  // fp16 parameters

using FeatureVec = std::array<double, kNumFeatures>;
using FeatureMask = std::array<bool, kNumFeatures>;

inline FeatureMask full_feature_mask() {
  FeatureMask m;
  m.fill(true);
  return m;
}

/// One embedding table. `dist` is the normalized histogram of per-index
/// access counts over one batch, binned into (0,1], (1,2], (2,4], ...,
/// (16384,32768], (32768,inf). It is all-zero only for a never-accessed
/// table.
struct TableDesc {
  int id = 0;
  int dim = 1;              // embedding columns
  std::int64_t hash_size = 1;  // rows
  double pooling_factor = 0.0;  // mean indices per lookup
  double table_size_gb = 0.0;
  std::array<double, kNumBins> dist{};
};

/// Memory footprint in GB: rows * columns * bytes per parameter.
inline double table_memory_gb(std::int64_t hash_size, int dim,
                              int bytes_per_param = kDefaultBytesPerParam) {
  return static_cast<double>(hash_size) * dim * bytes_per_param /
         (1024.0 * 1024.0 * 1024.0);
}

inline double table_memory_gb(const TableDesc& t) {
  return table_memory_gb(t.hash_size, t.dim);
}

/// Histogram bin for an access count >= 1. Bin k (k >= 1) covers
/// (2^(k-1), 2^k]; the last bin is open-ended.
inline int access_count_bin(std::int64_t count) {
  if (count <= 1) return 0;
  int bin = 0;
  std::int64_t upper = 1;
  while (upper < count && bin < kNumBins - 1) {
    upper *= 2;
    ++bin;
  }
  return bin;
}

struct FeatureStat {
  double mean = 0.0;
  double std = 1.0;
};

using FeatureStats = std::array<FeatureStat, kNumFeatures>;

/// Raw 21-entry feature vector: [dim, hash_size, pooling_factor,
/// table_size_gb, dist_0..dist_16]. With `stats`, the four scalar entries
/// are standardized as (ln(1+x) - mean) / std; distribution entries are
/// passed through raw.
inline FeatureVec feature_vector(const TableDesc& t,
                                 const FeatureStats* stats = nullptr) {
  FeatureVec v{};
  v[0] = static_cast<double>(t.dim);
  v[1] = static_cast<double>(t.hash_size);
  v[2] = t.pooling_factor;
  v[3] = t.table_size_gb;
  for (int b = 0; b < kNumBins; ++b) v[kNumScalarFeatures + b] = t.dist[b];
  if (stats != nullptr) {
    for (int f = 0; f < kNumScalarFeatures; ++f) {
      const double sd = (*stats)[f].std > 1e-12 ? (*stats)[f].std : 1.0;
      v[f] = (std::log1p(v[f]) - (*stats)[f].mean) / sd;
    }
  }
  return v;
}

/// Per-feature mean/std of ln(1+x) across a table set. Only the scalar
/// entries are consumed by feature_vector; the rest are kept for symmetry.
inline FeatureStats compute_feature_stats(std::span<const TableDesc> tables) {
  FeatureStats stats{};
  if (tables.empty()) {
    for (auto& s : stats) s = {0.0, 1.0};
    return stats;
  }
  std::array<double, kNumFeatures> sum{};
  std::array<double, kNumFeatures> sum2{};
  for (const TableDesc& t : tables) {
    const FeatureVec raw = feature_vector(t);
    for (int f = 0; f < kNumFeatures; ++f) {
      const double y = std::log1p(raw[f]);
      sum[f] += y;
      sum2[f] += y * y;
    }
  }
  const double n = static_cast<double>(tables.size());
  for (int f = 0; f < kNumFeatures; ++f) {
    const double mean = sum[f] / n;
    const double var = std::max(0.0, sum2[f] / n - mean * mean);
    stats[f] = {mean, std::sqrt(var)};
  }
  return stats;
}

/// A pool of tables from which placement tasks are sampled. Ids are dense
/// 0..M-1. feature_stats are the pool's own standardization statistics.
struct TablePool {
  std::vector<TableDesc> tables;
  int batch_size = kDefaultBatchSize;
  FeatureStats feature_stats{};
};

/// Normalized (and later mask-ready) feature rows for the tables of one
/// task, indexed by the task-local table id.
struct TaskFeatures {
  std::vector<FeatureVec> rows;
};

inline TaskFeatures make_task_features(std::span<const TableDesc> tables,
                                       const FeatureStats* stats) {
  TaskFeatures f;
  f.rows.reserve(tables.size());
  for (const TableDesc& t : tables) f.rows.push_back(feature_vector(t, stats));
  return f;
}

// ---------------------------------------------------------------------------
// Lookup batches

/// Flat lookup batch ordered by (table_id, batch_offset): lookup k of
/// table t reads indices[offsets[t*B + k] .. offsets[t*B + k + 1]).
struct LookupBatch {
  std::vector<std::int64_t> indices;
  std::vector<std::int64_t> offsets;
  int num_tables = 0;
  int batch_size = 0;
};

inline void validate_batch(const LookupBatch& b) {
  if (b.num_tables < 0 || b.batch_size <= 0)
    raise(ErrorKind::malformed_batch, "non-positive table or batch count");
  const std::size_t want =
      static_cast<std::size_t>(b.num_tables) * b.batch_size + 1;
  if (b.offsets.size() != want)
    raise(ErrorKind::malformed_batch,
          "offsets length " + std::to_string(b.offsets.size()) +
              ", expected " + std::to_string(want));
  if (b.offsets.front() != 0)
    raise(ErrorKind::malformed_batch, "offsets must start at 0");
  for (std::size_t k = 1; k < b.offsets.size(); ++k)
    if (b.offsets[k] < b.offsets[k - 1])
      raise(ErrorKind::malformed_batch,
            "offsets decrease at position " + std::to_string(k));
  if (static_cast<std::size_t>(b.offsets.back()) != b.indices.size())
    raise(ErrorKind::malformed_batch, "last offset != indices length");
}

/// Builds a pool from one raw batch: per-table mean pooling factor and the
/// 17-bin access distribution, plus the size formula.
inline TablePool ingest_lookup_batch(const LookupBatch& b,
                                     std::span<const int> dims,
                                     std::span<const std::int64_t> hash_sizes,
                                     int bytes_per_param = kDefaultBytesPerParam) {
  validate_batch(b);
  if (dims.size() != static_cast<std::size_t>(b.num_tables) ||
      hash_sizes.size() != static_cast<std::size_t>(b.num_tables))
    raise(ErrorKind::bad_input, "dims/hash_sizes length != num_tables");

  TablePool pool;
  pool.batch_size = b.batch_size;
  pool.tables.reserve(b.num_tables);
  for (int t = 0; t < b.num_tables; ++t) {
    TableDesc desc;
    desc.id = t;
    desc.dim = dims[t];
    desc.hash_size = hash_sizes[t];
    if (desc.dim < 1 || desc.hash_size < 1)
      raise(ErrorKind::bad_input, "dim and hash_size must be >= 1");
    desc.table_size_gb =
        table_memory_gb(desc.hash_size, desc.dim, bytes_per_param);

    const std::size_t lo = static_cast<std::size_t>(t) * b.batch_size;
    std::int64_t total = 0;
    std::unordered_map<std::int64_t, std::int64_t> counts;
    for (int k = 0; k < b.batch_size; ++k) {
      const std::int64_t beg = b.offsets[lo + k];
      const std::int64_t end = b.offsets[lo + k + 1];
      total += end - beg;
      for (std::int64_t p = beg; p < end; ++p) ++counts[b.indices[p]];
    }
    desc.pooling_factor = static_cast<double>(total) / b.batch_size;

    if (total > 0) {
      // Each index contributes its access count to the bin covering that
      // count; normalizing yields the share of accesses per frequency class.
      for (const auto& [idx, c] : counts)
        desc.dist[access_count_bin(c)] += static_cast<double>(c);
      for (double& m : desc.dist) m /= static_cast<double>(total);
    }
    pool.tables.push_back(desc);
  }
  pool.feature_stats = compute_feature_stats(pool.tables);
  return pool;
}

// ---------------------------------------------------------------------------
// Binary lookup-batch file: magic "DSLB", u32 version, u32 num_tables,
// u32 batch_size, u64 offsets_len, i64 offsets[], u64 indices_len,
// i64 indices[]. Little-endian.

inline constexpr std::uint32_t kBatchVersion = 1;

namespace detail {

template <class T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  std::make_unsigned_t<T> u = static_cast<std::make_unsigned_t<T>>(value);
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(buf, sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  static_assert(std::is_integral_v<T>);
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if (!is) raise(ErrorKind::bad_input, "unexpected end of file");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(buf[i]))
         << (8 * i);
  return static_cast<T>(u);
}

}  // namespace detail

inline void save_lookup_batch(const LookupBatch& b, const std::string& path) {
  validate_batch(b);
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorKind::bad_input, "cannot open " + path + " for writing");
  os.write("DSLB", 4);
  detail::write_le<std::uint32_t>(os, kBatchVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(b.num_tables));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(b.batch_size));
  detail::write_le<std::uint64_t>(os, b.offsets.size());
  for (std::int64_t v : b.offsets) detail::write_le<std::int64_t>(os, v);
  detail::write_le<std::uint64_t>(os, b.indices.size());
  for (std::int64_t v : b.indices) detail::write_le<std::int64_t>(os, v);
  if (!os) raise(ErrorKind::bad_input, "write failed for " + path);
}

inline LookupBatch load_lookup_batch(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorKind::bad_input, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DSLB", 4) != 0)
    raise(ErrorKind::bad_input, path + ": not a lookup batch file");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kBatchVersion)
    raise(ErrorKind::bad_input,
          "unsupported batch version " + std::to_string(version));
  LookupBatch b;
  b.num_tables = static_cast<int>(detail::read_le<std::uint32_t>(is));
  b.batch_size = static_cast<int>(detail::read_le<std::uint32_t>(is));
  const auto offsets_len = detail::read_le<std::uint64_t>(is);
  b.offsets.resize(offsets_len);
  for (auto& v : b.offsets) v = detail::read_le<std::int64_t>(is);
  const auto indices_len = detail::read_le<std::uint64_t>(is);
  b.indices.resize(indices_len);
  for (auto& v : b.indices) v = detail::read_le<std::int64_t>(is);
  validate_batch(b);
  return b;
}

// ---------------------------------------------------------------------------
// Pool JSON

inline nlohmann::json pool_to_json(const TablePool& pool) {
  nlohmann::json tables = nlohmann::json::array();
  for (const TableDesc& t : pool.tables) {
    tables.push_back({{"id", t.id},
                      {"dim", t.dim},
                      {"hash_size", t.hash_size},
                      {"pooling_factor", t.pooling_factor},
                      {"table_size_gb", t.table_size_gb},
                      {"dist", t.dist}});
  }
  nlohmann::json stats = nlohmann::json::array();
  for (const FeatureStat& s : pool.feature_stats)
    stats.push_back({{"mean", s.mean}, {"std", s.std}});
  return {{"batch_size", pool.batch_size},
          {"tables", std::move(tables)},
          {"feature_stats", std::move(stats)}};
}

inline TablePool pool_from_json(const nlohmann::json& j) {
  TablePool pool;
  try {
    pool.batch_size = j.at("batch_size").get<int>();
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
      pool.tables.push_back(t);
    }
    const auto& stats = j.at("feature_stats");
    if (stats.size() != kNumFeatures)
      raise(ErrorKind::bad_input, "feature_stats must have 21 entries");
    for (int f = 0; f < kNumFeatures; ++f)
      pool.feature_stats[f] = {stats[f].at("mean").get<double>(),
                               stats[f].at("std").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::bad_input, std::string("bad pool json: ") + e.what());
  }
  for (std::size_t i = 0; i < pool.tables.size(); ++i)
    if (pool.tables[i].id != static_cast<int>(i))
      raise(ErrorKind::bad_input, "table ids must be dense 0..M-1");
  return pool;
}

inline void save_pool(const TablePool& pool, const std::string& path) {
  std::ofstream os(path);
  if (!os) raise(ErrorKind::bad_input, "cannot open " + path + " for writing");
  os << pool_to_json(pool).dump(2) << '\n';
}

inline TablePool load_pool(const std::string& path) {
  std::ifstream is(path);
  if (!is) raise(ErrorKind::bad_input, "cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::bad_input, path + ": " + e.what());
  }
  return pool_from_json(j);
}

}  // namespace shardplan
