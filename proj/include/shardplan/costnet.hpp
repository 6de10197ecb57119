// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0
//
// Learned cost model: a shared per-table MLP, a reduction over the tables
// of each device, per-device forward/backward/communication heads, a
// reduction across devices, and an overall-cost head. Trained with squared
// error against collected cost data. The reductions make the network
// indifferent to the number of tables and devices.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shardplan/error.hpp"
#include "shardplan/mdp.hpp"
#include "shardplan/nn.hpp"
#include "shardplan/rng.hpp"
#include "shardplan/table.hpp"

namespace shardplan {

enum class Reduction { sum, mean, max };

inline const char* reduction_name(Reduction r) {
  switch (r) {
    case Reduction::sum: return "sum";
    case Reduction::mean: return "mean";
    case Reduction::max: return "max";
  }
  return "?";
}

inline Reduction reduction_from_name(const std::string& s) {
  if (s == "sum") return Reduction::sum;
  if (s == "mean") return Reduction::mean;
  if (s == "max") return Reduction::max;
  raise(ErrorKind::bad_input, "unknown reduction: " + s);
}

inline constexpr int kTableHidden = 128;
inline constexpr int kReprDim = 32;
inline constexpr int kHeadHidden = 64;

struct CostNet {
  Mlp table_mlp;  // 21-128-32
  Mlp head_fwd;   // 32-64-1
  Mlp head_bwd;
  Mlp head_comm;
  Mlp head_overall;
  Reduction reduction_tables = Reduction::sum;
  Reduction reduction_devices = Reduction::max;
  FeatureMask feature_mask = full_feature_mask();

  static CostNet make(std::uint64_t seed,
                      Reduction tables = Reduction::sum,
                      Reduction devices = Reduction::max,
                      FeatureMask mask = full_feature_mask(),
                      bool table_output_relu = false) {
    CostNet net;
    net.table_mlp = Mlp::make({kNumFeatures, kTableHidden, kReprDim},
                              subseed(seed, "cost.table"), table_output_relu);
    net.head_fwd = Mlp::make({kReprDim, kHeadHidden, 1}, subseed(seed, "cost.fwd"));
    net.head_bwd = Mlp::make({kReprDim, kHeadHidden, 1}, subseed(seed, "cost.bwd"));
    net.head_comm = Mlp::make({kReprDim, kHeadHidden, 1}, subseed(seed, "cost.comm"));
    net.head_overall =
        Mlp::make({kReprDim, kHeadHidden, 1}, subseed(seed, "cost.overall"));
    net.reduction_tables = tables;
    net.reduction_devices = devices;
    net.feature_mask = mask;
    return net;
  }

  std::vector<const Mlp*> parts() const {
    return {&table_mlp, &head_fwd, &head_bwd, &head_comm, &head_overall};
  }
  std::vector<Mlp*> parts() {
    return {&table_mlp, &head_fwd, &head_bwd, &head_comm, &head_overall};
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Mlp* m : parts()) n += m->params.size();
    return n;
  }

  std::vector<double> param_vector() const {
    std::vector<double> v;
    v.reserve(param_count());
    for (const Mlp* m : parts()) v.insert(v.end(), m->params.begin(), m->params.end());
    return v;
  }

  void set_param_vector(std::span<const double> v) {
    if (v.size() != param_count())
      raise(ErrorKind::shape_mismatch, "parameter vector size mismatch");
    std::size_t off = 0;
    for (Mlp* m : parts()) {
      std::copy(v.begin() + off, v.begin() + off + m->params.size(),
                m->params.begin());
      off += m->params.size();
    }
  }

  FeatureVec masked(const FeatureVec& row) const {
    FeatureVec x = row;
    for (int f = 0; f < kNumFeatures; ++f)
      if (!feature_mask[f]) x[f] = 0.0;
    return x;
  }
};

namespace detail {

struct ReduceBack {
  // For max: source index (into the reduced list) per component.
  std::vector<int> argmax;
  std::size_t count = 0;
};

inline std::vector<double> reduce(Reduction r,
                                  const std::vector<std::vector<double>>& items,
                                  int dim, ReduceBack* back) {
  std::vector<double> out(dim, 0.0);
  if (back) {
    back->count = items.size();
    back->argmax.assign(r == Reduction::max ? dim : 0, -1);
  }
  if (items.empty()) return out;  // empty reduction is the zero vector
  if (r == Reduction::max) {
    for (int k = 0; k < dim; ++k) {
      int arg = 0;
      double best = items[0][k];
      for (std::size_t i = 1; i < items.size(); ++i) {
        if (items[i][k] > best) {  // ties keep the lowest index
          best = items[i][k];
          arg = static_cast<int>(i);
        }
      }
      out[k] = best;
      if (back) back->argmax[k] = arg;
    }
    return out;
  }
  for (const auto& it : items)
    for (int k = 0; k < dim; ++k) out[k] += it[k];
  if (r == Reduction::mean)
    for (double& v : out) v /= static_cast<double>(items.size());
  return out;
}

/// Distributes d(out) back onto the reduced items.
inline void reduce_backward(Reduction r, const ReduceBack& back,
                            std::span<const double> dout,
                            std::vector<std::vector<double>>& ditems) {
  if (ditems.empty()) return;
  switch (r) {
    case Reduction::sum:
      for (auto& di : ditems)
        for (std::size_t k = 0; k < dout.size(); ++k) di[k] += dout[k];
      break;
    case Reduction::mean: {
      const double inv = 1.0 / static_cast<double>(back.count);
      for (auto& di : ditems)
        for (std::size_t k = 0; k < dout.size(); ++k) di[k] += dout[k] * inv;
      break;
    }
    case Reduction::max:
      for (std::size_t k = 0; k < dout.size(); ++k)
        ditems[back.argmax[k]][k] += dout[k];
      break;
  }
}

}  // namespace detail

struct CostPrediction {
  std::vector<std::array<double, 3>> q;  // per device (fwd, bwd, comm)
  double overall = 0.0;
};

namespace detail {

struct CostForward {
  // per device, per table: table_mlp caches aligned with the sorted id list
  std::vector<std::vector<int>> ids;
  std::vector<std::vector<MlpCache>> table_caches;
  std::vector<std::vector<std::vector<double>>> reprs;  // per device per table
  std::vector<std::vector<double>> device_repr;
  std::vector<ReduceBack> table_back;
  ReduceBack device_back;
  std::vector<double> overall_repr;
  std::array<std::vector<MlpCache>, 3> head_caches;  // fwd/bwd/comm per device
  MlpCache overall_cache;
};

inline CostPrediction costnet_forward(const CostNet& net,
                                      const std::vector<std::vector<int>>& sets,
                                      const TaskFeatures& features,
                                      CostForward* fw) {
  const int D = static_cast<int>(sets.size());
  CostPrediction out;
  out.q.assign(D, {0.0, 0.0, 0.0});
  if (fw) {
    fw->ids.assign(D, {});
    fw->table_caches.assign(D, {});
    fw->reprs.assign(D, {});
    fw->table_back.assign(D, {});
    fw->head_caches[0].assign(D, {});
    fw->head_caches[1].assign(D, {});
    fw->head_caches[2].assign(D, {});
  }

  std::vector<std::vector<double>> device_repr(D);
  for (int d = 0; d < D; ++d) {
    std::vector<int> ids = sets[d];
    std::sort(ids.begin(), ids.end());  // canonical order, exact invariance
    std::vector<std::vector<double>> reprs;
    reprs.reserve(ids.size());
    std::vector<MlpCache> caches(fw ? ids.size() : 0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const int id = ids[i];
      if (id < 0 || static_cast<std::size_t>(id) >= features.rows.size())
        raise(ErrorKind::unknown_table, "table id " + std::to_string(id));
      const FeatureVec x = net.masked(features.rows[id]);
      reprs.push_back(
          mlp_forward(net.table_mlp, x, fw ? &caches[i] : nullptr));
    }
    detail::ReduceBack back;
    device_repr[d] = detail::reduce(net.reduction_tables, reprs, kReprDim,
                                    fw ? &back : nullptr);
    const Mlp* heads[3] = {&net.head_fwd, &net.head_bwd, &net.head_comm};
    for (int h = 0; h < 3; ++h) {
      MlpCache hc;
      const std::vector<double> y =
          mlp_forward(*heads[h], device_repr[d], fw ? &hc : nullptr);
      out.q[d][h] = y[0];
      if (fw) fw->head_caches[h][d] = std::move(hc);
    }
    if (fw) {
      fw->ids[d] = std::move(ids);
      fw->table_caches[d] = std::move(caches);
      fw->reprs[d] = std::move(reprs);
      fw->table_back[d] = back;
    }
  }

  detail::ReduceBack dev_back;
  std::vector<double> overall_repr = detail::reduce(
      net.reduction_devices, device_repr, kReprDim, fw ? &dev_back : nullptr);
  MlpCache oc;
  out.overall =
      mlp_forward(net.head_overall, overall_repr, fw ? &oc : nullptr)[0];
  if (fw) {
    fw->device_repr = std::move(device_repr);
    fw->device_back = dev_back;
    fw->overall_repr = std::move(overall_repr);
    fw->overall_cache = std::move(oc);
  }
  return out;
}

}  // namespace detail

/// Prediction surface: per-device cost features and the overall cost,
/// clamped at zero. Accepts any device count and any table count.
inline CostPrediction costnet_predict(const CostNet& net,
                                      const std::vector<std::vector<int>>& sets,
                                      const TaskFeatures& features) {
  CostPrediction p = detail::costnet_forward(net, sets, features, nullptr);
  for (auto& q : p.q)
    for (double& v : q) v = std::max(0.0, v);
  p.overall = std::max(0.0, p.overall);
  return p;
}

/// Predicted cost of a table standing alone on one device: the sum of its
/// three clamped cost features. Used to order tables before an episode.
inline double single_table_cost(const CostNet& net, int table_id,
                                const TaskFeatures& features) {
  const CostPrediction p = costnet_predict(net, {{table_id}}, features);
  return p.q[0][0] + p.q[0][1] + p.q[0][2];
}

// ---------------------------------------------------------------------------
// Training data

/// One supervised example: a (possibly partial) assignment with measured
/// per-device cost features, plus the measured overall cost when the
/// assignment is a complete placement.
struct CostSample {
  std::shared_ptr<const TaskFeatures> features;
  std::vector<std::vector<int>> device_tables;
  std::vector<std::array<double, 3>> target_q;
  std::optional<double> target_overall;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  void add(CostSample sample) {
    if (capacity_ > 0 && samples_.size() == capacity_)
      samples_.erase(samples_.begin());
    samples_.push_back(std::move(sample));
  }

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const CostSample& operator[](std::size_t i) const { return samples_[i]; }

  const CostSample& sample(Rng& rng) const {
    if (samples_.empty()) raise(ErrorKind::bad_input, "empty replay buffer");
    return samples_[rng.index(samples_.size())];
  }

  nlohmann::json dump() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const CostSample& s : samples_) {
      nlohmann::json q = nlohmann::json::array();
      for (const auto& t : s.target_q) q.push_back(t);
      nlohmann::json entry = {{"device_tables", s.device_tables},
                              {"target_q", std::move(q)}};
      if (s.target_overall) entry["target_overall"] = *s.target_overall;
      arr.push_back(std::move(entry));
    }
    return arr;
  }

 private:
  std::vector<CostSample> samples_;
  std::size_t capacity_;
};

// ---------------------------------------------------------------------------
// Loss: sum over devices of the mean squared error of the three cost
// features, plus the squared error of the overall cost when the sample has
// one; averaged over the batch. Gradients flow through the reductions
// (sum/mean spread, max routes to the argmax with ties to the lowest index).

inline double costnet_loss_and_grad(const CostNet& net,
                                    std::span<const CostSample* const> batch,
                                    std::vector<double>& grad) {
  if (batch.empty()) raise(ErrorKind::bad_input, "empty batch");
  grad.assign(net.param_count(), 0.0);

  const std::size_t n_table = net.table_mlp.params.size();
  const std::size_t n_head = net.head_fwd.params.size();
  double* g_table = grad.data();
  double* g_fwd = g_table + n_table;
  double* g_bwd = g_fwd + n_head;
  double* g_comm = g_bwd + n_head;
  double* g_overall = g_comm + n_head;

  auto accum = [](double* dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  };

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<double> part(n_head);
  std::vector<double> tpart(n_table);

  for (const CostSample* s : batch) {
    const int D = static_cast<int>(s->device_tables.size());
    if (s->target_q.size() != static_cast<std::size_t>(D))
      raise(ErrorKind::shape_mismatch, "target_q size != device count");
    detail::CostForward fw;
    const CostPrediction pred =
        detail::costnet_forward(net, s->device_tables, *s->features, &fw);

    std::vector<std::vector<double>> d_device(D,
                                              std::vector<double>(kReprDim, 0.0));

    const Mlp* heads[3] = {&net.head_fwd, &net.head_bwd, &net.head_comm};
    double* head_grads[3] = {g_fwd, g_bwd, g_comm};
    for (int d = 0; d < D; ++d) {
      for (int h = 0; h < 3; ++h) {
        const double err = pred.q[d][h] - s->target_q[d][h];
        loss += err * err / 3.0 * inv_n;
        const double dy = 2.0 * err / 3.0 * inv_n;
        part.assign(n_head, 0.0);
        std::vector<double> dx;
        mlp_backward(*heads[h], fw.head_caches[h][d],
                     std::span<const double>(&dy, 1), part, &dx);
        accum(head_grads[h], part);
        for (int k = 0; k < kReprDim; ++k) d_device[d][k] += dx[k];
      }
    }

    if (s->target_overall) {
      const double err = pred.overall - *s->target_overall;
      loss += err * err * inv_n;
      const double dy = 2.0 * err * inv_n;
      part.assign(n_head, 0.0);
      std::vector<double> d_overall_repr;
      mlp_backward(net.head_overall, fw.overall_cache,
                   std::span<const double>(&dy, 1), part, &d_overall_repr);
      accum(g_overall, part);
      detail::reduce_backward(net.reduction_devices, fw.device_back,
                              d_overall_repr, d_device);
    }

    for (int d = 0; d < D; ++d) {
      if (fw.ids[d].empty()) continue;
      std::vector<std::vector<double>> d_tables(
          fw.ids[d].size(), std::vector<double>(kReprDim, 0.0));
      detail::reduce_backward(net.reduction_tables, fw.table_back[d],
                              d_device[d], d_tables);
      for (std::size_t i = 0; i < fw.ids[d].size(); ++i) {
        tpart.assign(n_table, 0.0);
        mlp_backward(net.table_mlp, fw.table_caches[d][i], d_tables[i], tpart,
                     nullptr);
        accum(g_table, tpart);
      }
    }
  }
  return loss;
}

/// N mini-batch updates sampled uniformly from the buffer. Returns the mean
/// batch loss across the performed steps.
inline double costnet_train_steps(CostNet& net, const ReplayBuffer& buffer,
                                  int n_steps, int n_batch, AdamState& adam,
                                  Rng& rng) {
  if (buffer.empty() || n_steps <= 0) return 0.0;
  std::vector<double> grad;
  std::vector<const CostSample*> batch;
  double loss_sum = 0.0;
  for (int s = 0; s < n_steps; ++s) {
    batch.clear();
    for (int b = 0; b < n_batch; ++b) batch.push_back(&buffer.sample(rng));
    loss_sum += costnet_loss_and_grad(net, batch, grad);
    std::vector<double> params = net.param_vector();
    adam.update(params, grad);
    net.set_param_vector(params);
  }
  return loss_sum / n_steps;
}

// ---------------------------------------------------------------------------

/// Provider backed by the cost network: the environment built on it never
/// touches the oracle. State features are clamped at zero; the final
/// reward uses the raw overall prediction.
class EstimatedCostProvider : public CostProvider {
 public:
  EstimatedCostProvider(const CostNet& net, const TaskFeatures& features,
                        int num_devices)
      : net_(net), features_(features), num_devices_(num_devices) {
    // The network is frozen while a provider is alive, so per-table
    // representations can be computed once.
    reprs_.reserve(features.rows.size());
    for (const FeatureVec& row : features.rows)
      reprs_.push_back(mlp_forward(net.table_mlp, net.masked(row)));
  }

  std::vector<std::array<double, 3>> cost_features(
      const std::vector<std::vector<int>>& assignment) override {
    const int D = static_cast<int>(assignment.size());
    std::vector<std::array<double, 3>> q(D, {0.0, 0.0, 0.0});
    for (int d = 0; d < D; ++d) {
      const std::vector<double> h = device_repr(assignment[d]);
      q[d] = {std::max(0.0, mlp_forward(net_.head_fwd, h)[0]),
              std::max(0.0, mlp_forward(net_.head_bwd, h)[0]),
              std::max(0.0, mlp_forward(net_.head_comm, h)[0])};
    }
    return q;
  }

  double overall(const Placement& placement) override {
    std::vector<std::vector<int>> sets(num_devices_);
    for (std::size_t i = 0; i < placement.size(); ++i) {
      if (placement[i] < 0 || placement[i] >= num_devices_)
        raise(ErrorKind::bad_input, "device id out of range");
      sets[placement[i]].push_back(static_cast<int>(i));
    }
    return overall_of_sets(sets);
  }

  double overall_of_sets(const std::vector<std::vector<int>>& sets) {
    std::vector<std::vector<double>> dev;
    dev.reserve(sets.size());
    for (const auto& ids : sets) dev.push_back(device_repr(ids));
    const std::vector<double> h =
        detail::reduce(net_.reduction_devices, dev, kReprDim, nullptr);
    return mlp_forward(net_.head_overall, h)[0];
  }

 private:
  std::vector<double> device_repr(std::vector<int> ids) const {
    std::sort(ids.begin(), ids.end());
    std::vector<std::vector<double>> items;
    items.reserve(ids.size());
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= reprs_.size())
        raise(ErrorKind::unknown_table, "table id " + std::to_string(id));
      items.push_back(reprs_[id]);
    }
    return detail::reduce(net_.reduction_tables, items, kReprDim, nullptr);
  }

  const CostNet& net_;
  const TaskFeatures& features_;
  int num_devices_;
  std::vector<std::vector<double>> reprs_;
};

}  // namespace shardplan
