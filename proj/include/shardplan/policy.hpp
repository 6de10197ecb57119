// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0
//
// Placement policy: a shared per-table MLP with sum reduction per device,
// a cost-feature MLP, and a shared linear scoring head over the
// concatenated device representation, softmaxed over the legal devices.
// Trained with REINFORCE against a batch-mean baseline plus an entropy
// bonus.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "shardplan/costnet.hpp"
#include "shardplan/error.hpp"
#include "shardplan/mdp.hpp"
#include "shardplan/nn.hpp"
#include "shardplan/rng.hpp"
#include "shardplan/table.hpp"

namespace shardplan {

inline constexpr int kCostFeatures = 3;

struct PolicyNet {
  Mlp table_mlp;  // 21-128-32, independent of the cost network's
  Mlp cost_mlp;   // 3-64-32
  Mlp head;       // 64-1, single linear layer
  FeatureMask feature_mask = full_feature_mask();

  static PolicyNet make(std::uint64_t seed,
                        FeatureMask mask = full_feature_mask()) {
    PolicyNet net;
    net.table_mlp =
        Mlp::make({kNumFeatures, kTableHidden, kReprDim}, subseed(seed, "pol.table"));
    net.cost_mlp =
        Mlp::make({kCostFeatures, kHeadHidden, kReprDim}, subseed(seed, "pol.cost"));
    net.head = Mlp::make({2 * kReprDim, 1}, subseed(seed, "pol.head"));
    net.feature_mask = mask;
    return net;
  }

  std::vector<const Mlp*> parts() const { return {&table_mlp, &cost_mlp, &head}; }
  std::vector<Mlp*> parts() { return {&table_mlp, &cost_mlp, &head}; }

  std::size_t param_count() const {
    return table_mlp.params.size() + cost_mlp.params.size() + head.params.size();
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

/// Device scores for one augmented state. Table representations are
/// supplied by the caller so they can be cached across the steps of an
/// episode.
inline std::vector<double> policy_scores(
    const PolicyNet& net, const std::vector<std::vector<int>>& sets,
    const std::vector<std::array<double, 3>>& q,
    const std::vector<std::vector<double>>& table_reprs,
    std::vector<MlpCache>* cost_caches, std::vector<MlpCache>* head_caches,
    std::vector<std::vector<double>>* concat_out) {
  const int D = static_cast<int>(sets.size());
  if (q.size() != static_cast<std::size_t>(D))
    raise(ErrorKind::shape_mismatch, "q size != device count");
  std::vector<double> scores(D);
  for (int d = 0; d < D; ++d) {
    std::vector<int> ids = sets[d];
    std::sort(ids.begin(), ids.end());
    std::vector<double> concat(2 * kReprDim, 0.0);
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= table_reprs.size())
        raise(ErrorKind::unknown_table, "table id " + std::to_string(id));
      for (int k = 0; k < kReprDim; ++k) concat[k] += table_reprs[id][k];
    }
    MlpCache cc;
    const std::vector<double> c = mlp_forward(
        net.cost_mlp, std::span<const double>(q[d].data(), kCostFeatures),
        cost_caches ? &cc : nullptr);
    for (int k = 0; k < kReprDim; ++k) concat[kReprDim + k] = c[k];
    MlpCache hc;
    scores[d] =
        mlp_forward(net.head, concat, head_caches ? &hc : nullptr)[0];
    if (cost_caches) (*cost_caches)[d] = std::move(cc);
    if (head_caches) (*head_caches)[d] = std::move(hc);
    if (concat_out) (*concat_out)[d] = std::move(concat);
  }
  return scores;
}

inline std::vector<std::vector<double>> table_reprs(const PolicyNet& net,
                                                    const TaskFeatures& features,
                                                    std::vector<MlpCache>* caches) {
  std::vector<std::vector<double>> reprs;
  reprs.reserve(features.rows.size());
  if (caches) caches->assign(features.rows.size(), {});
  for (std::size_t i = 0; i < features.rows.size(); ++i)
    reprs.push_back(mlp_forward(net.table_mlp, net.masked(features.rows[i]),
                                caches ? &(*caches)[i] : nullptr));
  return reprs;
}

}  // namespace detail

/// Action distribution over devices; illegal devices get probability
/// exactly 0.
inline std::vector<double> action_probs(const PolicyNet& net,
                                        const std::vector<std::vector<int>>& sets,
                                        const std::vector<std::array<double, 3>>& q,
                                        const std::vector<bool>& legal,
                                        const TaskFeatures& features) {
  const auto reprs = detail::table_reprs(net, features, nullptr);
  const std::vector<double> scores =
      detail::policy_scores(net, sets, q, reprs, nullptr, nullptr, nullptr);
  return softmax_masked(scores, legal);
}

inline std::vector<double> action_probs(const PolicyNet& net,
                                        const AugmentedState& state,
                                        const std::vector<bool>& legal,
                                        const TaskFeatures& features) {
  return action_probs(net, state.device_tables, state.q, legal, features);
}

/// Samples a device from the action distribution; returns (action, log p).
inline std::pair<int, double> sample_action(const std::vector<double>& probs,
                                            Rng& rng) {
  const double u = rng.u01();
  double acc = 0.0;
  int last = -1;
  for (std::size_t d = 0; d < probs.size(); ++d) {
    if (probs[d] <= 0.0) continue;
    acc += probs[d];
    last = static_cast<int>(d);
    if (u < acc) return {last, std::log(probs[d])};
  }
  if (last < 0) raise(ErrorKind::no_legal_action, "no positive probability");
  return {last, std::log(probs[last])};
}

/// Highest-probability device; ties go to the lowest device index.
inline int greedy_action(const std::vector<double>& probs) {
  int best = -1;
  double best_p = -1.0;
  for (std::size_t d = 0; d < probs.size(); ++d) {
    if (probs[d] > best_p) {
      best_p = probs[d];
      best = static_cast<int>(d);
    }
  }
  if (best < 0 || best_p <= 0.0)
    raise(ErrorKind::no_legal_action, "no positive probability");
  return best;
}

// ---------------------------------------------------------------------------
// Episodes and the REINFORCE update

struct EpisodeStep {
  std::vector<std::vector<int>> device_tables;  // state before the action
  std::vector<std::array<double, 3>> q;
  std::vector<bool> legal;
  int action = 0;
  double log_prob = 0.0;
};

struct Episode {
  std::shared_ptr<const TaskFeatures> features;
  std::vector<EpisodeStep> steps;
  double reward = 0.0;  // negative overall cost at the final step
};

/// Minimized objective over a batch of same-task episodes:
///   mean_e [ -A_e * sum_t log pi(a_t|s_t) - w * sum_t H(pi(.|s_t)) ]
/// with A_e = R_e - mean(R). Returns the objective and fills the analytic
/// gradient (layout: table_mlp, cost_mlp, head).
inline double reinforce_loss_and_grad(const PolicyNet& net,
                                      std::span<const Episode> episodes,
                                      double w_entropy,
                                      std::vector<double>& grad) {
  if (episodes.empty()) raise(ErrorKind::bad_input, "no episodes");
  grad.assign(net.param_count(), 0.0);
  const std::size_t n_table = net.table_mlp.params.size();
  const std::size_t n_cost = net.cost_mlp.params.size();
  double* g_table = grad.data();
  double* g_cost = g_table + n_table;
  double* g_head = g_cost + n_cost;

  double mean_reward = 0.0;
  for (const Episode& e : episodes) mean_reward += e.reward;
  mean_reward /= static_cast<double>(episodes.size());
  const double inv_e = 1.0 / static_cast<double>(episodes.size());

  double objective = 0.0;
  std::vector<double> cost_part(n_cost);
  std::vector<double> head_part(net.head.params.size());
  std::vector<double> table_part(n_table);

  for (const Episode& e : episodes) {
    const double advantage = e.reward - mean_reward;
    std::vector<MlpCache> table_caches;
    const auto reprs = detail::table_reprs(net, *e.features, &table_caches);
    // d(objective)/d(table repr), accumulated across steps per table.
    std::vector<std::vector<double>> d_repr(reprs.size(),
                                            std::vector<double>(kReprDim, 0.0));
    std::vector<bool> touched(reprs.size(), false);

    for (const EpisodeStep& st : e.steps) {
      const int D = static_cast<int>(st.device_tables.size());
      std::vector<MlpCache> cost_caches(D);
      std::vector<MlpCache> head_caches(D);
      std::vector<std::vector<double>> concats(D);
      const std::vector<double> scores =
          detail::policy_scores(net, st.device_tables, st.q, reprs,
                                &cost_caches, &head_caches, &concats);
      const std::vector<double> probs = softmax_masked(scores, st.legal);

      double entropy = 0.0;
      for (int d = 0; d < D; ++d)
        if (probs[d] > 0.0) entropy -= probs[d] * std::log(probs[d]);
      objective +=
          inv_e * (-advantage * std::log(probs[st.action]) - w_entropy * entropy);

      for (int d = 0; d < D; ++d) {
        if (!st.legal[d]) continue;  // masked scores carry no gradient
        const double indicator = d == st.action ? 1.0 : 0.0;
        double dz = inv_e * advantage * (probs[d] - indicator);
        if (probs[d] > 0.0)
          dz += inv_e * w_entropy * probs[d] * (std::log(probs[d]) + entropy);
        if (dz == 0.0) continue;

        head_part.assign(head_part.size(), 0.0);
        std::vector<double> d_concat;
        mlp_backward(net.head, head_caches[d], std::span<const double>(&dz, 1),
                     head_part, &d_concat);
        for (std::size_t i = 0; i < head_part.size(); ++i)
          g_head[i] += head_part[i];

        cost_part.assign(n_cost, 0.0);
        mlp_backward(net.cost_mlp, cost_caches[d],
                     std::span<const double>(d_concat.data() + kReprDim, kReprDim),
                     cost_part, nullptr);
        for (std::size_t i = 0; i < n_cost; ++i) g_cost[i] += cost_part[i];

        for (int id : st.device_tables[d]) {
          touched[id] = true;
          for (int k = 0; k < kReprDim; ++k) d_repr[id][k] += d_concat[k];
        }
      }
    }

    for (std::size_t id = 0; id < reprs.size(); ++id) {
      if (!touched[id]) continue;
      table_part.assign(n_table, 0.0);
      mlp_backward(net.table_mlp, table_caches[id], d_repr[id], table_part,
                   nullptr);
      for (std::size_t i = 0; i < n_table; ++i) g_table[i] += table_part[i];
    }
  }
  return objective;
}

/// One Adam step on a batch of episodes sharing a task. Returns the
/// objective before the step.
inline double reinforce_update(PolicyNet& net, std::span<const Episode> episodes,
                               double w_entropy, AdamState& adam) {
  std::vector<double> grad;
  const double objective = reinforce_loss_and_grad(net, episodes, w_entropy, grad);
  std::vector<double> params = net.param_vector();
  adam.update(params, grad);
  net.set_param_vector(params);
  return objective;
}

}  // namespace shardplan
