// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense-network substrate: fully connected layers with ReLU,
// analytic backpropagation, Adam with linear learning-rate decay, masked
// softmax, and finite-difference gradient checking. All math in doubles.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "shardplan/error.hpp"
#include "shardplan/rng.hpp"

namespace shardplan {

/// Fully connected network. Hidden layers use ReLU; the output layer is
/// linear unless output_relu is set. Parameters live in one flat vector
/// laid out as [W0 row-major, b0, W1, b1, ...].
struct Mlp {
  std::vector<int> sizes;
  bool output_relu = false;
  std::vector<double> params;

  int num_layers() const { return static_cast<int>(sizes.size()) - 1; }
  int in_dim() const { return sizes.front(); }
  int out_dim() const { return sizes.back(); }

  std::size_t layer_offset(int layer) const {
    std::size_t off = 0;
    for (int l = 0; l < layer; ++l)
      off += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
    return off;
  }
  const double* weights(int layer) const { return params.data() + layer_offset(layer); }
  double* weights(int layer) { return params.data() + layer_offset(layer); }
  const double* biases(int layer) const {
    return weights(layer) + static_cast<std::size_t>(sizes[layer]) * sizes[layer + 1];
  }
  double* biases(int layer) {
    return weights(layer) + static_cast<std::size_t>(sizes[layer]) * sizes[layer + 1];
  }

  static std::size_t param_count(std::span<const int> sizes) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      n += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
    return n;
  }

  /// Weights uniform in +-1/sqrt(fan_in), biases zero. Deterministic for a
  /// fixed seed.
  static Mlp make(std::vector<int> sizes, std::uint64_t seed,
                  bool output_relu = false) {
    if (sizes.size() < 2) raise(ErrorKind::shape_mismatch, "need >= 2 layer sizes");
    Mlp m;
    m.sizes = std::move(sizes);
    m.output_relu = output_relu;
    m.params.assign(param_count(m.sizes), 0.0);
    Rng rng(mix64(seed));
    for (int l = 0; l < m.num_layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(m.sizes[l]));
      double* w = m.weights(l);
      const std::size_t n = static_cast<std::size_t>(m.sizes[l]) * m.sizes[l + 1];
      for (std::size_t i = 0; i < n; ++i) w[i] = rng.uniform(-bound, bound);
      // biases stay zero
    }
    return m;
  }
};

/// Post-activation values per layer; acts[0] is the input. Enough to
/// recover the ReLU mask (active iff the stored value is > 0).
struct MlpCache {
  std::vector<std::vector<double>> acts;
};

inline std::vector<double> mlp_forward(const Mlp& m, std::span<const double> x,
                                       MlpCache* cache = nullptr) {
  if (x.size() != static_cast<std::size_t>(m.in_dim()))
    raise(ErrorKind::shape_mismatch, "input size " + std::to_string(x.size()) +
                                         " != " + std::to_string(m.in_dim()));
  std::vector<double> cur(x.begin(), x.end());
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(cur);
  }
  for (int l = 0; l < m.num_layers(); ++l) {
    const int in = m.sizes[l];
    const int out = m.sizes[l + 1];
    const double* w = m.weights(l);
    const double* b = m.biases(l);
    std::vector<double> next(out);
    for (int o = 0; o < out; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * in;
      double acc = b[o];
      for (int i = 0; i < in; ++i) acc += row[i] * cur[i];
      next[o] = acc;
    }
    const bool relu = l + 1 < m.num_layers() || m.output_relu;
    if (relu)
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    cur = std::move(next);
    if (cache) cache->acts.push_back(cur);
  }
  return cur;
}

/// Accumulates parameter gradients into grad (same layout as params) and
/// optionally returns dL/dx. The ReLU subgradient at 0 is 0.
inline void mlp_backward(const Mlp& m, const MlpCache& cache,
                         std::span<const double> dy, std::vector<double>& grad,
                         std::vector<double>* dx = nullptr) {
  if (grad.size() != m.params.size())
    raise(ErrorKind::shape_mismatch, "grad buffer size mismatch");
  if (dy.size() != static_cast<std::size_t>(m.out_dim()))
    raise(ErrorKind::shape_mismatch, "dy size mismatch");
  if (cache.acts.size() != static_cast<std::size_t>(m.num_layers()) + 1)
    raise(ErrorKind::shape_mismatch, "cache does not match network depth");

  std::vector<double> delta(dy.begin(), dy.end());
  for (int l = m.num_layers() - 1; l >= 0; --l) {
    const int in = m.sizes[l];
    const int out = m.sizes[l + 1];
    const bool relu = l + 1 < m.num_layers() || m.output_relu;
    const std::vector<double>& post = cache.acts[l + 1];
    if (relu)
      for (int o = 0; o < out; ++o)
        if (post[o] <= 0.0) delta[o] = 0.0;

    const std::vector<double>& input = cache.acts[l];
    const std::size_t off = m.layer_offset(l);
    double* gw = grad.data() + off;
    double* gb = gw + static_cast<std::size_t>(in) * out;
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      double* grow = gw + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) grow[i] += d * input[i];
      gb[o] += d;
    }
    if (l > 0 || dx != nullptr) {
      std::vector<double> prev(in, 0.0);
      const double* w = m.weights(l);
      for (int o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = w + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) prev[i] += d * row[i];
      }
      if (l == 0 && dx != nullptr) *dx = prev;
      delta = std::move(prev);
    }
  }
}

// ---------------------------------------------------------------------------
// Adam with linear learning-rate decay to zero over total_steps.
// total_steps == 0 disables the decay.

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;  // completed updates
  double base_lr = 5e-4;
  std::int64_t total_steps = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double lr, std::int64_t total)
      : m(n, 0.0), v(n, 0.0), base_lr(lr), total_steps(total) {}

  double lr() const {
    if (total_steps <= 0) return base_lr;
    const double frac =
        1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
    return base_lr * std::max(0.0, frac);
  }

  void update(std::vector<double>& params, std::span<const double> grads) {
    if (params.size() != m.size() || grads.size() != m.size())
      raise(ErrorKind::shape_mismatch, "adam buffers do not match parameters");
    const double lr_t = lr();
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      params[i] -= lr_t * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

// ---------------------------------------------------------------------------

/// Softmax over the unmasked entries; masked entries get probability
/// exactly 0. Throws if nothing is unmasked.
inline std::vector<double> softmax_masked(std::span<const double> logits,
                                          std::span<const bool> mask) {
  if (logits.size() != mask.size())
    raise(ErrorKind::shape_mismatch, "mask size mismatch");
  double zmax = -1e300;
  bool any = false;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) {
      any = true;
      zmax = std::max(zmax, logits[i]);
    }
  }
  if (!any) raise(ErrorKind::no_legal_action, "softmax over an empty legal set");
  std::vector<double> p(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    p[i] = std::exp(logits[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckReport {
  int probes = 0;
  double max_rel_err = 0.0;
  bool passed = true;
};

inline double rel_err(double a, double b) {
  const double denom = std::max(std::abs(a) + std::abs(b), 1e-10);
  if (std::abs(a) < 1e-10 && std::abs(b) < 1e-10) return 0.0;
  return std::abs(a - b) / denom;
}

/// Central-difference check of an arbitrary parameterized loss.
/// loss(params) must be a pure function of the parameter vector;
/// grad is the analytic gradient at `params`.
inline GradCheckReport check_gradient(
    std::vector<double> params, const std::vector<double>& grad,
    const std::function<double(const std::vector<double>&)>& loss, double tol,
    int probes, Rng& rng, double h = 1e-5) {
  GradCheckReport report;
  report.probes = probes;
  for (int p = 0; p < probes; ++p) {
    const std::size_t i = rng.index(params.size());
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss(params);
    params[i] = saved - h;
    const double down = loss(params);
    params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double err = rel_err(grad[i], fd);
    report.max_rel_err = std::max(report.max_rel_err, err);
    if (err >= tol) report.passed = false;
  }
  return report;
}

/// Convenience wrapper for a single network: loss_and_grad(mlp) must
/// return the loss and the analytic parameter gradient.
inline GradCheckReport grad_check(
    Mlp& mlp,
    const std::function<std::pair<double, std::vector<double>>(const Mlp&)>&
        loss_and_grad,
    double tol, int probes, Rng& rng, double h = 1e-5) {
  const auto [loss0, grad] = loss_and_grad(mlp);
  (void)loss0;
  auto loss_at = [&](const std::vector<double>& p) {
    Mlp probe = mlp;
    probe.params = p;
    return loss_and_grad(probe).first;
  };
  return check_gradient(mlp.params, grad, loss_at, tol, probes, rng, h);
}

}  // namespace shardplan
