#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "traffic/errors.hpp"
#include "traffic/rng.hpp"

namespace traffic {

struct NetSpec {
  int input_dim = 0;
  int hidden_layers = 0;  // each of num_neurons units, rectifier activation
  int num_neurons = 0;
  int output_dim = 5;  // one q-value per action, linear

  void validate() const {
    if (input_dim < 1) throw ConfigError("net: input_dim must be >= 1");
    if (hidden_layers < 0) throw ConfigError("net: hidden_layers must be >= 0");
    if (hidden_layers > 0 && num_neurons < 1)
      throw ConfigError("net: num_neurons must be >= 1");
    if (output_dim < 1) throw ConfigError("net: output_dim must be >= 1");
  }

  int n_weight_layers() const { return hidden_layers + 1; }

  std::vector<int> dims() const {
    std::vector<int> d;
    d.push_back(input_dim);
    for (int i = 0; i < hidden_layers; ++i) d.push_back(num_neurons);
    d.push_back(output_dim);
    return d;
  }

  bool operator==(const NetSpec&) const = default;
};

struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out

  bool operator==(const Layer&) const = default;
};

struct SgdHyper {
  double learning_rate = 0.0;
  double momentum = 0.0;
  double l2_decay = 0.0;  // applied to weights only
};

/// Per-thread forward scratch. Nets are value types; give each thread its
/// own copy or workspace when evaluating in parallel.
struct Workspace {
  std::vector<std::vector<double>> acts;  // acts[0] = input copy
  const std::vector<double>& output() const { return acts.back(); }
};

struct GradBuffers {
  std::vector<Layer> grads;                 // same shapes as the layers
  std::vector<std::vector<double>> deltas;  // per-layer backprop scratch
  void zero() {
    for (auto& g : grads) {
      std::fill(g.w.begin(), g.w.end(), 0.0);
      std::fill(g.b.begin(), g.b.end(), 0.0);
    }
  }
};

struct MaskedBatch {
  std::vector<const double*> states;  // each input_dim long
  std::vector<int> actions;
  std::vector<double> targets;
  size_t size() const { return states.size(); }
};

/// Dense Q-network: rectifier hidden layers, linear outputs, trained with
/// SGD + momentum + L2 on a squared TD error masked to the taken action.
class QNetwork {
 public:
  QNetwork() = default;

  QNetwork(const NetSpec& spec, uint64_t init_seed) : spec_(spec) {
    spec.validate();
    Rng rng(init_seed);
    auto d = spec.dims();
    for (size_t l = 0; l + 1 < d.size(); ++l) {
      Layer layer;
      layer.in = d[l];
      layer.out = d[l + 1];
      layer.w.resize(static_cast<size_t>(layer.in) * layer.out);
      layer.b.assign(static_cast<size_t>(layer.out), 0.0);
      const double limit = std::sqrt(6.0 / (layer.in + layer.out));
      for (double& w : layer.w) w = rng.uniform(-limit, limit);
      layers_.push_back(std::move(layer));
    }
    velocity_ = zero_like(layers_);
  }

  static QNetwork zeros(const NetSpec& spec) {
    QNetwork net(spec, 0);
    for (Layer& l : net.layers_) std::fill(l.w.begin(), l.w.end(), 0.0);
    return net;
  }

  const NetSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers_mut() { return layers_; }

  Workspace make_workspace() const {
    Workspace ws;
    for (int dim : spec_.dims()) ws.acts.emplace_back(static_cast<size_t>(dim), 0.0);
    return ws;
  }

  GradBuffers make_grad_buffers() const {
    GradBuffers g;
    g.grads = zero_like(layers_);
    auto d = spec_.dims();
    for (size_t l = 1; l < d.size(); ++l) g.deltas.emplace_back(static_cast<size_t>(d[l]), 0.0);
    return g;
  }

  void forward(std::span<const double> x, Workspace& ws) const {
    forward_layers(layers_, x, ws);
  }

  std::vector<double> forward(std::span<const double> x) const {
    Workspace ws = make_workspace();
    forward(x, ws);
    return ws.output();
  }

  // argmax over q-values; ties break to the lowest action index
  int greedy_action(std::span<const double> x, Workspace& ws) const {
    forward(x, ws);
    const auto& q = ws.output();
    int best = 0;
    for (int a = 1; a < static_cast<int>(q.size()); ++a)
      if (q[static_cast<size_t>(a)] > q[static_cast<size_t>(best)]) best = a;
    return best;
  }

  double max_q(std::span<const double> x, Workspace& ws, bool use_target) const {
    forward_layers(use_target && target_ ? *target_ : layers_, x, ws);
    const auto& q = ws.output();
    return *std::max_element(q.begin(), q.end());
  }

  // ---- target network ----
  void enable_target() { target_ = layers_; }
  void sync_target() {
    if (target_) *target_ = layers_;
  }
  bool has_target() const { return target_.has_value(); }

  // ---- training ----

  /// Mean squared TD error over the batch on the taken-action outputs, and
  /// its gradient. L2 decay is not part of this loss; it enters the update.
  double masked_loss_and_grads(const MaskedBatch& batch, Workspace& ws, GradBuffers& g) const {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    g.zero();
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (size_t s = 0; s < batch.size(); ++s) {
      forward(std::span<const double>(batch.states[s], static_cast<size_t>(spec_.input_dim)), ws);
      const int a = batch.actions[s];
      const double err = ws.output()[static_cast<size_t>(a)] - batch.targets[s];
      loss += err * err;
      auto& out_delta = g.deltas.back();
      std::fill(out_delta.begin(), out_delta.end(), 0.0);
      out_delta[static_cast<size_t>(a)] = 2.0 * err * inv_n;
      backward(ws, g);
    }
    return loss * inv_n;
  }

  void apply_sgd(const GradBuffers& g, const SgdHyper& h) {
    for (size_t l = 0; l < layers_.size(); ++l) {
      Layer& layer = layers_[l];
      Layer& vel = velocity_[l];
      const Layer& grad = g.grads[l];
      for (size_t i = 0; i < layer.w.size(); ++i) {
        vel.w[i] = h.momentum * vel.w[i] - h.learning_rate * (grad.w[i] + h.l2_decay * layer.w[i]);
        layer.w[i] += vel.w[i];
      }
      for (size_t i = 0; i < layer.b.size(); ++i) {
        vel.b[i] = h.momentum * vel.b[i] - h.learning_rate * grad.b[i];
        layer.b[i] += vel.b[i];
      }
    }
  }

  /// One SGD step on the batch; returns the pre-update loss.
  double train_masked(const MaskedBatch& batch, const SgdHyper& h, Workspace& ws, GradBuffers& g) {
    const double loss = masked_loss_and_grads(batch, ws, g);
    if (!std::isfinite(loss)) throw DivergenceError("non-finite training loss");
    apply_sgd(g, h);
    return loss;
  }

  bool finite() const {
    for (const Layer& l : layers_) {
      for (double v : l.w)
        if (!std::isfinite(v)) return false;
      for (double v : l.b)
        if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_weights(const QNetwork& other) const { return layers_ == other.layers_; }

  bool operator==(const QNetwork&) const = default;

 private:
  static std::vector<Layer> zero_like(const std::vector<Layer>& src) {
    std::vector<Layer> out;
    out.reserve(src.size());
    for (const Layer& l : src) {
      Layer z;
      z.in = l.in;
      z.out = l.out;
      z.w.assign(l.w.size(), 0.0);
      z.b.assign(l.b.size(), 0.0);
      out.push_back(std::move(z));
    }
    return out;
  }

  void forward_layers(const std::vector<Layer>& layers, std::span<const double> x,
                      Workspace& ws) const {
    if (static_cast<int>(x.size()) != spec_.input_dim)
      throw std::invalid_argument("forward: state dimension mismatch");
    std::copy(x.begin(), x.end(), ws.acts[0].begin());
    const size_t last = layers.size() - 1;
    for (size_t l = 0; l < layers.size(); ++l) {
      const Layer& L = layers[l];
      const double* in = ws.acts[l].data();
      double* out = ws.acts[l + 1].data();
      for (int j = 0; j < L.out; ++j) {
        const double* wr = &L.w[static_cast<size_t>(j) * L.in];
        double s = L.b[static_cast<size_t>(j)];
        for (int i = 0; i < L.in; ++i) s += wr[i] * in[i];
        out[j] = (l == last || s > 0.0) ? s : 0.0;
      }
    }
  }

  // accumulate gradients from the output delta already placed in g.deltas.back()
  void backward(const Workspace& ws, GradBuffers& g) const {
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
      const Layer& L = layers_[static_cast<size_t>(l)];
      Layer& grad = g.grads[static_cast<size_t>(l)];
      const std::vector<double>& delta = g.deltas[static_cast<size_t>(l)];
      const std::vector<double>& in = ws.acts[static_cast<size_t>(l)];
      for (int j = 0; j < L.out; ++j) {
        const double dj = delta[static_cast<size_t>(j)];
        if (dj == 0.0) continue;
        grad.b[static_cast<size_t>(j)] += dj;
        double* gw = &grad.w[static_cast<size_t>(j) * L.in];
        for (int i = 0; i < L.in; ++i) gw[i] += dj * in[static_cast<size_t>(i)];
      }
      if (l == 0) break;
      std::vector<double>& prev = g.deltas[static_cast<size_t>(l - 1)];
      const std::vector<double>& act = ws.acts[static_cast<size_t>(l)];
      for (int i = 0; i < L.in; ++i) {
        if (act[static_cast<size_t>(i)] <= 0.0) {  // rectifier gate
          prev[static_cast<size_t>(i)] = 0.0;
          continue;
        }
        double s = 0.0;
        for (int j = 0; j < L.out; ++j)
          s += L.w[static_cast<size_t>(j) * L.in + static_cast<size_t>(i)] *
               delta[static_cast<size_t>(j)];
        prev[static_cast<size_t>(i)] = s;
      }
    }
  }

  NetSpec spec_;
  std::vector<Layer> layers_;
  std::vector<Layer> velocity_;
  std::optional<std::vector<Layer>> target_;
};

}  // namespace traffic
