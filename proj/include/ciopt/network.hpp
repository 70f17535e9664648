#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciopt/rng.hpp"

namespace ciopt {

class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NetworkConfig {
  std::size_t input_dim = 44;
  std::vector<std::size_t> hidden = {64, 32, 16};  // output layer is scalar
  double dropout = 0.1;
  double l2 = 1e-4;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Fully-connected scalar-output network: ReLU hidden layers with inverted
// dropout, identity output. Parameters live in one flat vector so the Adam
// state and gradient checks can treat them uniformly.
class QNetwork {
 public:
  QNetwork() = default;

  QNetwork(NetworkConfig cfg, Rng& init_rng) : cfg_(std::move(cfg)) {
    std::size_t in = cfg_.input_dim;
    std::vector<std::size_t> outs = cfg_.hidden;
    outs.push_back(1);
    std::size_t offset = 0;
    for (std::size_t out : outs) {
      LayerShape shape{in, out, offset};
      offset += out * in + out;
      layers_.push_back(shape);
      in = out;
    }
    params_.assign(offset, 0.0);
    // Glorot-uniform weights, zero biases.
    for (const auto& l : layers_) {
      double bound = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
      for (std::size_t i = 0; i < l.out * l.in; ++i)
        params_[l.offset + i] = (2.0 * init_rng.next_double() - 1.0) * bound;
    }
  }

  const NetworkConfig& config() const { return cfg_; }
  std::size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Inference pass: dropout disabled, deterministic.
  double forward(const std::vector<double>& x) const {
    return forward_impl(x, nullptr, nullptr);
  }

  // Dropout-enabled pass (one fresh mask set per call).
  double forward_training(const std::vector<double>& x, Rng& rng) const {
    return forward_impl(x, &rng, nullptr);
  }

  // Mean-squared-error loss over a batch of (state, target) pairs plus the L2
  // weight penalty; accumulates the analytic gradient into `grad` (resized and
  // zeroed here). Dropout masks are drawn from `dropout_rng` when given.
  double batch_loss_and_grad(
      const std::vector<std::pair<const std::vector<double>*, double>>& batch,
      std::vector<double>& grad, Rng* dropout_rng) const {
    if (batch.empty())
      throw std::invalid_argument("batch_loss_and_grad: empty batch");
    grad.assign(params_.size(), 0.0);

    double mse = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    Trace trace;
    for (const auto& [x, target] : batch) {
      double pred = forward_impl(*x, dropout_rng, &trace);
      double residual = pred - target;
      mse += residual * residual * inv_n;
      backprop(*x, trace, 2.0 * residual * inv_n, grad);
    }

    double penalty = 0.0;
    for (const auto& l : layers_) {
      for (std::size_t i = 0; i < l.out * l.in; ++i) {
        double w = params_[l.offset + i];
        penalty += w * w;
        grad[l.offset + i] += 2.0 * cfg_.l2 * w;
      }
    }
    return mse + cfg_.l2 * penalty;
  }

  nlohmann::json to_json() const {
    return {{"input_dim", cfg_.input_dim},
            {"hidden", cfg_.hidden},
            {"dropout", cfg_.dropout},
            {"l2", cfg_.l2},
            {"params", params_}};
  }

  static QNetwork from_json(const nlohmann::json& j) {
    NetworkConfig cfg;
    cfg.input_dim = j.at("input_dim").get<std::size_t>();
    cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.l2 = j.at("l2").get<double>();
    Rng dummy(0);
    QNetwork net(cfg, dummy);
    auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != net.params_.size())
      throw std::invalid_argument("QNetwork::from_json: parameter count mismatch");
    net.params_ = std::move(params);
    return net;
  }

 private:
  struct LayerShape {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t offset = 0;  // into the flat parameter vector

    std::size_t w(std::size_t row, std::size_t col) const {
      return offset + row * in + col;
    }
    std::size_t b(std::size_t row) const { return offset + out * in + row; }
  };

  // Per-example forward state kept for backprop.
  struct Trace {
    std::vector<std::vector<double>> activations;  // post-dropout, per layer
    std::vector<std::vector<double>> masks;        // dropout scale factors
  };

  double forward_impl(const std::vector<double>& x, Rng* dropout_rng,
                      Trace* trace) const {
    if (x.size() != cfg_.input_dim)
      throw std::invalid_argument("QNetwork: input dimension mismatch, got " +
                                  std::to_string(x.size()) + ", expected " +
                                  std::to_string(cfg_.input_dim));
    if (trace) {
      trace->activations.assign(layers_.size(), {});
      trace->masks.assign(layers_.size(), {});
    }
    std::vector<double> a = x;
    std::vector<double> z;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      z.assign(l.out, 0.0);
      for (std::size_t r = 0; r < l.out; ++r) {
        double acc = params_[l.b(r)];
        for (std::size_t c = 0; c < l.in; ++c) acc += params_[l.w(r, c)] * a[c];
        z[r] = acc;
      }
      bool last = li + 1 == layers_.size();
      if (!last) {
        for (auto& v : z) v = v > 0.0 ? v : 0.0;
        if (dropout_rng && cfg_.dropout > 0.0) {
          double keep = 1.0 - cfg_.dropout;
          std::vector<double> mask(l.out);
          for (std::size_t r = 0; r < l.out; ++r) {
            mask[r] = dropout_rng->next_bool(keep) ? 1.0 / keep : 0.0;
            z[r] *= mask[r];
          }
          if (trace) trace->masks[li] = std::move(mask);
        }
      }
      if (trace) trace->activations[li] = z;
      a = std::move(z);
    }
    return a[0];
  }

  // dLdy is dLoss/dOutput for this example; gradient accumulated in place.
  void backprop(const std::vector<double>& x, const Trace& trace, double dLdy,
                std::vector<double>& grad) const {
    std::vector<double> delta = {dLdy};
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& l = layers_[li];
      const std::vector<double>& input =
          li == 0 ? x : trace.activations[li - 1];
      for (std::size_t r = 0; r < l.out; ++r) {
        grad[l.b(r)] += delta[r];
        for (std::size_t c = 0; c < l.in; ++c)
          grad[l.w(r, c)] += delta[r] * input[c];
      }
      if (li == 0) break;
      std::vector<double> prev(l.in, 0.0);
      for (std::size_t c = 0; c < l.in; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < l.out; ++r)
          acc += params_[l.w(r, c)] * delta[r];
        // ReLU (and dropout) derivative: the stored activation is positive iff
        // the unit was active and kept.
        if (trace.activations[li - 1][c] <= 0.0) acc = 0.0;
        else if (!trace.masks[li - 1].empty()) acc *= trace.masks[li - 1][c];
        prev[c] = acc;
      }
      delta = std::move(prev);
    }
  }

  NetworkConfig cfg_;
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
};

// One Adam step over a flat parameter vector.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(AdamConfig cfg, std::size_t param_count)
      : cfg_(cfg), m_(param_count, 0.0), v_(param_count, 0.0) {}

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return step_; }

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw std::invalid_argument("AdamOptimizer: size mismatch");
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      double mhat = m_[i] / bc1;
      double vhat = v_[i] / bc2;
      params[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }

  nlohmann::json to_json() const {
    return {{"learning_rate", cfg_.learning_rate},
            {"beta1", cfg_.beta1},
            {"beta2", cfg_.beta2},
            {"epsilon", cfg_.epsilon},
            {"step", step_},
            {"m", m_},
            {"v", v_}};
  }

  static AdamOptimizer from_json(const nlohmann::json& j) {
    AdamOptimizer opt;
    opt.cfg_.learning_rate = j.at("learning_rate").get<double>();
    opt.cfg_.beta1 = j.at("beta1").get<double>();
    opt.cfg_.beta2 = j.at("beta2").get<double>();
    opt.cfg_.epsilon = j.at("epsilon").get<double>();
    opt.step_ = j.at("step").get<std::uint64_t>();
    opt.m_ = j.at("m").get<std::vector<double>>();
    opt.v_ = j.at("v").get<std::vector<double>>();
    return opt;
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t step_ = 0;
};

}  // namespace ciopt
