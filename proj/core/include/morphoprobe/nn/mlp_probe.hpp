#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "morphoprobe/nn/dense.hpp"
#include "morphoprobe/nn/loss.hpp"

namespace morphoprobe::nn {

enum class LayerMode { weighted_sum, single, concat };

struct LayerSelection {
  LayerMode mode = LayerMode::weighted_sum;
  int layer = 0;  // single only

  std::string name() const;
  static LayerSelection parse(std::string_view text);  // "weighted_sum", "concat", "layer:<k>"
};

// Hidden-layer shapes of the named probe variants.
struct ProbeVariant {
  std::string name;
  std::vector<int> hidden;
  Activation activation = Activation::relu;

  static ProbeVariant mlp50() { return {"mlp50", {50}, Activation::relu}; }
  static ProbeVariant mlp100() { return {"mlp100", {100}, Activation::relu}; }
  static ProbeVariant mlp50x2() { return {"mlp50x2", {50, 50}, Activation::relu}; }
  static ProbeVariant linear_hidden() { return {"linear_hidden", {50}, Activation::identity}; }
  static ProbeVariant linear_flat() { return {"linear_flat", {}, Activation::identity}; }
  static ProbeVariant parse(std::string_view name);
};

struct MlpProbeConfig {
  int n_layers = 1;
  int dim = 0;
  LayerSelection selection;
  ProbeVariant variant = ProbeVariant::mlp50();
  int n_classes = 0;
  double dropout = 0.2;
};

// Probe over layered features. In weighted_sum mode the layers are combined with
// softmax-normalized learned weights before the dense stack.
template <typename T>
class MlpProbe {
 public:
  MlpProbe() = default;
  MlpProbe(const MlpProbeConfig& config, Xoshiro256& rng) : config_(config), mix_("mix.logits", config.n_layers, 1) {
    if (config.n_layers <= 0 || config.dim <= 0) throw ConfigError("probe needs positive layer count and dimension");
    if (config.selection.mode == LayerMode::single &&
        (config.selection.layer < 0 || config.selection.layer >= config.n_layers)) {
      throw ConfigError("layer " + std::to_string(config.selection.layer) + " out of range");
    }
    DenseConfig dc;
    dc.input_dim = config.selection.mode == LayerMode::concat ? config.n_layers * config.dim : config.dim;
    dc.hidden = config.variant.hidden;
    dc.activation = config.variant.activation;
    dc.n_classes = config.n_classes;
    dc.dropout = config.dropout;
    stack_ = DenseStack<T>(dc, rng, "probe");
  }

  const MlpProbeConfig& config() const noexcept { return config_; }

  ParameterRefs<T> parameters() {
    ParameterRefs<T> out;
    if (config_.selection.mode == LayerMode::weighted_sum) out.push_back(&mix_);
    for (auto* p : stack_.parameters()) out.push_back(p);
    return out;
  }

  Vector<T> layer_weights() const {
    if (config_.selection.mode != LayerMode::weighted_sum) {
      Vector<T> w = Vector<T>::Zero(config_.n_layers);
      if (config_.selection.mode == LayerMode::single) w(config_.selection.layer) = T(1);
      return w;
    }
    return softmax<T>(mix_.value.col(0));
  }

  // layers[l]: dim x batch. Returns class log-probabilities (classes x batch).
  Matrix<T> forward(const std::vector<Matrix<T>>& layers, bool train, Xoshiro256* rng) {
    if (static_cast<int>(layers.size()) != config_.n_layers) {
      throw DataError("probe expects " + std::to_string(config_.n_layers) + " layers, got " +
                      std::to_string(layers.size()));
    }
    Matrix<T> x;
    switch (config_.selection.mode) {
      case LayerMode::weighted_sum: {
        weights_ = layer_weights();
        x = weights_(0) * layers[0];
        for (int l = 1; l < config_.n_layers; ++l) x.noalias() += weights_(l) * layers[static_cast<std::size_t>(l)];
        inputs_ = &layers;
        break;
      }
      case LayerMode::single:
        x = layers[static_cast<std::size_t>(config_.selection.layer)];
        break;
      case LayerMode::concat: {
        const Eigen::Index b = layers[0].cols();
        x.resize(static_cast<Eigen::Index>(config_.n_layers) * config_.dim, b);
        for (int l = 0; l < config_.n_layers; ++l) {
          x.middleRows(static_cast<Eigen::Index>(l) * config_.dim, config_.dim) = layers[static_cast<std::size_t>(l)];
        }
        break;
      }
    }
    return log_softmax<T>(stack_.forward(x, train, rng));
  }

  // grad_scores: gradient with respect to the pre-softmax scores. The layer inputs
  // passed to the preceding forward call must still be alive.
  void backward(const Matrix<T>& grad_scores) {
    const Matrix<T> gx = stack_.backward(grad_scores);
    if (config_.selection.mode != LayerMode::weighted_sum) return;
    const auto& layers = *inputs_;
    Vector<T> dw(config_.n_layers);
    for (int l = 0; l < config_.n_layers; ++l) dw(l) = gx.cwiseProduct(layers[static_cast<std::size_t>(l)]).sum();
    const T inner = weights_.dot(dw);
    mix_.grad.col(0).array() += weights_.array() * (dw.array() - inner);
  }

 private:
  MlpProbeConfig config_;
  Parameter<T> mix_;
  DenseStack<T> stack_;
  Vector<T> weights_;
  const std::vector<Matrix<T>>* inputs_ = nullptr;
};

}  // namespace morphoprobe::nn
