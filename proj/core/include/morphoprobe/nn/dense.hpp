#pragma once

#include <string>
#include <vector>

#include "morphoprobe/nn/tensor.hpp"

namespace morphoprobe::nn {

enum class Activation { relu, identity };

struct DenseConfig {
  int input_dim = 0;
  std::vector<int> hidden;  // empty: a single input -> output map
  Activation activation = Activation::relu;
  int n_classes = 0;
  double dropout = 0.2;
};

// Inverted-dropout mask (entries 0 or 1/(1-p)), shape rows x cols.
template <typename T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Xoshiro256& rng) {
  Matrix<T> m(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < p ? T(0) : keep;
  return m;
}

// Feed-forward stack over column batches: dropout on the input and after every
// hidden activation, output scores without softmax.
template <typename T>
class DenseStack {
 public:
  DenseStack() = default;
  DenseStack(const DenseConfig& config, Xoshiro256& rng, const std::string& prefix = "dense")
      : config_(config) {
    if (config.input_dim <= 0 || config.n_classes <= 0) throw ConfigError("dense stack needs positive sizes");
    if (config.dropout < 0.0 || config.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    int in = config.input_dim;
    std::vector<int> outs = config.hidden;
    outs.push_back(config.n_classes);
    for (std::size_t l = 0; l < outs.size(); ++l) {
      if (outs[l] <= 0) throw ConfigError("hidden sizes must be positive");
      Parameter<T> w(prefix + ".w" + std::to_string(l), outs[l], in);
      Parameter<T> b(prefix + ".b" + std::to_string(l), outs[l], 1);
      xavier_uniform(w.value, rng);
      weights_.push_back(std::move(w));
      biases_.push_back(std::move(b));
      in = outs[l];
    }
  }

  const DenseConfig& config() const noexcept { return config_; }

  ParameterRefs<T> parameters() {
    ParameterRefs<T> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    return out;
  }

  // x: input_dim x batch. `rng` is required when `train` and dropout > 0.
  Matrix<T> forward(const Matrix<T>& x, bool train, Xoshiro256* rng) {
    const bool drop = train && config_.dropout > 0.0;
    if (drop && rng == nullptr) throw ConfigError("dropout needs a generator");
    inputs_.clear();
    masks_.clear();
    pre_.clear();
    Matrix<T> h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (drop) {
        masks_.push_back(dropout_mask<T>(h.rows(), h.cols(), config_.dropout, *rng));
        h = h.cwiseProduct(masks_.back());
      }
      inputs_.push_back(h);
      Matrix<T> z = weights_[l].value * h;
      z.colwise() += biases_[l].value.col(0);
      const bool last = l + 1 == weights_.size();
      if (!last && config_.activation == Activation::relu) {
        pre_.push_back(z);
        h = z.cwiseMax(T(0));
      } else {
        pre_.push_back(Matrix<T>());
        h = std::move(z);
      }
    }
    return h;
  }

  // Accumulates parameter gradients; returns the gradient with respect to the input.
  Matrix<T> backward(const Matrix<T>& grad_out) {
    Matrix<T> g = grad_out;
    for (std::size_t l = weights_.size(); l-- > 0;) {
      if (pre_[l].size() > 0) g = g.cwiseProduct((pre_[l].array() > T(0)).template cast<T>().matrix());
      weights_[l].grad.noalias() += g * inputs_[l].transpose();
      biases_[l].grad.noalias() += g.rowwise().sum();
      g = weights_[l].value.transpose() * g;
      if (!masks_.empty()) g = g.cwiseProduct(masks_[l]);
    }
    return g;
  }

 private:
  DenseConfig config_;
  std::vector<Parameter<T>> weights_;
  std::vector<Parameter<T>> biases_;
  std::vector<Matrix<T>> inputs_;  // post-dropout input of each affine map
  std::vector<Matrix<T>> masks_;
  std::vector<Matrix<T>> pre_;  // pre-activation, empty when the map is linear
};

}  // namespace morphoprobe::nn
