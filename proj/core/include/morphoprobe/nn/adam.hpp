#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "morphoprobe/nn/tensor.hpp"

namespace morphoprobe::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const noexcept { return config_; }
  long steps() const noexcept { return t_; }

  // Applies one update from the accumulated gradients. Throws NonFiniteError
  // before touching any parameter when a gradient is NaN or infinite.
  void step(const ParameterRefs<T>& params) {
    for (const auto* p : params) {
      if (!p->grad.allFinite()) throw NonFiniteError("non-finite gradient in '" + p->name + "' at step " +
                                                     std::to_string(t_ + 1));
    }
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    if (m_.size() != params.size()) throw IntegrityError("optimizer bound to a different parameter list");
    ++t_;
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(config_.beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(config_.lr);
    const T eps = static_cast<T>(config_.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
      if (!p.value.allFinite()) throw NonFiniteError("non-finite value in '" + p.name + "' after step " +
                                                     std::to_string(t_));
    }
  }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

}  // namespace morphoprobe::nn
