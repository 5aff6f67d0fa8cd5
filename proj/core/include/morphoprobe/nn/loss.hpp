#pragma once

#include <cmath>
#include <span>

#include "morphoprobe/nn/tensor.hpp"

namespace morphoprobe::nn {

// Column-wise log-softmax of a (classes x batch) score matrix.
template <typename T>
Matrix<T> log_softmax(const Matrix<T>& scores) {
  Matrix<T> out(scores.rows(), scores.cols());
  for (Eigen::Index b = 0; b < scores.cols(); ++b) {
    const T m = scores.col(b).maxCoeff();
    const T lse = m + std::log((scores.col(b).array() - m).exp().sum());
    out.col(b) = scores.col(b).array() - lse;
  }
  return out;
}

template <typename T>
Vector<T> softmax(const Vector<T>& logits) {
  const T m = logits.maxCoeff();
  Vector<T> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

// Negative log-likelihood of one example.
template <typename T>
T cross_entropy(const Vector<T>& log_probs, int label) {
  return -log_probs(label);
}

// Mean negative log-likelihood over a batch of (classes x batch) log-probabilities.
template <typename T>
T cross_entropy(const Matrix<T>& log_probs, std::span<const int> labels) {
  T total = 0;
  for (Eigen::Index b = 0; b < log_probs.cols(); ++b) total -= log_probs(labels[static_cast<std::size_t>(b)], b);
  return total / static_cast<T>(log_probs.cols());
}

// Gradient of the mean cross-entropy with respect to the pre-softmax scores.
template <typename T>
Matrix<T> cross_entropy_grad(const Matrix<T>& log_probs, std::span<const int> labels) {
  Matrix<T> g = log_probs.array().exp().matrix();
  for (Eigen::Index b = 0; b < g.cols(); ++b) g(labels[static_cast<std::size_t>(b)], b) -= T(1);
  return g / static_cast<T>(g.cols());
}

// Index of the largest log-probability per column; ties go to the lowest index.
template <typename T>
std::vector<int> argmax_columns(const Matrix<T>& log_probs) {
  std::vector<int> out(static_cast<std::size_t>(log_probs.cols()));
  for (Eigen::Index b = 0; b < log_probs.cols(); ++b) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < log_probs.rows(); ++c) {
      if (log_probs(c, b) > log_probs(best, b)) best = c;
    }
    out[static_cast<std::size_t>(b)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace morphoprobe::nn
