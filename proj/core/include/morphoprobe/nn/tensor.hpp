#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "morphoprobe/errors.hpp"
#include "morphoprobe/rng.hpp"

namespace morphoprobe::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// A trainable tensor and its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix<T>::Zero(rows, cols)), grad(Matrix<T>::Zero(rows, cols)) {}
};

template <typename T>
using ParameterRefs = std::vector<Parameter<T>*>;

template <typename T>
void zero_grad(const ParameterRefs<T>& params) {
  for (auto* p : params) p->grad.setZero();
}

template <typename T>
std::size_t parameter_count(const ParameterRefs<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void xavier_uniform(Matrix<T>& m, Xoshiro256& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-a, a));
}

template <typename T>
void uniform_init(Matrix<T>& m, double bound, Xoshiro256& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void normal_init(Matrix<T>& m, double stddev, Xoshiro256& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(stddev * rng.normal());
}

// Copies parameter values between models of identical structure (e.g. float -> double).
template <typename To, typename From>
void copy_parameters(const ParameterRefs<To>& dst, const ParameterRefs<From>& src) {
  if (dst.size() != src.size()) throw IntegrityError("parameter lists differ in length");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->value.rows() != src[i]->value.rows() || dst[i]->value.cols() != src[i]->value.cols()) {
      throw IntegrityError("parameter '" + dst[i]->name + "' differs in shape");
    }
    dst[i]->value = src[i]->value.template cast<To>();
  }
}

template <typename T>
std::vector<Matrix<T>> snapshot(const ParameterRefs<T>& params) {
  std::vector<Matrix<T>> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

template <typename T>
void restore(const ParameterRefs<T>& params, const std::vector<Matrix<T>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace morphoprobe::nn
