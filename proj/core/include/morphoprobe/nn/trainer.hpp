#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "morphoprobe/conllu.hpp"
#include "morphoprobe/json_io.hpp"
#include "morphoprobe/nn/adam.hpp"
#include "morphoprobe/nn/loss.hpp"

namespace morphoprobe::nn {

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 128;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 0;

  void validate() const;
  Json to_json() const;
  static TrainConfig from_json(const Json& j);
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct FitResult {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_dev_accuracy = 0.0;
  double best_dev_loss = 0.0;
  bool stopped_early = false;
  std::vector<EpochRecord> history;

  Json to_json() const;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};

// A training adapter supplies:
//   std::span<const int> labels(Split)
//   Matrix<float> forward(Split, std::span<const std::size_t> rows, bool train, Xoshiro256* rng)
//   void backward(const Matrix<float>& grad_scores)
//   ParameterRefs<float> parameters()
// forward returns log-probabilities; backward follows the last forward call.

template <typename Adapter>
Evaluation evaluate(Adapter& model, Split split, int batch_size) {
  const auto labels = model.labels(split);
  Evaluation ev;
  ev.predictions.reserve(labels.size());
  if (labels.empty()) return ev;
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < labels.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(labels.size(), start + static_cast<std::size_t>(batch_size));
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const Matrix<float> lp = model.forward(split, rows, false, nullptr);
    const auto pred = argmax_columns(lp);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int y = labels[start + i];
      loss -= static_cast<double>(lp(y, static_cast<Eigen::Index>(i)));
      correct += pred[i] == y ? 1 : 0;
      ev.predictions.push_back(pred[i]);
    }
  }
  ev.loss = loss / static_cast<double>(labels.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  return ev;
}

// Mini-batch Adam with early stopping: training ends once neither dev loss nor
// dev accuracy has improved for `patience` epochs, and the parameters of the
// epoch with the best dev accuracy (lower dev loss on ties) are restored.
template <typename Adapter>
FitResult fit(Adapter& model, const TrainConfig& config) {
  config.validate();
  const auto train_labels = model.labels(Split::train);
  if (train_labels.empty()) throw DataError("empty training split");
  if (model.labels(Split::dev).empty()) throw DataError("empty dev split");
  ParameterRefs<float> params = model.parameters();
  Adam<float> adam(config.adam);
  Xoshiro256 order_rng(derive_seed(config.seed, 1));
  Xoshiro256 dropout_rng(derive_seed(config.seed, 2));

  std::vector<std::size_t> order(train_labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> batch_labels;

  FitResult result;
  double best_loss_seen = INFINITY;
  double best_acc_seen = -INFINITY;
  int stale = 0;
  std::vector<Matrix<float>> best = snapshot(params);
  result.best_dev_accuracy = -INFINITY;
  result.best_dev_loss = INFINITY;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      batch_labels.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) batch_labels[i] = train_labels[rows[i]];
      zero_grad(params);
      const Matrix<float> lp = model.forward(Split::train, rows, true, &dropout_rng);
      const float loss = cross_entropy<float>(lp, batch_labels);
      if (!std::isfinite(loss)) {
        throw NonFiniteError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      train_loss += static_cast<double>(loss) * static_cast<double>(rows.size());
      model.backward(cross_entropy_grad<float>(lp, batch_labels));
      adam.step(params);
    }
    const Evaluation dev = evaluate(model, Split::dev, config.batch_size);
    if (!std::isfinite(dev.loss)) throw NonFiniteError("non-finite dev loss at epoch " + std::to_string(epoch));
    result.history.push_back({epoch, train_loss / static_cast<double>(order.size()), dev.loss, dev.accuracy});
    result.epochs_run = epoch;

    if (dev.accuracy > result.best_dev_accuracy ||
        (dev.accuracy == result.best_dev_accuracy && dev.loss < result.best_dev_loss)) {
      result.best_dev_accuracy = dev.accuracy;
      result.best_dev_loss = dev.loss;
      result.best_epoch = epoch;
      best = snapshot(params);
    }
    bool improved = false;
    if (dev.loss < best_loss_seen) {
      best_loss_seen = dev.loss;
      improved = true;
    }
    if (dev.accuracy > best_acc_seen) {
      best_acc_seen = dev.accuracy;
      improved = true;
    }
    stale = improved ? 0 : stale + 1;
    if (stale >= config.patience) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  restore(params, best);
  return result;
}

}  // namespace morphoprobe::nn
