#pragma once

#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "morphoprobe/nn/dense.hpp"
#include "morphoprobe/nn/loss.hpp"

namespace morphoprobe::nn {

// Character inventory. Id 0 is the unknown character, id 1 the mask character.
class CharVocab {
 public:
  CharVocab();
  static CharVocab build(std::span<const std::u32string> texts);

  int id(char32_t c) const;
  int size() const noexcept { return static_cast<int>(chars_.size()); }
  const std::u32string& chars() const noexcept { return chars_; }
  std::vector<int> encode(std::u32string_view text) const;

  static CharVocab from_chars(std::u32string chars);

 private:
  std::u32string chars_;
  std::unordered_map<char32_t, int> index_;
};

// A batch of character sequences with one read-out position each.
struct CharBatch {
  std::vector<std::vector<int>> ids;
  std::vector<int> positions;

  std::size_t size() const noexcept { return ids.size(); }
};

inline CharBatch reversed(const CharBatch& batch) {
  CharBatch out;
  out.ids.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    out.ids.emplace_back(batch.ids[b].rbegin(), batch.ids[b].rend());
    out.positions.push_back(static_cast<int>(batch.ids[b].size()) - 1 - batch.positions[b]);
  }
  return out;
}

// One LSTM direction. Gate rows are ordered input, forget, cell, output.
template <typename T>
class LstmDirection {
 public:
  LstmDirection() = default;
  LstmDirection(int input_dim, int hidden, Xoshiro256& rng, const std::string& prefix)
      : hidden_(hidden),
        wx_(prefix + ".wx", 4 * hidden, input_dim),
        wh_(prefix + ".wh", 4 * hidden, hidden),
        b_(prefix + ".b", 4 * hidden, 1) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    uniform_init(wx_.value, bound, rng);
    uniform_init(wh_.value, bound, rng);
    uniform_init(b_.value, bound, rng);
  }

  ParameterRefs<T> parameters() { return {&wx_, &wh_, &b_}; }

  // Runs each sequence up to its read-out position; returns hidden x batch states there.
  Matrix<T> forward(const CharBatch& batch, const Matrix<T>& embedding) {
    const auto bsz = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index h = hidden_;
    batch_ = &batch;
    steps_ = 0;
    for (int p : batch.positions) steps_ = std::max(steps_, p + 1);
    xs_.assign(static_cast<std::size_t>(steps_), Matrix<T>());
    gates_.assign(static_cast<std::size_t>(steps_), Matrix<T>());
    cells_.assign(static_cast<std::size_t>(steps_) + 1, Matrix<T>::Zero(h, bsz));
    hs_.assign(static_cast<std::size_t>(steps_) + 1, Matrix<T>::Zero(h, bsz));
    tanh_c_.assign(static_cast<std::size_t>(steps_), Matrix<T>());
    Matrix<T> out(h, bsz);
    for (int t = 0; t < steps_; ++t) {
      const auto st = static_cast<std::size_t>(t);
      Matrix<T>& x = xs_[st];
      x.resize(embedding.rows(), bsz);
      for (Eigen::Index b = 0; b < bsz; ++b) {
        const auto& seq = batch.ids[static_cast<std::size_t>(b)];
        const int id = t < static_cast<int>(seq.size()) ? seq[st] : 0;
        x.col(b) = embedding.col(id);
      }
      Matrix<T> z = wx_.value * x;
      z.noalias() += wh_.value * hs_[st];
      z.colwise() += b_.value.col(0);
      auto sig = [](auto blk) { return (T(1) / (T(1) + (-blk.array()).exp())).matrix(); };
      Matrix<T>& g = gates_[st];
      g.resize(4 * h, bsz);
      g.topRows(h) = sig(z.topRows(h));
      g.middleRows(h, h) = sig(z.middleRows(h, h));
      g.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh().matrix();
      g.bottomRows(h) = sig(z.bottomRows(h));
      cells_[st + 1] = g.middleRows(h, h).cwiseProduct(cells_[st]) +
                       g.topRows(h).cwiseProduct(g.middleRows(2 * h, h));
      tanh_c_[st] = cells_[st + 1].array().tanh().matrix();
      hs_[st + 1] = g.bottomRows(h).cwiseProduct(tanh_c_[st]);
      for (Eigen::Index b = 0; b < bsz; ++b) {
        if (batch.positions[static_cast<std::size_t>(b)] == t) out.col(b) = hs_[st + 1].col(b);
      }
    }
    return out;
  }

  // grad_out: hidden x batch at the read-out positions. Adds embedding gradients
  // into `embedding_grad`.
  void backward(const Matrix<T>& grad_out, const Matrix<T>& embedding, Matrix<T>& embedding_grad) {
    (void)embedding;
    const CharBatch& batch = *batch_;
    const auto bsz = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index h = hidden_;
    Matrix<T> dh = Matrix<T>::Zero(h, bsz);
    Matrix<T> dc = Matrix<T>::Zero(h, bsz);
    Matrix<T> dz(4 * h, bsz);
    for (int t = steps_ - 1; t >= 0; --t) {
      const auto st = static_cast<std::size_t>(t);
      for (Eigen::Index b = 0; b < bsz; ++b) {
        if (batch.positions[static_cast<std::size_t>(b)] == t) dh.col(b) += grad_out.col(b);
      }
      const Matrix<T>& g = gates_[st];
      const auto i = g.topRows(h).array();
      const auto f = g.middleRows(h, h).array();
      const auto c = g.middleRows(2 * h, h).array();
      const auto o = g.bottomRows(h).array();
      const auto tc = tanh_c_[st].array();
      dc.array() += dh.array() * o * (T(1) - tc * tc);
      dz.topRows(h) = (dc.array() * c * i * (T(1) - i)).matrix();
      dz.middleRows(h, h) = (dc.array() * cells_[st].array() * f * (T(1) - f)).matrix();
      dz.middleRows(2 * h, h) = (dc.array() * i * (T(1) - c * c)).matrix();
      dz.bottomRows(h) = (dh.array() * tc * o * (T(1) - o)).matrix();
      wx_.grad.noalias() += dz * xs_[st].transpose();
      wh_.grad.noalias() += dz * hs_[st].transpose();
      b_.grad.noalias() += dz.rowwise().sum();
      const Matrix<T> dx = wx_.value.transpose() * dz;
      for (Eigen::Index b = 0; b < bsz; ++b) {
        const auto& seq = batch.ids[static_cast<std::size_t>(b)];
        if (t > batch.positions[static_cast<std::size_t>(b)]) continue;
        embedding_grad.col(seq[st]) += dx.col(b);
      }
      dh = wh_.value.transpose() * dz;
      dc = (dc.array() * f).matrix();
    }
  }

 private:
  int hidden_ = 0;
  Parameter<T> wx_, wh_, b_;
  const CharBatch* batch_ = nullptr;
  int steps_ = 0;
  std::vector<Matrix<T>> xs_, gates_, cells_, hs_, tanh_c_;
};

struct CharLstmConfig {
  int vocab_size = 0;
  int embed_dim = 30;
  int hidden = 50;  // per direction
  std::vector<int> head_hidden = {50};
  int n_classes = 0;
  double dropout = 0.2;
};

// Bidirectional character LSTM classifier reading out both directions at one
// character position per sequence.
template <typename T>
class CharLstm {
 public:
  CharLstm() = default;
  CharLstm(const CharLstmConfig& config, Xoshiro256& rng)
      : config_(config), embedding_("char.embedding", config.embed_dim, config.vocab_size) {
    if (config.vocab_size < 2 || config.embed_dim <= 0 || config.hidden <= 0) {
      throw ConfigError("invalid character LSTM sizes");
    }
    normal_init(embedding_.value, 1.0, rng);
    fwd_ = LstmDirection<T>(config.embed_dim, config.hidden, rng, "lstm.fwd");
    bwd_ = LstmDirection<T>(config.embed_dim, config.hidden, rng, "lstm.bwd");
    DenseConfig dc;
    dc.input_dim = 2 * config.hidden;
    dc.hidden = config.head_hidden;
    dc.activation = Activation::relu;
    dc.n_classes = config.n_classes;
    dc.dropout = config.dropout;
    head_ = DenseStack<T>(dc, rng, "head");
  }

  const CharLstmConfig& config() const noexcept { return config_; }

  ParameterRefs<T> parameters() {
    ParameterRefs<T> out{&embedding_};
    for (auto* p : fwd_.parameters()) out.push_back(p);
    for (auto* p : bwd_.parameters()) out.push_back(p);
    for (auto* p : head_.parameters()) out.push_back(p);
    return out;
  }

  // Concatenated [forward; backward] states at the read-out positions, 2*hidden x batch.
  Matrix<T> encode(const CharBatch& batch) {
    reversed_ = reversed(batch);
    const Matrix<T> f = fwd_.forward(batch, embedding_.value);
    const Matrix<T> b = bwd_.forward(reversed_, embedding_.value);
    Matrix<T> out(2 * config_.hidden, static_cast<Eigen::Index>(batch.size()));
    out.topRows(config_.hidden) = f;
    out.bottomRows(config_.hidden) = b;
    return out;
  }

  Matrix<T> forward(const CharBatch& batch, bool train, Xoshiro256* rng) {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const int p = batch.positions[b];
      if (p < 0 || p >= static_cast<int>(batch.ids[b].size())) throw DataError("read-out position out of range");
    }
    return log_softmax<T>(head_.forward(encode(batch), train, rng));
  }

  void backward(const Matrix<T>& grad_scores) {
    const Matrix<T> g = head_.backward(grad_scores);
    fwd_.backward(g.topRows(config_.hidden), embedding_.value, embedding_.grad);
    bwd_.backward(g.bottomRows(config_.hidden), embedding_.value, embedding_.grad);
  }

 private:
  CharLstmConfig config_;
  Parameter<T> embedding_;  // embed_dim x vocab
  LstmDirection<T> fwd_, bwd_;
  DenseStack<T> head_;
  CharBatch reversed_;
};

}  // namespace morphoprobe::nn
