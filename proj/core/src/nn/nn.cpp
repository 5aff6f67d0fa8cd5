#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>

#include "morphoprobe/nn/char_lstm.hpp"
#include "morphoprobe/nn/checkpoint.hpp"
#include "morphoprobe/nn/mlp_probe.hpp"
#include "morphoprobe/nn/trainer.hpp"
#include "morphoprobe/perturbation.hpp"

namespace morphoprobe::nn {

// ---- layer selection and variants ------------------------------------------

std::string LayerSelection::name() const {
  switch (mode) {
    case LayerMode::weighted_sum: return "weighted_sum";
    case LayerMode::concat: return "concat";
    case LayerMode::single: return "layer:" + std::to_string(layer);
  }
  return "weighted_sum";
}

LayerSelection LayerSelection::parse(std::string_view text) {
  if (text == "weighted_sum") return {LayerMode::weighted_sum, 0};
  if (text == "concat") return {LayerMode::concat, 0};
  if (text.starts_with("layer:")) {
    const auto digits = text.substr(6);
    int k = -1;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && k >= 0) return {LayerMode::single, k};
  }
  throw ConfigError("unknown layer selection '" + std::string(text) + "'");
}

ProbeVariant ProbeVariant::parse(std::string_view name) {
  for (const auto& v : {mlp50(), mlp100(), mlp50x2(), linear_hidden(), linear_flat()}) {
    if (v.name == name) return v;
  }
  throw ConfigError("unknown probe variant '" + std::string(name) + "'");
}

// ---- character vocabulary ---------------------------------------------------

CharVocab::CharVocab() : chars_({U'\0', kCharMask}) {
  index_[kCharMask] = 1;
}

CharVocab CharVocab::from_chars(std::u32string chars) {
  if (chars.size() < 2 || chars[1] != kCharMask) throw IntegrityError("character table lacks the mask slot");
  CharVocab v;
  v.chars_ = std::move(chars);
  v.index_.clear();
  for (std::size_t i = 1; i < v.chars_.size(); ++i) {
    if (!v.index_.emplace(v.chars_[i], static_cast<int>(i)).second) {
      throw IntegrityError("duplicate character in table");
    }
  }
  return v;
}

CharVocab CharVocab::build(std::span<const std::u32string> texts) {
  std::u32string seen;
  for (const auto& t : texts) seen.append(t);
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  CharVocab v;
  for (const char32_t c : seen) {
    if (c == kCharMask) continue;
    v.index_.emplace(c, static_cast<int>(v.chars_.size()));
    v.chars_.push_back(c);
  }
  return v;
}

int CharVocab::id(char32_t c) const {
  const auto it = index_.find(c);
  return it == index_.end() ? 0 : it->second;
}

std::vector<int> CharVocab::encode(std::u32string_view text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (const char32_t c : text) out.push_back(id(c));
  return out;
}

// ---- training configuration -------------------------------------------------

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
  if (patience <= 0) throw ConfigError("patience must be positive");
}

Json TrainConfig::to_json() const {
  return Json{{"lr", adam.lr},          {"beta1", adam.beta1},   {"beta2", adam.beta2},
              {"epsilon", adam.epsilon}, {"batch_size", batch_size}, {"max_epochs", max_epochs},
              {"patience", patience},   {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
  TrainConfig c;
  try {
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.epsilon = j.value("epsilon", c.adam.epsilon);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

Json FitResult::to_json() const {
  Json h = Json::array();
  for (const auto& e : history) {
    h.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss},
                 {"dev_accuracy", e.dev_accuracy}});
  }
  return Json{{"epochs_run", epochs_run},
              {"best_epoch", best_epoch},
              {"best_dev_accuracy", best_dev_accuracy},
              {"best_dev_loss", best_dev_loss},
              {"stopped_early", stopped_early},
              {"history", std::move(h)}};
}

// ---- checkpoints ------------------------------------------------------------

namespace {

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  std::filesystem::path p = stem;
  p += ext;
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const ParameterRefs<float>& params,
                     const Json& metadata) {
  Json index = Json::array();
  std::string blob;
  std::size_t offset = 0;
  for (const auto* p : params) {
    index.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}, {"offset", offset}});
    blob.append(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::size_t>(p->value.size()) * sizeof(float));
    offset += static_cast<std::size_t>(p->value.size());
  }
  write_text_file(with_ext(stem, ".bin"), blob);
  write_text_file(with_ext(stem, ".json"), dump_json(Json{{"metadata", metadata}, {"tensors", index}}));
}

Json read_checkpoint_metadata(const std::filesystem::path& stem) {
  return read_json_file(with_ext(stem, ".json")).at("metadata");
}

Json load_checkpoint(const std::filesystem::path& stem, const ParameterRefs<float>& params) {
  const Json doc = read_json_file(with_ext(stem, ".json"));
  const std::string blob = read_text_file(with_ext(stem, ".bin"));
  const std::size_t n_floats = blob.size() / sizeof(float);
  if (blob.size() % sizeof(float) != 0) throw IntegrityError("checkpoint blob has a partial value");
  std::unordered_map<std::string, const Json*> by_name;
  for (const auto& t : doc.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
  for (auto* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw IntegrityError("checkpoint lacks tensor '" + p->name + "'");
    const Json& t = *it->second;
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const auto off = t.at("offset").get<std::size_t>();
    if (rows != p->value.rows() || cols != p->value.cols()) {
      throw IntegrityError("tensor '" + p->name + "' has shape " + std::to_string(rows) + "x" +
                           std::to_string(cols) + ", model expects " + std::to_string(p->value.rows()) + "x" +
                           std::to_string(p->value.cols()));
    }
    if (off + static_cast<std::size_t>(rows * cols) > n_floats) {
      throw IntegrityError("tensor '" + p->name + "' runs past the end of the blob");
    }
    std::memcpy(p->value.data(), blob.data() + off * sizeof(float),
                static_cast<std::size_t>(rows * cols) * sizeof(float));
  }
  return doc.at("metadata");
}

}  // namespace morphoprobe::nn
