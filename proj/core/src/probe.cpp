#include "morphoprobe/probe.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <set>

#include "morphoprobe/manifest.hpp"
#include "morphoprobe/parallel.hpp"

namespace morphoprobe {

std::string_view to_string(PoolingChoice choice) noexcept {
  switch (choice) {
    case PoolingChoice::first: return "first";
    case PoolingChoice::last: return "last";
    case PoolingChoice::automatic: return "auto";
  }
  return "auto";
}

PoolingChoice parse_pooling_choice(std::string_view name) {
  if (name == "first") return PoolingChoice::first;
  if (name == "last") return PoolingChoice::last;
  if (name == "auto") return PoolingChoice::automatic;
  throw ConfigError("unknown pooling '" + std::string(name) + "' (first|last|auto)");
}

std::string_view to_string(CoalitionMode mode) noexcept {
  return mode == CoalitionMode::retrain ? "retrain" : "fixed_probe";
}

CoalitionMode parse_coalition_mode(std::string_view name) {
  if (name == "retrain") return CoalitionMode::retrain;
  if (name == "fixed_probe" || name == "fixed") return CoalitionMode::fixed_probe;
  throw ConfigError("unknown coalition mode '" + std::string(name) + "' (retrain|fixed_probe)");
}

MissingEmbeddingsError::MissingEmbeddingsError(std::vector<std::string> ids, std::size_t total)
    : NotFoundError([&] {
        std::string msg = std::to_string(total) + " embeddings missing:";
        for (const auto& id : ids) msg += " " + id;
        if (ids.size() < total) msg += " ...";
        return msg;
      }()),
      ids_(std::move(ids)) {}

// ---- spec and result serialization ----------------------------------------------

void ExperimentSpec::validate() const {
  if (model_id.empty()) throw ConfigError("experiment needs a model_id");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train_fraction must lie in (0, 1]");
  if (n_seeds < 1) throw ConfigError("n_seeds must be positive");
  if (layers.mode == nn::LayerMode::single && layers.layer < 0) throw ConfigError("negative layer index");
  if (const auto* p = std::get_if<PerturbationSpec>(&masking)) p->validate();
  train.validate();
}

Json ExperimentSpec::to_json() const {
  return Json{{"task", task},
              {"model_id", model_id},
              {"variant", variant.name},
              {"layers", layers.name()},
              {"pooling", std::string(to_string(pooling))},
              {"masking", masking_label()},
              {"train_fraction", train_fraction},
              {"n_seeds", n_seeds},
              {"base_seed", base_seed},
              {"train", train.to_json()}};
}

ExperimentSpec ExperimentSpec::from_json(const Json& j) {
  ExperimentSpec s;
  try {
    s.task = j.at("task").get<std::string>();
    s.model_id = j.at("model_id").get<std::string>();
    s.variant = nn::ProbeVariant::parse(j.value("variant", std::string("mlp50")));
    s.layers = nn::LayerSelection::parse(j.value("layers", std::string("weighted_sum")));
    s.pooling = parse_pooling_choice(j.value("pooling", std::string("auto")));
    s.masking = parse_masking(j.value("masking", std::string("original")));
    s.train_fraction = j.value("train_fraction", 1.0);
    s.n_seeds = j.value("n_seeds", 10);
    s.base_seed = j.value("base_seed", std::uint64_t{0});
    if (j.contains("train")) s.train = nn::TrainConfig::from_json(j.at("train"));
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string ExperimentSpec::hash() const { return to_hex(sha256(to_json().dump())); }

namespace {

double json_double(const Json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? NAN : v.get<double>();
}

}  // namespace

Json SeedResult::to_json() const {
  Json j{{"index", index},
         {"seed", seed},
         {"pooling", std::string(morphoprobe::to_string(pooling))},
         {"dev_accuracy", dev_accuracy},
         {"test_accuracy", test_accuracy},
         {"epochs", epochs},
         {"best_epoch", best_epoch},
         {"layer_weights", layer_weights},
         {"diverged", diverged}};
  if (!error.empty()) j["error"] = error;
  return j;
}

SeedResult SeedResult::from_json(const Json& j) {
  SeedResult r;
  r.index = j.at("index").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.pooling = parse_pooling(j.at("pooling").get<std::string>());
  r.dev_accuracy = json_double(j, "dev_accuracy");
  r.test_accuracy = json_double(j, "test_accuracy");
  r.epochs = j.at("epochs").get<int>();
  r.best_epoch = j.at("best_epoch").get<int>();
  r.layer_weights = j.at("layer_weights").get<std::vector<double>>();
  r.diverged = j.at("diverged").get<bool>();
  r.error = j.value("error", "");
  return r;
}

std::size_t ExperimentResult::valid_seeds() const {
  std::size_t n = 0;
  for (const auto& s : seeds) n += s.diverged ? 0 : 1;
  return n;
}

void ExperimentResult::aggregate() {
  const std::size_t n = valid_seeds();
  mean_test = mean_dev = mean_epochs = std_test = 0.0;
  mean_layer_weights.clear();
  if (n == 0) {
    mean_test = mean_dev = std_test = mean_epochs = NAN;
    return;
  }
  std::size_t weighted = 0;
  for (const auto& s : seeds) {
    if (s.diverged) continue;
    mean_test += s.test_accuracy;
    mean_dev += s.dev_accuracy;
    mean_epochs += s.epochs;
    if (!s.layer_weights.empty()) {
      if (mean_layer_weights.empty()) mean_layer_weights.assign(s.layer_weights.size(), 0.0);
      for (std::size_t l = 0; l < s.layer_weights.size(); ++l) mean_layer_weights[l] += s.layer_weights[l];
      ++weighted;
    }
  }
  const auto dn = static_cast<double>(n);
  mean_test /= dn;
  mean_dev /= dn;
  mean_epochs /= dn;
  for (double& w : mean_layer_weights) w /= static_cast<double>(weighted);
  double ss = 0.0;
  for (const auto& s : seeds) {
    if (!s.diverged) ss += (s.test_accuracy - mean_test) * (s.test_accuracy - mean_test);
  }
  std_test = std::sqrt(ss / dn);
}

Json ExperimentResult::to_json() const {
  Json s = Json::array();
  for (const auto& r : seeds) s.push_back(r.to_json());
  return Json{{"spec", spec.to_json()},         {"spec_hash", spec.hash()},   {"seeds", std::move(s)},
              {"mean_test", mean_test},         {"std_test", std_test},       {"mean_dev", mean_dev},
              {"mean_layer_weights", mean_layer_weights}, {"mean_epochs", mean_epochs},
              {"warnings", warnings}};
}

ExperimentResult ExperimentResult::from_json(const Json& j) {
  ExperimentResult r;
  try {
    r.spec = ExperimentSpec::from_json(j.at("spec"));
    for (const auto& s : j.at("seeds")) r.seeds.push_back(SeedResult::from_json(s));
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const Json::exception& e) {
    throw DataError(std::string("experiment result: ") + e.what());
  }
  r.aggregate();
  return r;
}

// ---- inputs ---------------------------------------------------------------------------

PerturbedTask perturb_task(const TaskDataset& dataset, const Masking& masking, std::uint64_t perturbation_seed) {
  PerturbedTask out;
  for (std::size_t k = 0; k < 3; ++k) {
    const Split split = kTrainDevTest[k];
    const auto& items = dataset.split(split);
    out.splits[k].reserve(items.size());
    out.labels[k].reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      out.splits[k].push_back(perturb(items[i], masking, instance_seed(perturbation_seed, split, i)));
      out.labels[k].push_back(dataset.label_index(items[i].label));
    }
  }
  return out;
}

TaskFeatures extract_features(const PerturbedTask& task, const EmbeddingBackend& backend,
                              const std::string& model_id, int workers, std::array<bool, 3> wanted) {
  const ModelInfo info = backend.info();
  TaskFeatures f;
  f.n_layers = info.n_layers;
  f.dim = info.dim;
  std::mutex mutex;
  std::set<std::string> missing;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!wanted[k]) continue;
    const auto& items = task.splits[k];
    auto& split = f.splits[k];
    split.labels = task.labels[k];
    for (auto& pool : split.by_pooling) {
      pool.assign(static_cast<std::size_t>(f.n_layers),
                  nn::Matrix<float>::Zero(f.dim, static_cast<Eigen::Index>(items.size())));
    }
    parallel_for(items.size(), workers, [&](std::size_t i) {
      const EmbeddingRequest request = make_request(items[i], model_id);
      LayeredEmbedding e;
      try {
        e = backend.embed(request);
      } catch (const NotFoundError&) {
        const std::lock_guard lock(mutex);
        missing.insert(to_hex(request_hash(request)));
        return;
      }
      if (e.n_layers != f.n_layers || e.dim != f.dim) {
        throw IntegrityError("embedding shape differs from the model's declared shape");
      }
      for (int p = 0; p < 2; ++p) {
        const LayerMatrix m = pool_subwords(e, items[i].target_index, static_cast<Pooling>(p));
        for (int l = 0; l < f.n_layers; ++l) {
          split.by_pooling[static_cast<std::size_t>(p)][static_cast<std::size_t>(l)].col(static_cast<Eigen::Index>(i)) =
              m.row(l).transpose();
        }
      }
    });
  }
  if (!missing.empty()) {
    std::vector<std::string> ids;
    for (const auto& id : missing) {
      if (ids.size() == 20) break;
      ids.push_back(id);
    }
    throw MissingEmbeddingsError(std::move(ids), missing.size());
  }
  return f;
}

CharTaskData char_task_data(const PerturbedTask& task, const nn::CharVocab* vocab) {
  CharTaskData d;
  std::array<std::vector<CharSequence>, 3> rendered;
  for (std::size_t k = 0; k < 3; ++k) {
    for (const auto& inst : task.splits[k]) rendered[k].push_back(char_mask(inst));
  }
  if (vocab) {
    d.vocab = *vocab;
  } else {
    std::vector<std::u32string> texts;
    for (const auto& cs : rendered[0]) texts.push_back(cs.chars);
    d.vocab = nn::CharVocab::build(texts);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    auto& split = d.splits[k];
    split.labels = task.labels[k];
    for (std::size_t i = 0; i < rendered[k].size(); ++i) {
      const auto& cs = rendered[k][i];
      const int t = task.splits[k][i].target_index;
      split.ids.push_back(d.vocab.encode(cs.chars));
      split.positions[0].push_back(cs.first_char(t));
      split.positions[1].push_back(cs.last_char(t));
    }
  }
  return d;
}

// ---- training adapters -------------------------------------------------------------------

namespace {

std::size_t split_slot(Split s) { return s == Split::train ? 0 : (s == Split::dev ? 1 : 2); }

class MlpAdapter {
 public:
  MlpAdapter(const TaskFeatures& f, Pooling pooling, const nn::MlpProbeConfig& config, Xoshiro256& init)
      : pooling_(pooling), probe_(config, init) {
    for (std::size_t k = 0; k < 3; ++k) splits_[k] = &f.splits[k];
  }

  void set_split(Split s, const FeatureSplit* split) { splits_[split_slot(s)] = split; }
  std::span<const int> labels(Split s) const { return splits_[split_slot(s)]->labels; }

  nn::Matrix<float> forward(Split s, std::span<const std::size_t> rows, bool train, Xoshiro256* rng) {
    const auto& layers = splits_[split_slot(s)]->by_pooling[static_cast<std::size_t>(pooling_)];
    batch_.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      batch_[l].resize(layers[l].rows(), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        batch_[l].col(static_cast<Eigen::Index>(i)) = layers[l].col(static_cast<Eigen::Index>(rows[i]));
      }
    }
    return probe_.forward(batch_, train, rng);
  }

  void backward(const nn::Matrix<float>& g) { probe_.backward(g); }
  nn::ParameterRefs<float> parameters() { return probe_.parameters(); }

  std::vector<double> layer_weights() const {
    if (probe_.config().selection.mode != nn::LayerMode::weighted_sum) return {};
    const auto w = probe_.layer_weights();
    return std::vector<double>(w.data(), w.data() + w.size());
  }

 private:
  Pooling pooling_;
  nn::MlpProbe<float> probe_;
  std::array<const FeatureSplit*, 3> splits_{};
  std::vector<nn::Matrix<float>> batch_;
};

class CharAdapter {
 public:
  CharAdapter(const CharTaskData& d, Pooling pooling, const nn::CharLstmConfig& config, Xoshiro256& init)
      : pooling_(pooling), model_(config, init) {
    for (std::size_t k = 0; k < 3; ++k) splits_[k] = &d.splits[k];
  }

  void set_split(Split s, const CharSplit* split) { splits_[split_slot(s)] = split; }
  std::span<const int> labels(Split s) const { return splits_[split_slot(s)]->labels; }

  nn::Matrix<float> forward(Split s, std::span<const std::size_t> rows, bool train, Xoshiro256* rng) {
    const CharSplit& split = *splits_[split_slot(s)];
    const auto& pos = split.positions[static_cast<std::size_t>(pooling_)];
    batch_.ids.clear();
    batch_.positions.clear();
    for (const auto r : rows) {
      batch_.ids.push_back(split.ids[r]);
      batch_.positions.push_back(pos[r]);
    }
    return model_.forward(batch_, train, rng);
  }

  void backward(const nn::Matrix<float>& g) { model_.backward(g); }
  nn::ParameterRefs<float> parameters() { return model_.parameters(); }
  std::vector<double> layer_weights() const { return {}; }

 private:
  Pooling pooling_;
  nn::CharLstm<float> model_;
  std::array<const CharSplit*, 3> splits_{};
  nn::CharBatch batch_;
};

std::uint64_t seed_for(const ExperimentSpec& spec, int index) {
  return derive_seed(spec.base_seed, static_cast<std::uint64_t>(index));
}

std::vector<Pooling> candidate_poolings(PoolingChoice choice) {
  switch (choice) {
    case PoolingChoice::first: return {Pooling::first};
    case PoolingChoice::last: return {Pooling::last};
    case PoolingChoice::automatic: return {Pooling::first, Pooling::last};
  }
  return {Pooling::last};
}

// Trains one seed for every candidate pooling and keeps the best on dev accuracy
// (later candidates win ties, so "last" is preferred). `make` builds an adapter
// for a pooling from an initialization generator.
template <typename Adapter, typename Make>
std::pair<SeedResult, std::unique_ptr<Adapter>> train_seed(const ExperimentSpec& spec, int index, Make make) {
  const std::uint64_t seed = seed_for(spec, index);
  SeedResult best;
  best.index = index;
  best.seed = seed;
  std::unique_ptr<Adapter> best_model;
  bool have = false;
  std::string last_error;
  for (const Pooling pooling : candidate_poolings(spec.pooling)) {
    Xoshiro256 init(derive_seed(seed, 2));
    auto model = make(pooling, init);
    nn::TrainConfig tc = spec.train;
    tc.seed = derive_seed(seed, 1);
    try {
      const nn::FitResult fit = nn::fit(*model, tc);
      const nn::Evaluation test = nn::evaluate(*model, Split::test, tc.batch_size);
      if (!have || fit.best_dev_accuracy >= best.dev_accuracy) {
        best.pooling = pooling;
        best.dev_accuracy = fit.best_dev_accuracy;
        best.test_accuracy = test.accuracy;
        best.epochs = fit.epochs_run;
        best.best_epoch = fit.best_epoch;
        best.layer_weights = model->layer_weights();
        best_model = std::move(model);
        have = true;
      }
    } catch (const NonFiniteError& e) {
      last_error = e.what();
    }
  }
  if (!have) {
    best.diverged = true;
    best.error = last_error;
    best.dev_accuracy = best.test_accuracy = NAN;
  }
  return {best, std::move(best_model)};
}

nn::MlpProbeConfig mlp_config(const ExperimentSpec& spec, const TaskFeatures& f, int n_classes) {
  nn::MlpProbeConfig c;
  c.n_layers = f.n_layers;
  c.dim = f.dim;
  c.selection = spec.layers;
  c.variant = spec.variant;
  c.n_classes = n_classes;
  if (c.selection.mode == nn::LayerMode::single && c.selection.layer >= c.n_layers) {
    throw ConfigError("layer " + std::to_string(c.selection.layer) + " out of range for " +
                      std::to_string(c.n_layers) + " layers");
  }
  return c;
}

nn::CharLstmConfig char_config(const CharTaskData& d, int n_classes) {
  nn::CharLstmConfig c;
  c.vocab_size = d.vocab.size();
  c.n_classes = n_classes;
  return c;
}

template <typename Run>
ExperimentResult run_seeds(const ExperimentSpec& spec, const RunOptions& options, Run run) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.spec = spec;
  result.seeds.resize(static_cast<std::size_t>(spec.n_seeds));
  parallel_for(result.seeds.size(), options.workers,
               [&](std::size_t i) { result.seeds[i] = run(static_cast<int>(i)); });
  for (const auto& s : result.seeds) {
    if (s.diverged) {
      result.warnings.push_back("seed " + std::to_string(s.index) + " diverged and is excluded: " + s.error);
    }
  }
  result.aggregate();
  if (result.valid_seeds() == 0) result.warnings.push_back("every seed diverged");
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void check_task(const ExperimentSpec& spec, const TaskDataset& dataset) {
  if (!spec.task.empty() && spec.task != dataset.spec.name()) {
    throw ConfigError("experiment is for task '" + spec.task + "' but the dataset is '" + dataset.spec.name() + "'");
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const TaskFeatures& features, int n_classes,
                                const RunOptions& options) {
  spec.validate();
  const nn::MlpProbeConfig config = mlp_config(spec, features, n_classes);
  return run_seeds(spec, options, [&](int i) {
    return train_seed<MlpAdapter>(spec, i, [&](Pooling p, Xoshiro256& init) {
             return std::make_unique<MlpAdapter>(features, p, config, init);
           }).first;
  });
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const CharTaskData& data, int n_classes,
                                const RunOptions& options) {
  spec.validate();
  const nn::CharLstmConfig config = char_config(data, n_classes);
  return run_seeds(spec, options, [&](int i) {
    return train_seed<CharAdapter>(spec, i, [&](Pooling p, Xoshiro256& init) {
             return std::make_unique<CharAdapter>(data, p, config, init);
           }).first;
  });
}

namespace {

TaskDataset prepare_dataset(const ExperimentSpec& spec, const TaskDataset& dataset, double max_imbalance) {
  check_task(spec, dataset);
  return subsample_train(dataset, spec.train_fraction, derive_seed(spec.base_seed, 0x7261696eULL), max_imbalance);
}

ExperimentResult run_prepared(const ExperimentSpec& spec, const TaskDataset& ds, const EmbeddingBackend* backend,
                              const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const PerturbedTask pt = perturb_task(ds, spec.masking, options.perturbation_seed);
  const int n_classes = static_cast<int>(ds.labels.size());
  ExperimentResult r;
  if (spec.is_char_model()) {
    r = run_experiment(spec, char_task_data(pt), n_classes, options);
  } else {
    if (backend == nullptr) throw ConfigError("model '" + spec.model_id + "' needs an embedding backend");
    r = run_experiment(spec, extract_features(pt, *backend, spec.model_id, options.workers), n_classes, options);
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const TaskDataset& dataset,
                                const EmbeddingBackend* backend, const RunOptions& options) {
  spec.validate();
  return run_prepared(spec, prepare_dataset(spec, dataset, 3.0), backend, options);
}

std::vector<AblationPoint> train_size_ablation(const ExperimentSpec& spec, const TaskDataset& dataset,
                                               const EmbeddingBackend* backend,
                                               const std::vector<double>& fractions, double max_imbalance,
                                               const RunOptions& options) {
  std::vector<AblationPoint> out;
  for (const double fraction : fractions) {
    ExperimentSpec s = spec;
    s.train_fraction = fraction;
    s.validate();
    const TaskDataset ds = prepare_dataset(s, dataset, max_imbalance);
    out.push_back({fraction, ds.train.size(), run_prepared(s, ds, backend, options)});
  }
  return out;
}

std::vector<ExperimentResult> layer_ablation(const ExperimentSpec& spec, const TaskDataset& dataset,
                                             const EmbeddingBackend& backend, const RunOptions& options) {
  if (spec.is_char_model()) throw ConfigError("layer ablation needs a layered embedding model");
  spec.validate();
  const TaskDataset ds = prepare_dataset(spec, dataset, 3.0);
  const PerturbedTask pt = perturb_task(ds, spec.masking, options.perturbation_seed);
  const TaskFeatures f = extract_features(pt, backend, spec.model_id, options.workers);
  const int n_classes = static_cast<int>(ds.labels.size());
  std::vector<ExperimentResult> out;
  for (int l = 0; l <= f.n_layers; ++l) {
    ExperimentSpec s = spec;
    s.layers = l < f.n_layers ? nn::LayerSelection{nn::LayerMode::single, l} : nn::LayerSelection{nn::LayerMode::concat, 0};
    out.push_back(run_experiment(s, f, n_classes, options));
  }
  return out;
}

// ---- coalitions ------------------------------------------------------------------------

namespace {

// Identifies the words a coalition masks across the chosen splits.
std::string masking_signature(const TaskDataset& ds, Coalition c, std::array<bool, 3> splits) {
  std::string key;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!splits[k]) continue;
    for (const auto& inst : ds.split(kTrainDevTest[k])) {
      const auto masked = coalition_mask(inst, c).masked_positions;
      key += std::to_string(masked.size());
      for (const int p : masked) key += "," + std::to_string(p);
      key += ';';
    }
    key += '|';
  }
  return to_hex(sha256(key));
}

std::vector<std::vector<std::uint32_t>> group_coalitions(const TaskDataset& ds, std::array<bool, 3> splits,
                                                         int workers) {
  std::vector<std::string> sig(kCoalitionCount);
  parallel_for(kCoalitionCount, workers, [&](std::size_t m) {
    sig[m] = masking_signature(ds, Coalition{static_cast<std::uint32_t>(m)}, splits);
  });
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<std::uint32_t>> groups;
  for (std::uint32_t m = 0; m <= kFullCoalition; ++m) {
    const auto [it, inserted] = slot.emplace(sig[m], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(m);
  }
  return groups;
}

}  // namespace

CoalitionRun run_coalitions(const ExperimentSpec& spec, const TaskDataset& dataset, const EmbeddingBackend* backend,
                            CoalitionMode mode, const RunOptions& options) {
  ExperimentSpec single = spec;
  single.n_seeds = 1;
  single.masking = Coalition::full();
  single.validate();
  if (!single.is_char_model() && backend == nullptr) {
    throw ConfigError("model '" + spec.model_id + "' needs an embedding backend");
  }
  const TaskDataset ds = prepare_dataset(single, dataset, 3.0);
  const int n_classes = static_cast<int>(ds.labels.size());
  RunOptions inner = options;
  inner.workers = 1;

  CoalitionRun run;
  std::vector<double> accuracy;
  std::vector<std::vector<std::uint32_t>> groups;

  if (mode == CoalitionMode::retrain) {
    groups = group_coalitions(ds, {true, true, true}, options.workers);
    accuracy.assign(groups.size(), NAN);
    parallel_for(groups.size(), options.workers, [&](std::size_t g) {
      ExperimentSpec s = single;
      s.masking = Coalition{groups[g].front()};
      accuracy[g] = run_prepared(s, ds, backend, inner).mean_test;
    });
  } else {
    groups = group_coalitions(ds, {false, false, true}, options.workers);
    accuracy.assign(groups.size(), NAN);
    const PerturbedTask full = perturb_task(ds, Coalition::full(), options.perturbation_seed);
    if (single.is_char_model()) {
      const CharTaskData data = char_task_data(full);
      const nn::CharLstmConfig config = char_config(data, n_classes);
      auto [seed, model] = train_seed<CharAdapter>(single, 0, [&](Pooling p, Xoshiro256& init) {
        return std::make_unique<CharAdapter>(data, p, config, init);
      });
      if (!model) throw NonFiniteError("unmasked probe diverged: " + seed.error);
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const PerturbedTask pt = perturb_task(ds, Coalition{groups[g].front()}, options.perturbation_seed);
        const CharTaskData masked = char_task_data(pt, &data.vocab);
        model->set_split(Split::test, &masked.splits[2]);
        accuracy[g] = nn::evaluate(*model, Split::test, single.train.batch_size).accuracy;
      }
    } else {
      const TaskFeatures features = extract_features(full, *backend, single.model_id, options.workers);
      const nn::MlpProbeConfig config = mlp_config(single, features, n_classes);
      auto [seed, model] = train_seed<MlpAdapter>(single, 0, [&](Pooling p, Xoshiro256& init) {
        return std::make_unique<MlpAdapter>(features, p, config, init);
      });
      if (!model) throw NonFiniteError("unmasked probe diverged: " + seed.error);
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const PerturbedTask pt = perturb_task(ds, Coalition{groups[g].front()}, options.perturbation_seed);
        const TaskFeatures masked =
            extract_features(pt, *backend, single.model_id, options.workers, {false, false, true});
        model->set_split(Split::test, &masked.splits[2]);
        accuracy[g] = nn::evaluate(*model, Split::test, single.train.batch_size).accuracy;
      }
    }
  }

  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (std::isnan(accuracy[g])) {
      throw NonFiniteError("coalition " + Coalition{groups[g].front()}.name() + " diverged");
    }
    for (const auto m : groups[g]) run.table.set(Coalition{m}, accuracy[g]);
  }
  run.distinct_experiments = groups.size();
  run.profile = shapley_from_table(run.table, ds.spec.name(), spec.model_id);
  return run;
}

}  // namespace morphoprobe
