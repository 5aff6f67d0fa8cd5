#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "morphoprobe/backends.hpp"
#include "morphoprobe/nn/char_lstm.hpp"
#include "morphoprobe/nn/mlp_probe.hpp"
#include "morphoprobe/nn/trainer.hpp"
#include "morphoprobe/perturbation.hpp"
#include "morphoprobe/sampler.hpp"
#include "morphoprobe/shapley.hpp"

namespace morphoprobe {

// Model id of the character-level baseline; it needs no embedding backend.
inline constexpr std::string_view kCharLstmModel = "chlstm";

enum class PoolingChoice { first, last, automatic };
std::string_view to_string(PoolingChoice choice) noexcept;
PoolingChoice parse_pooling_choice(std::string_view name);  // first | last | auto

struct ExperimentSpec {
  std::string task;
  std::string model_id;
  nn::ProbeVariant variant = nn::ProbeVariant::mlp50();
  nn::LayerSelection layers;
  PoolingChoice pooling = PoolingChoice::automatic;
  Masking masking = PerturbationSpec{};
  double train_fraction = 1.0;
  int n_seeds = 10;
  std::uint64_t base_seed = 0;
  nn::TrainConfig train;

  bool is_char_model() const { return model_id == kCharLstmModel; }
  std::string masking_label() const { return masking_name(masking); }
  void validate() const;
  Json to_json() const;
  static ExperimentSpec from_json(const Json& j);
  // Hex SHA-256 of the canonical JSON form; identifies the experiment in journals.
  std::string hash() const;
};

struct SeedResult {
  int index = 0;
  std::uint64_t seed = 0;
  Pooling pooling = Pooling::last;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
  int epochs = 0;
  int best_epoch = 0;
  std::vector<double> layer_weights;  // weighted_sum only
  bool diverged = false;
  std::string error;

  Json to_json() const;
  static SeedResult from_json(const Json& j);
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<SeedResult> seeds;
  double mean_test = 0.0;
  double std_test = 0.0;  // population standard deviation over valid seeds
  double mean_dev = 0.0;
  std::vector<double> mean_layer_weights;
  double mean_epochs = 0.0;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;

  std::size_t valid_seeds() const;
  // Recomputes the aggregates from `seeds`, skipping diverged ones.
  void aggregate();
  // Deterministic form; wall time is kept out of it.
  Json to_json() const;
  static ExperimentResult from_json(const Json& j);
};

// Raised when an archive lacks embeddings an experiment needs.
class MissingEmbeddingsError : public NotFoundError {
 public:
  MissingEmbeddingsError(std::vector<std::string> ids, std::size_t total);
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

// ---- inputs -------------------------------------------------------------------

using SplitArray = std::array<Split, 3>;
inline constexpr SplitArray kTrainDevTest = {Split::train, Split::dev, Split::test};

struct PerturbedTask {
  std::array<std::vector<PerturbedInstance>, 3> splits;  // train, dev, test
  std::array<std::vector<int>, 3> labels;
};

PerturbedTask perturb_task(const TaskDataset& dataset, const Masking& masking, std::uint64_t perturbation_seed);

// Pooled target vectors: by_pooling[p][layer] is dim x instances.
struct FeatureSplit {
  std::array<std::vector<nn::Matrix<float>>, 2> by_pooling;
  std::vector<int> labels;
};

struct TaskFeatures {
  int n_layers = 0;
  int dim = 0;
  std::array<FeatureSplit, 3> splits;
};

// Embeds every perturbed instance of the requested splits (all three by default).
TaskFeatures extract_features(const PerturbedTask& task, const EmbeddingBackend& backend,
                              const std::string& model_id, int workers,
                              std::array<bool, 3> wanted = {true, true, true});

struct CharSplit {
  std::vector<std::vector<int>> ids;
  std::array<std::vector<int>, 2> positions;  // first and last character of the target
  std::vector<int> labels;
};

struct CharTaskData {
  nn::CharVocab vocab;
  std::array<CharSplit, 3> splits;
};

// Character rendering; the vocabulary comes from the training split unless given.
CharTaskData char_task_data(const PerturbedTask& task, const nn::CharVocab* vocab = nullptr);

// ---- training -------------------------------------------------------------------

struct RunOptions {
  int workers = 1;
  std::uint64_t perturbation_seed = 0;
};

// Trains and evaluates spec.n_seeds probes. Pooling "auto" trains both first and
// last pooling per seed and keeps the one with higher dev accuracy (last on ties).
// Seeds whose training diverges are kept as diverged entries and excluded from
// the aggregates with a warning.
ExperimentResult run_experiment(const ExperimentSpec& spec, const TaskDataset& dataset,
                                const EmbeddingBackend* backend, const RunOptions& options = {});

// Same, on already extracted inputs.
ExperimentResult run_experiment(const ExperimentSpec& spec, const TaskFeatures& features, int n_classes,
                                const RunOptions& options = {});
ExperimentResult run_experiment(const ExperimentSpec& spec, const CharTaskData& data, int n_classes,
                                const RunOptions& options = {});

struct AblationPoint {
  double fraction = 1.0;
  std::size_t train_size = 0;
  ExperimentResult result;
};

// One experiment per training fraction; the subsample keeps the imbalance cap.
std::vector<AblationPoint> train_size_ablation(const ExperimentSpec& spec, const TaskDataset& dataset,
                                               const EmbeddingBackend* backend,
                                               const std::vector<double>& fractions, double max_imbalance,
                                               const RunOptions& options = {});

// One experiment per single layer plus the concatenation of all layers.
std::vector<ExperimentResult> layer_ablation(const ExperimentSpec& spec, const TaskDataset& dataset,
                                             const EmbeddingBackend& backend, const RunOptions& options = {});

// ---- Shapley experiments ------------------------------------------------------------

enum class CoalitionMode { retrain, fixed_probe };
std::string_view to_string(CoalitionMode mode) noexcept;
CoalitionMode parse_coalition_mode(std::string_view name);

struct CoalitionRun {
  CoalitionTable table;
  std::size_t distinct_experiments = 0;  // after collapsing identical maskings
  ShapleyProfile profile;
};

// Fills all 512 coalition accuracies with a single seed. In retrain mode each
// distinct masked dataset gets its own probe; in fixed_probe mode one probe is
// trained unmasked and evaluated on every masked test split. Coalitions that
// mask exactly the same words share one experiment.
CoalitionRun run_coalitions(const ExperimentSpec& spec, const TaskDataset& dataset,
                            const EmbeddingBackend* backend, CoalitionMode mode, const RunOptions& options = {});

}  // namespace morphoprobe
