#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "morphoprobe/conllu.hpp"

namespace morphoprobe {

inline const std::vector<std::string> kDefaultPos = {"ADJ", "NOUN", "PROPN", "VERB"};
inline const std::vector<std::string> kDefaultFeatures = {"Case", "Gender", "Number", "Tense"};

struct TaskSpec {
  std::string language;
  std::string upos;
  std::string feature;

  // "<language>_<upos>_<feature>", used as the task directory name.
  std::string name() const;
  // Inverse of name(); the language may itself contain underscores.
  static TaskSpec parse(std::string_view name);
  bool operator==(const TaskSpec&) const = default;
  auto operator<=>(const TaskSpec&) const = default;
};

struct ProbingInstance {
  std::vector<std::string> words;
  int target_index = 0;
  std::string label;

  const std::string& target() const { return words.at(static_cast<std::size_t>(target_index)); }
  bool operator==(const ProbingInstance&) const = default;
};

struct SamplerConfig {
  std::size_t n_train = 2000;
  std::size_t n_dev = 200;
  std::size_t n_test = 200;
  double max_imbalance = 3.0;
  std::size_t min_class_count = 200;
  std::size_t min_sentences = 500;
  std::size_t min_len = 3;
  std::size_t max_len = 40;
  std::uint64_t seed = 0;

  std::size_t count(Split s) const noexcept;
  // Multiplies every count threshold (split sizes, min_class_count, min_sentences).
  SamplerConfig scaled(double factor) const;
  void validate() const;
};

struct TaskDataset {
  TaskSpec spec;
  std::vector<ProbingInstance> train;
  std::vector<ProbingInstance> dev;
  std::vector<ProbingInstance> test;
  std::vector<std::string> labels;  // sorted

  std::vector<ProbingInstance>& split(Split s) noexcept;
  const std::vector<ProbingInstance>& split(Split s) const noexcept;
  int label_index(std::string_view label) const;
  bool operator==(const TaskDataset&) const = default;
};

struct TaskCandidate {
  TaskSpec spec;
  std::map<std::string, std::size_t> class_counts;
};

std::vector<TaskCandidate> enumerate_candidates(const Corpus& corpus,
                                                const std::vector<std::string>& pos_set = kDefaultPos,
                                                const std::vector<std::string>& feature_set =
                                                    kDefaultFeatures);

enum class RejectionReason { insufficient_sentences, too_few_classes, counts_unattainable };
std::string_view to_string(RejectionReason reason) noexcept;

struct Rejection {
  RejectionReason reason;
  std::string detail;
};

using SampleOutcome = std::variant<TaskDataset, Rejection>;

SampleOutcome sample_task(const Corpus& corpus, const TaskSpec& spec, const SamplerConfig& config);

// Empty iff every dataset invariant holds under `config`.
std::vector<std::string> validate_dataset(const TaskDataset& dataset, const SamplerConfig& config);

// Proportional allocation of `n` slots over `available` (largest remainder), then
// slots move from the largest class to the smallest class with spare capacity until
// largest <= max_imbalance * smallest. Empty when no such allocation exists.
std::vector<std::size_t> allocate_quotas(const std::vector<std::size_t>& available, std::size_t n,
                                         double max_imbalance);

// Stratified subsample of the training split to round(fraction * size) instances
// under the same imbalance cap. Throws DataError when a class would vanish.
TaskDataset subsample_train(const TaskDataset& dataset, double fraction, std::uint64_t seed,
                            double max_imbalance);

// Per-label counts of one split, in `labels` order.
std::vector<std::size_t> class_counts(const std::vector<ProbingInstance>& split,
                                      const std::vector<std::string>& labels);

// Task directory layout: manifest.json plus {train,dev,test}/data.jsonl.
void write_task_dir(const std::filesystem::path& dir, const TaskDataset& dataset,
                    const SamplerConfig& config);
TaskDataset read_task_dir(const std::filesystem::path& dir);

}  // namespace morphoprobe
