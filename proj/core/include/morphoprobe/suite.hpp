#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "morphoprobe/analysis.hpp"
#include "morphoprobe/probe.hpp"

namespace morphoprobe {

// ---- model registry ----------------------------------------------------------------

enum class BackendKind { chlstm, archive, http, static_vectors, random_control };
std::string_view to_string(BackendKind kind) noexcept;
BackendKind parse_backend_kind(std::string_view name);

struct ModelDescriptor {
  std::string model_id;
  BackendKind kind = BackendKind::archive;
  std::filesystem::path path;  // archive or .vec file
  std::string host = "127.0.0.1";
  int port = 8080;
  RandomControlConfig random;   // random_control only
  std::optional<int> n_layers;  // declared shape, checked against the backend
  std::optional<int> dim;

  Json to_json() const;
  static ModelDescriptor from_json(const Json& j, const std::filesystem::path& base_dir = {});
};

// Null for the character model. Declared shapes are verified.
std::shared_ptr<const EmbeddingBackend> make_backend(const ModelDescriptor& model);

// ---- configuration -----------------------------------------------------------------

// JSON configuration; relative paths resolve against the file's directory.
//
//   {
//     "corpus_dir": "...", "task_dir": "...", "output_dir": "...",
//     "suite": "main", "tasks": ["lang_NOUN_Case", ...],
//     "perturbations": ["original", "targ", "l2", "r2", "b2", "permute"],
//     "seed": 0, "n_seeds": 10, "variant": "mlp50", "layers": "weighted_sum",
//     "pooling": "auto", "sampler": {...}, "train": {...},
//     "models": [{"model_id": "...", "kind": "archive|http|static|random|chlstm", ...}],
//     "families": {"language": "family", ...}
//   }
struct ExperimentConfig {
  std::filesystem::path corpus_dir;
  std::filesystem::path task_dir;
  std::filesystem::path output_dir = "out";
  std::string suite = "main";
  std::vector<std::string> tasks;
  std::vector<std::string> perturbations = {"original", "targ", "l2", "r2", "b2", "permute"};
  std::uint64_t seed = 0;
  int n_seeds = 10;
  nn::ProbeVariant variant = nn::ProbeVariant::mlp50();
  nn::LayerSelection layers;
  PoolingChoice pooling = PoolingChoice::automatic;
  SamplerConfig sampler;
  nn::TrainConfig train;
  std::vector<ModelDescriptor> models;
  std::map<std::string, std::string> families;

  // Model ids must be unique and every configured path must exist.
  void validate() const;
  const ModelDescriptor& model(const std::string& model_id) const;
  ExperimentSpec experiment(const std::string& task, const std::string& model_id, const Masking& masking) const;

  Json to_json() const;
  static ExperimentConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
};

// ---- journal -------------------------------------------------------------------------

enum class JournalStatus { started, done, failed };

struct JournalRecord {
  std::string spec_hash;
  JournalStatus status = JournalStatus::started;
  std::string result;  // path of the result file, relative to the journal
  std::string error;
  std::string time;    // UTC, ISO 8601
};

// Append-only JSON Lines log of experiment attempts. Each record is written with a
// single append and flushed; a torn final line from an interrupted run is ignored.
class RunJournal {
 public:
  explicit RunJournal(std::filesystem::path path);

  const std::filesystem::path& path() const noexcept { return path_; }
  // The terminal record for a hash, if any.
  std::optional<JournalRecord> terminal(const std::string& spec_hash) const;
  bool done(const std::string& spec_hash) const;

  // Reopens the hash: its previous terminal record no longer counts.
  void started(const std::string& spec_hash);
  // Throws IntegrityError when the hash is already done and was not restarted.
  void finished(const std::string& spec_hash, const std::string& result_ref);
  void failed(const std::string& spec_hash, const std::string& error);
  std::vector<JournalRecord> records() const;

 private:
  void append(const JournalRecord& record);

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<JournalRecord> records_;
  std::map<std::string, std::size_t> terminal_;
};

// ---- suites ----------------------------------------------------------------------------

struct SuiteFailure {
  std::string task;
  std::string model_id;
  std::string masking;
  std::string error;
};

struct SuiteResult {
  std::vector<ExperimentResult> results;  // task, model, masking order
  std::vector<SuiteFailure> failures;
  std::size_t trained = 0;  // experiments run now rather than read back from the journal
};

// Runs every task x masking x model experiment, writing each result to
// <out>/<model>/<task>/<masking>.json and journaling it. Experiments the journal
// marks done are read back instead of retrained. Failures are recorded, not thrown.
SuiteResult run_suite(const std::vector<TaskDataset>& tasks, const std::vector<std::string>& maskings,
                      const ExperimentConfig& config, const std::filesystem::path& out_dir, RunJournal& journal,
                      const RunOptions& options = {});

// Effects of every non-original masking relative to the original run of the same
// model and task. Pairs with an undefined effect are skipped.
std::vector<EffectRecord> effects_from_results(const std::vector<ExperimentResult>& results);

std::filesystem::path result_path(const std::filesystem::path& out_dir, const ExperimentSpec& spec);

}  // namespace morphoprobe
