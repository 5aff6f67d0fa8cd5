#include "morphoprobe/suite.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include "morphoprobe/parallel.hpp"

namespace morphoprobe {

// ---- model registry ----------------------------------------------------------------

std::string_view to_string(BackendKind kind) noexcept {
  switch (kind) {
    case BackendKind::chlstm: return "chlstm";
    case BackendKind::archive: return "archive";
    case BackendKind::http: return "http";
    case BackendKind::static_vectors: return "static";
    case BackendKind::random_control: return "random";
  }
  return "archive";
}

BackendKind parse_backend_kind(std::string_view name) {
  for (const auto k : {BackendKind::chlstm, BackendKind::archive, BackendKind::http, BackendKind::static_vectors,
                       BackendKind::random_control}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown backend kind '" + std::string(name) + "'");
}

Json ModelDescriptor::to_json() const {
  Json j{{"model_id", model_id}, {"kind", std::string(to_string(kind))}};
  switch (kind) {
    case BackendKind::archive:
    case BackendKind::static_vectors: j["path"] = path.string(); break;
    case BackendKind::http:
      j["host"] = host;
      j["port"] = port;
      break;
    case BackendKind::random_control:
      j["mode"] = std::string(to_string(random.mode));
      j["n_layers"] = random.n_layers;
      j["dim"] = random.dim;
      j["seed"] = random.seed;
      j["piece_len"] = random.piece_len;
      j["context_mix"] = random.context_mix;
      if (!path.empty()) j["path"] = path.string();
      break;
    case BackendKind::chlstm: break;
  }
  if (kind != BackendKind::random_control) {
    if (n_layers) j["n_layers"] = *n_layers;
    if (dim) j["dim"] = *dim;
  }
  return j;
}

ModelDescriptor ModelDescriptor::from_json(const Json& j, const std::filesystem::path& base_dir) {
  ModelDescriptor m;
  try {
    m.model_id = j.at("model_id").get<std::string>();
    m.kind = parse_backend_kind(j.value("kind", std::string(m.model_id == kCharLstmModel ? "chlstm" : "archive")));
    if (j.contains("path")) {
      m.path = j.at("path").get<std::string>();
      if (m.path.is_relative() && !base_dir.empty()) m.path = base_dir / m.path;
    }
    m.host = j.value("host", m.host);
    m.port = j.value("port", m.port);
    if (m.kind == BackendKind::random_control) {
      m.random.model_id = m.model_id;
      m.random.mode = parse_random_mode(j.value("mode", std::string("fully_random")));
      m.random.n_layers = j.value("n_layers", m.random.n_layers);
      m.random.dim = j.value("dim", m.random.dim);
      m.random.seed = j.value("seed", m.random.seed);
      m.random.piece_len = j.value("piece_len", m.random.piece_len);
      m.random.context_mix = j.value("context_mix", m.random.context_mix);
    } else {
      if (j.contains("n_layers")) m.n_layers = j.at("n_layers").get<int>();
      if (j.contains("dim")) m.dim = j.at("dim").get<int>();
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("model descriptor: ") + e.what());
  }
  if (m.kind == BackendKind::chlstm && m.model_id != kCharLstmModel) {
    throw ConfigError("the character model must be registered as '" + std::string(kCharLstmModel) + "'");
  }
  return m;
}

std::shared_ptr<const EmbeddingBackend> make_backend(const ModelDescriptor& model) {
  std::shared_ptr<const EmbeddingBackend> backend;
  switch (model.kind) {
    case BackendKind::chlstm: return nullptr;
    case BackendKind::archive: backend = std::make_shared<ArchiveBackend>(model.path); break;
    case BackendKind::static_vectors:
      backend = std::make_shared<StaticBackend>(
          model.model_id, std::make_shared<const StaticVectors>(StaticVectors::read_vec(model.path)));
      break;
    case BackendKind::http: {
      HttpBackendConfig c;
      c.host = model.host;
      c.port = model.port;
      c.model_id = model.model_id;
      backend = std::make_shared<CachedBackend>(std::make_shared<HttpBackend>(c));
      break;
    }
    case BackendKind::random_control: {
      RandomControlConfig c = model.random;
      c.model_id = model.model_id;
      if (!model.path.empty()) c.static_layer = std::make_shared<const StaticVectors>(StaticVectors::read_vec(model.path));
      backend = std::make_shared<RandomControlBackend>(c);
      break;
    }
  }
  if (model.n_layers || model.dim) {
    const ModelInfo actual = backend->info();
    ModelInfo expected = actual;
    expected.model_id = model.model_id;
    if (model.n_layers) expected.n_layers = *model.n_layers;
    if (model.dim) expected.dim = *model.dim;
    check_model_info(expected, actual);
  }
  return backend;
}

// ---- configuration -------------------------------------------------------------------

void ExperimentConfig::validate() const {
  std::set<std::string> ids;
  for (const auto& m : models) {
    if (!ids.insert(m.model_id).second) throw ConfigError("model id '" + m.model_id + "' is registered twice");
    if ((m.kind == BackendKind::archive || m.kind == BackendKind::static_vectors) && !std::filesystem::exists(m.path)) {
      throw DataError("model '" + m.model_id + "': no such file " + m.path.string());
    }
  }
  if (!corpus_dir.empty() && !std::filesystem::exists(corpus_dir)) {
    throw DataError("corpus directory not found: " + corpus_dir.string());
  }
  if (!task_dir.empty() && !std::filesystem::exists(task_dir)) {
    throw DataError("task directory not found: " + task_dir.string());
  }
  if (n_seeds < 1) throw ConfigError("n_seeds must be positive");
  for (const auto& p : perturbations) (void)parse_masking(p);
  sampler.validate();
  train.validate();
}

const ModelDescriptor& ExperimentConfig::model(const std::string& model_id) const {
  for (const auto& m : models) {
    if (m.model_id == model_id) return m;
  }
  throw ConfigError("model '" + model_id + "' is not registered");
}

ExperimentSpec ExperimentConfig::experiment(const std::string& task, const std::string& model_id,
                                            const Masking& masking) const {
  ExperimentSpec s;
  s.task = task;
  s.model_id = model_id;
  s.variant = variant;
  s.layers = layers;
  s.pooling = pooling;
  s.masking = masking;
  s.n_seeds = n_seeds;
  s.base_seed = seed;
  s.train = train;
  return s;
}

Json ExperimentConfig::to_json() const {
  Json ms = Json::array();
  for (const auto& m : models) ms.push_back(m.to_json());
  return Json{{"corpus_dir", corpus_dir.string()},
              {"task_dir", task_dir.string()},
              {"output_dir", output_dir.string()},
              {"suite", suite},
              {"tasks", tasks},
              {"perturbations", perturbations},
              {"seed", seed},
              {"n_seeds", n_seeds},
              {"variant", variant.name},
              {"layers", layers.name()},
              {"pooling", std::string(to_string(pooling))},
              {"sampler",
               {{"n_train", sampler.n_train},
                {"n_dev", sampler.n_dev},
                {"n_test", sampler.n_test},
                {"max_imbalance", sampler.max_imbalance},
                {"min_class_count", sampler.min_class_count},
                {"min_sentences", sampler.min_sentences},
                {"min_len", sampler.min_len},
                {"max_len", sampler.max_len},
                {"seed", sampler.seed}}},
              {"train", train.to_json()},
              {"models", std::move(ms)},
              {"families", families}};
}

ExperimentConfig ExperimentConfig::from_json(const Json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  try {
    if (j.contains("corpus_dir")) c.corpus_dir = resolve(j.at("corpus_dir").get<std::string>());
    if (j.contains("task_dir")) c.task_dir = resolve(j.at("task_dir").get<std::string>());
    if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
    c.suite = j.value("suite", c.suite);
    c.tasks = j.value("tasks", c.tasks);
    c.perturbations = j.value("perturbations", c.perturbations);
    c.seed = j.value("seed", c.seed);
    c.n_seeds = j.value("n_seeds", c.n_seeds);
    c.variant = nn::ProbeVariant::parse(j.value("variant", c.variant.name));
    c.layers = nn::LayerSelection::parse(j.value("layers", c.layers.name()));
    c.pooling = parse_pooling_choice(j.value("pooling", std::string("auto")));
    if (j.contains("sampler")) {
      const Json& s = j.at("sampler");
      c.sampler.n_train = s.value("n_train", c.sampler.n_train);
      c.sampler.n_dev = s.value("n_dev", c.sampler.n_dev);
      c.sampler.n_test = s.value("n_test", c.sampler.n_test);
      c.sampler.max_imbalance = s.value("max_imbalance", c.sampler.max_imbalance);
      c.sampler.min_class_count = s.value("min_class_count", c.sampler.min_class_count);
      c.sampler.min_sentences = s.value("min_sentences", c.sampler.min_sentences);
      c.sampler.min_len = s.value("min_len", c.sampler.min_len);
      c.sampler.max_len = s.value("max_len", c.sampler.max_len);
      c.sampler.seed = s.value("seed", c.sampler.seed);
    }
    if (j.contains("train")) c.train = nn::TrainConfig::from_json(j.at("train"));
    if (j.contains("models")) {
      for (const auto& m : j.at("models")) c.models.push_back(ModelDescriptor::from_json(m, base_dir));
    }
    c.families = j.value("families", c.families);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("config file not found: " + path.string());
  return from_json(read_json_file(path), path.parent_path());
}

// ---- journal -------------------------------------------------------------------------

namespace {

std::string_view status_name(JournalStatus s) {
  switch (s) {
    case JournalStatus::started: return "started";
    case JournalStatus::done: return "done";
    case JournalStatus::failed: return "failed";
  }
  return "started";
}

JournalStatus parse_status(std::string_view s) {
  if (s == "started") return JournalStatus::started;
  if (s == "done") return JournalStatus::done;
  if (s == "failed") return JournalStatus::failed;
  throw IntegrityError("unknown journal status '" + std::string(s) + "'");
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunJournal::RunJournal(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  const std::string text = read_text_file(path_);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool last = nl == std::string::npos;
    const std::string line = text.substr(pos, last ? std::string::npos : nl - pos);
    if (line.empty()) {
      pos = nl + 1;
      continue;
    }
    JournalRecord r;
    try {
      const Json j = Json::parse(line);
      r.spec_hash = j.at("spec_hash").get<std::string>();
      r.status = parse_status(j.at("status").get<std::string>());
      r.result = j.value("result", "");
      r.error = j.value("error", "");
      r.time = j.value("time", "");
    } catch (const std::exception&) {
      if (!last) throw IntegrityError("corrupt journal line in " + path_.string());
      // Torn tail of an interrupted append: drop it so later appends start on a clean line.
      std::filesystem::resize_file(path_, pos);
      break;
    }
    if (r.status == JournalStatus::started) {
      terminal_.erase(r.spec_hash);
    } else {
      // A failed attempt may be retried; a later terminal record supersedes it.
      const auto it = terminal_.find(r.spec_hash);
      if (it != terminal_.end() && records_[it->second].status == JournalStatus::done) {
        throw IntegrityError("journal has two terminal records for " + r.spec_hash);
      }
      terminal_[r.spec_hash] = records_.size();
    }
    records_.push_back(std::move(r));
    if (last) {
      std::ofstream(path_, std::ios::app) << '\n';
      break;
    }
    pos = nl + 1;
  }
}

std::optional<JournalRecord> RunJournal::terminal(const std::string& spec_hash) const {
  const std::lock_guard lock(mutex_);
  const auto it = terminal_.find(spec_hash);
  if (it == terminal_.end()) return std::nullopt;
  return records_[it->second];
}

bool RunJournal::done(const std::string& spec_hash) const {
  const auto t = terminal(spec_hash);
  return t && t->status == JournalStatus::done;
}

void RunJournal::append(const JournalRecord& record) {
  Json j{{"spec_hash", record.spec_hash}, {"status", std::string(status_name(record.status))}, {"time", record.time}};
  if (!record.result.empty()) j["result"] = record.result;
  if (!record.error.empty()) j["error"] = record.error;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  if (!out) throw DataError("cannot append to journal " + path_.string());
  out << j.dump() + "\n" << std::flush;
  if (!out) throw DataError("journal write failed: " + path_.string());
}

void RunJournal::started(const std::string& spec_hash) {
  const std::lock_guard lock(mutex_);
  JournalRecord r{spec_hash, JournalStatus::started, {}, {}, utc_now()};
  append(r);
  terminal_.erase(spec_hash);
  records_.push_back(std::move(r));
}

void RunJournal::finished(const std::string& spec_hash, const std::string& result_ref) {
  const std::lock_guard lock(mutex_);
  const auto it = terminal_.find(spec_hash);
  if (it != terminal_.end() && records_[it->second].status == JournalStatus::done) {
    throw IntegrityError("experiment " + spec_hash + " is already finished");
  }
  JournalRecord r{spec_hash, JournalStatus::done, result_ref, {}, utc_now()};
  append(r);
  terminal_[spec_hash] = records_.size();
  records_.push_back(std::move(r));
}

void RunJournal::failed(const std::string& spec_hash, const std::string& error) {
  const std::lock_guard lock(mutex_);
  const auto it = terminal_.find(spec_hash);
  if (it != terminal_.end() && records_[it->second].status == JournalStatus::done) {
    throw IntegrityError("experiment " + spec_hash + " is already finished");
  }
  JournalRecord r{spec_hash, JournalStatus::failed, {}, error, utc_now()};
  append(r);
  terminal_[spec_hash] = records_.size();
  records_.push_back(std::move(r));
}

std::vector<JournalRecord> RunJournal::records() const {
  const std::lock_guard lock(mutex_);
  return records_;
}

// ---- suites ----------------------------------------------------------------------------

std::filesystem::path result_path(const std::filesystem::path& out_dir, const ExperimentSpec& spec) {
  return out_dir / spec.model_id / spec.task / (spec.masking_label() + ".json");
}

SuiteResult run_suite(const std::vector<TaskDataset>& tasks, const std::vector<std::string>& maskings,
                      const ExperimentConfig& config, const std::filesystem::path& out_dir, RunJournal& journal,
                      const RunOptions& options) {
  struct Job {
    const TaskDataset* task;
    const ModelDescriptor* model;
    std::string masking;
  };
  std::vector<Job> jobs;
  for (const auto& t : tasks) {
    for (const auto& m : config.models) {
      for (const auto& p : maskings) jobs.push_back({&t, &m, p});
    }
  }
  std::map<std::string, std::shared_ptr<const EmbeddingBackend>> backends;
  std::map<std::string, std::string> backend_errors;
  for (const auto& m : config.models) {
    try {
      backends[m.model_id] = make_backend(m);
    } catch (const Error& e) {
      backend_errors[m.model_id] = e.what();
    }
  }

  std::vector<std::optional<ExperimentResult>> results(jobs.size());
  std::vector<std::optional<SuiteFailure>> failures(jobs.size());
  std::vector<char> trained(jobs.size(), 0);
  RunOptions inner = options;
  inner.workers = 1;
  parallel_for(jobs.size(), options.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const std::string task_name = job.task->spec.name();
    SuiteFailure failure{task_name, job.model->model_id, job.masking, {}};
    try {
      const ExperimentSpec spec = config.experiment(task_name, job.model->model_id, parse_masking(job.masking));
      const std::string hash = spec.hash();
      const std::filesystem::path file = result_path(out_dir, spec);
      if (const auto t = journal.terminal(hash); t && t->status == JournalStatus::done && std::filesystem::exists(file)) {
        results[i] = ExperimentResult::from_json(read_json_file(file));
        return;
      }
      if (const auto it = backend_errors.find(job.model->model_id); it != backend_errors.end()) {
        throw DataError(it->second);
      }
      journal.started(hash);
      try {
        ExperimentResult r = run_experiment(spec, *job.task, backends.at(job.model->model_id).get(), inner);
        write_text_file(file, dump_json(r.to_json()));
        journal.finished(hash, std::filesystem::relative(file, journal.path().parent_path()).string());
        results[i] = std::move(r);
        trained[i] = 1;
      } catch (const Error& e) {
        journal.failed(hash, e.what());
        throw;
      }
    } catch (const Error& e) {
      failure.error = e.what();
      failures[i] = failure;
    }
  });

  SuiteResult out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (results[i]) out.results.push_back(std::move(*results[i]));
    if (failures[i]) out.failures.push_back(std::move(*failures[i]));
    out.trained += trained[i] ? 1 : 0;
  }
  return out;
}

std::vector<EffectRecord> effects_from_results(const std::vector<ExperimentResult>& results) {
  std::map<std::pair<std::string, std::string>, double> original;
  for (const auto& r : results) {
    if (r.spec.masking_label() == "original" && r.valid_seeds() > 0) original[{r.spec.model_id, r.spec.task}] = r.mean_test;
  }
  std::vector<EffectRecord> out;
  for (const auto& r : results) {
    const std::string label = r.spec.masking_label();
    if (label == "original" || r.valid_seeds() == 0) continue;
    const auto it = original.find({r.spec.model_id, r.spec.task});
    if (it == original.end() || !(it->second > 0.0)) continue;
    out.push_back({r.spec.model_id, r.spec.task, label, effect(it->second, r.mean_test)});
  }
  return out;
}

}  // namespace morphoprobe
