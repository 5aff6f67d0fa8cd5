// morphoprobe: command-line entry point.
//
//   morphoprobe ingest --lang xx --treebank <dir>... --out <dir>
//   morphoprobe sample --corpus <dir> --lang xx [--pos NOUN --feature Number] [--scale 0.1] --out <dir>
//   morphoprobe plan --task <dir> --suite perturb|shapley --out manifest.json
//   morphoprobe train|perturb --config cfg.json [--task <dir>...] [--model <id>...]
//   morphoprobe shapley --task <dir> --model <id> [--mode retrain|fixed_probe]
//   morphoprobe shapley-report --in <dir> --aggregate language|pos|tag
//   morphoprobe ablate --layers|--size|--random ...
//   morphoprobe analyze --in <dir> --effects|--cluster|--layerweights|--score-external <conllu>
//   morphoprobe report --in <dir> --out <dir>
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "morphoprobe/analysis.hpp"
#include "morphoprobe/clustering.hpp"
#include "morphoprobe/conllu.hpp"
#include "morphoprobe/errors.hpp"
#include "morphoprobe/json_io.hpp"
#include "morphoprobe/manifest.hpp"
#include "morphoprobe/parallel.hpp"
#include "morphoprobe/probe.hpp"
#include "morphoprobe/report.hpp"
#include "morphoprobe/sampler.hpp"
#include "morphoprobe/shapley.hpp"
#include "morphoprobe/suite.hpp"

namespace fs = std::filesystem;
using namespace morphoprobe;

namespace {

// Options shared by every command that trains probes.
struct RunFlags {
  std::string config;
  std::string out;
  std::vector<std::string> tasks;
  std::vector<std::string> models;
  int workers = 0;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_seeds;
  std::optional<int> max_epochs;
  std::optional<int> patience;
  std::optional<int> batch_size;
  std::string variant;
  std::string layers;
  std::string pooling;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, const std::string& layers_flag = "--layers") {
  cmd->add_option("--config", f.config, "Experiment configuration (JSON)");
  cmd->add_option("--out", f.out, "Output root; results go to <out>/<suite>");
  cmd->add_option("--task", f.tasks, "Task directory (repeatable)");
  cmd->add_option("--model", f.models, "Registered model id (repeatable)");
  cmd->add_option("--workers", f.workers, "Worker threads (default MORPHOPROBE_WORKERS or all cores)");
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--n-seeds", f.n_seeds, "Probe seeds per experiment");
  cmd->add_option("--max-epochs", f.max_epochs, "Training epoch cap");
  cmd->add_option("--patience", f.patience, "Early-stopping patience");
  cmd->add_option("--batch-size", f.batch_size, "Minibatch size");
  cmd->add_option("--variant", f.variant, "mlp50|mlp100|mlp50x2|linear_hidden|linear_flat");
  cmd->add_option(layers_flag, f.layers, "weighted_sum|concat|layer:k");
  cmd->add_option("--pooling", f.pooling, "first|last|auto");
}

void require_path(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw DataError(what + " not found: " + p.string());
}

ExperimentConfig load_config(const RunFlags& f) {
  ExperimentConfig c;
  if (!f.config.empty()) {
    require_path(f.config, "config file");
    c = ExperimentConfig::load(f.config);
  }
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.seed) c.seed = *f.seed;
  if (f.n_seeds) c.n_seeds = *f.n_seeds;
  if (f.max_epochs) c.train.max_epochs = *f.max_epochs;
  if (f.patience) c.train.patience = *f.patience;
  if (f.batch_size) c.train.batch_size = *f.batch_size;
  try {
    if (!f.variant.empty()) c.variant = nn::ProbeVariant::parse(f.variant);
    if (!f.layers.empty()) c.layers = nn::LayerSelection::parse(f.layers);
    if (!f.pooling.empty()) c.pooling = parse_pooling_choice(f.pooling);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  // The character baseline needs no registration.
  const bool wants_char = std::find(f.models.begin(), f.models.end(), kCharLstmModel) != f.models.end();
  const bool has_char = std::any_of(c.models.begin(), c.models.end(),
                                    [](const ModelDescriptor& m) { return m.model_id == kCharLstmModel; });
  if (wants_char && !has_char) {
    ModelDescriptor m;
    m.model_id = std::string(kCharLstmModel);
    m.kind = BackendKind::chlstm;
    c.models.push_back(m);
  }
  if (!f.models.empty()) {
    std::vector<ModelDescriptor> kept;
    for (const auto& id : f.models) kept.push_back(c.model(id));
    c.models = kept;
  }
  c.validate();
  return c;
}

int workers_of(const RunFlags& f) { return f.workers > 0 ? f.workers : default_workers(); }

std::vector<TaskDataset> load_tasks(const RunFlags& f, const ExperimentConfig& c) {
  std::vector<fs::path> dirs;
  for (const auto& t : f.tasks) dirs.emplace_back(t);
  if (dirs.empty()) {
    for (const auto& t : c.tasks) dirs.push_back(c.task_dir / t);
  }
  if (dirs.empty()) throw UsageError("no tasks: pass --task or list them in the config");
  std::vector<TaskDataset> tasks;
  for (const auto& d : dirs) {
    require_path(d, "task directory");
    tasks.push_back(read_task_dir(d));
  }
  return tasks;
}

fs::path suite_dir(const ExperimentConfig& c) { return c.output_dir / c.suite; }

void print_results(const std::vector<ExperimentResult>& results) {
  for (const auto& r : results) {
    std::printf("%-12s %-28s %-10s acc %.4f +- %.4f (%zu seeds)\n", r.spec.model_id.c_str(), r.spec.task.c_str(),
                r.spec.masking_label().c_str(), r.mean_test, r.std_test, r.valid_seeds());
  }
}

int finish_suite(const SuiteResult& r) {
  print_results(r.results);
  std::printf("%zu experiments, %zu trained, %zu failed\n", r.results.size() + r.failures.size(), r.trained,
              r.failures.size());
  for (const auto& f : r.failures) {
    std::fprintf(stderr, "failed: %s %s %s: %s\n", f.model_id.c_str(), f.task.c_str(), f.masking.c_str(),
                 f.error.c_str());
  }
  return r.failures.empty() ? 0 : 2;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---- ingest ------------------------------------------------------------------------

struct IngestFlags {
  std::string lang;
  std::vector<std::string> treebanks;
  std::string out;
};

int cmd_ingest(const IngestFlags& f) {
  std::vector<Treebank> treebanks;
  for (const auto& t : f.treebanks) {
    require_path(t, "treebank directory");
    treebanks.push_back(read_treebank_dir(t, f.lang));
  }
  Corpus corpus = merge_treebanks(treebanks);
  const fs::path out(f.out);
  std::map<Split, std::string> text;
  for (auto s : corpus.sentences) {
    s.sent_id = s.treebank_id + "/" + s.sent_id;
    text[s.split] += to_conllu(s);
  }
  for (Split s : kAllSplits) {
    write_text_file(out / (f.lang + "-ud-" + std::string(to_string(s)) + ".conllu"), text[s]);
  }
  const CorpusStats st = corpus_stats(corpus);
  Json j{{"language", f.lang},
         {"treebanks", f.treebanks.size()},
         {"sentences", {{"train", st.sentences.train}, {"dev", st.sentences.dev}, {"test", st.sentences.test}}},
         {"tokens", st.tokens},
         {"mean_sentence_length", st.mean_sentence_length},
         {"ambiguity_rate", st.ambiguity_rate},
         {"feature_inventory", st.feature_inventory}};
  write_text_file(out / "stats.json", dump_json(j) + "\n");
  std::printf("%s: %zu sentences (%zu/%zu/%zu), %zu tokens\n", f.lang.c_str(), st.sentences.total(),
              st.sentences.train, st.sentences.dev, st.sentences.test, st.tokens);
  return 0;
}

// ---- sample ------------------------------------------------------------------------

struct SampleFlags {
  std::vector<std::string> corpora;
  std::string lang;
  std::string pos;
  std::string feature;
  double scale = 1.0;
  std::optional<std::size_t> n_train, n_dev, n_test, min_class_count, min_sentences;
  std::optional<double> max_imbalance;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_sample(const SampleFlags& f) {
  if (f.pos.empty() != f.feature.empty()) throw UsageError("--pos and --feature go together");
  SamplerConfig config;
  config.seed = f.seed;
  config = config.scaled(f.scale);
  if (f.n_train) config.n_train = *f.n_train;
  if (f.n_dev) config.n_dev = *f.n_dev;
  if (f.n_test) config.n_test = *f.n_test;
  if (f.min_class_count) config.min_class_count = *f.min_class_count;
  if (f.min_sentences) config.min_sentences = *f.min_sentences;
  if (f.max_imbalance) config.max_imbalance = *f.max_imbalance;
  config.validate();

  std::vector<Treebank> treebanks;
  for (const auto& c : f.corpora) {
    require_path(c, "corpus directory");
    treebanks.push_back(read_treebank_dir(c, f.lang));
  }
  const Corpus corpus = merge_treebanks(treebanks);

  std::vector<TaskSpec> specs;
  if (!f.pos.empty()) {
    specs.push_back({f.lang, f.pos, f.feature});
  } else {
    for (const auto& c : enumerate_candidates(corpus)) specs.push_back(c.spec);
  }
  int sampled = 0;
  for (const auto& spec : specs) {
    const SampleOutcome outcome = sample_task(corpus, spec, config);
    if (const auto* r = std::get_if<Rejection>(&outcome)) {
      std::fprintf(stderr, "rejected %s: %s (%s)\n", spec.name().c_str(), std::string(to_string(r->reason)).c_str(),
                   r->detail.c_str());
      continue;
    }
    const auto& dataset = std::get<TaskDataset>(outcome);
    const auto violations = validate_dataset(dataset, config);
    if (!violations.empty()) throw IntegrityError(spec.name() + ": " + violations.front());
    write_task_dir(fs::path(f.out) / spec.name(), dataset, config);
    std::printf("%s: %zu/%zu/%zu, labels", spec.name().c_str(), dataset.train.size(), dataset.dev.size(),
                dataset.test.size());
    for (const auto& l : dataset.labels) std::printf(" %s", l.c_str());
    std::printf("\n");
    ++sampled;
  }
  if (sampled == 0 && !f.pos.empty()) throw DataError("task " + specs.front().name() + " was rejected");
  return 0;
}

// ---- plan --------------------------------------------------------------------------

struct PlanFlags {
  std::string task;
  std::string suite = "perturb";
  std::string model = "model";
  std::string out;
  std::string config;
  std::uint64_t seed = 0;
};

int cmd_plan(const PlanFlags& f) {
  require_path(f.task, "task directory");
  const TaskDataset dataset = read_task_dir(f.task);
  std::vector<Masking> maskings;
  if (f.suite == "shapley") {
    maskings = all_coalitions();
  } else if (f.suite == "perturb") {
    std::vector<std::string> names = ExperimentConfig{}.perturbations;
    if (!f.config.empty()) {
      require_path(f.config, "config file");
      names = ExperimentConfig::load(f.config).perturbations;
    }
    for (const auto& n : names) maskings.push_back(parse_masking(n));
  } else {
    throw UsageError("--suite must be perturb or shapley");
  }
  const ExtractionManifest manifest = plan_manifest(dataset, maskings, f.model, f.seed);
  write_manifest(f.out, manifest);
  std::printf("%s: %zu distinct requests for %zu maskings\n", f.out.c_str(), manifest.entries.size(),
              maskings.size());
  return 0;
}

// ---- train / perturb -----------------------------------------------------------------

int run_suite_command(const RunFlags& f, bool perturbations) {
  const ExperimentConfig c = load_config(f);
  if (c.models.empty()) throw UsageError("no models: register them in the config or pass --model chlstm");
  const auto tasks = load_tasks(f, c);
  std::vector<std::string> maskings = {"original"};
  if (perturbations) {
    for (const auto& p : c.perturbations) {
      if (p != "original") maskings.push_back(p);
    }
  }
  const fs::path dir = suite_dir(c);
  RunJournal journal(dir / "journal.jsonl");
  RunOptions options;
  options.workers = workers_of(f);
  options.perturbation_seed = c.seed;
  return finish_suite(run_suite(tasks, maskings, c, dir, journal, options));
}

// ---- shapley -----------------------------------------------------------------------

int cmd_shapley(const RunFlags& f, const std::string& mode) {
  if (f.tasks.size() != 1 || f.models.size() != 1) throw UsageError("shapley takes one --task and one --model");
  const ExperimentConfig c = load_config(f);
  const TaskDataset dataset = load_tasks(f, c).front();
  const ModelDescriptor& model = c.model(f.models.front());
  const auto backend = make_backend(model);
  ExperimentSpec spec = c.experiment(dataset.spec.name(), model.model_id, Coalition::full());
  spec.n_seeds = 1;
  RunOptions options;
  options.workers = workers_of(f);
  options.perturbation_seed = c.seed;
  const CoalitionRun run = run_coalitions(spec, dataset, backend.get(), parse_coalition_mode(mode), options);
  const fs::path dir = suite_dir(c) / model.model_id / dataset.spec.name();
  write_text_file(dir / "coalitions.json", dump_json(run.table.to_json()) + "\n");
  write_text_file(dir / "shapley.json", dump_json(run.profile.to_json()) + "\n");
  std::printf("%s %s: %zu distinct experiments\n", model.model_id.c_str(), dataset.spec.name().c_str(),
              run.distinct_experiments);
  for (int p = 0; p < kPlayerCount; ++p) {
    std::printf("  %-4s %9.4f\n", player_name(p).c_str(), run.profile.phi[static_cast<std::size_t>(p)]);
  }
  return 0;
}

struct ShapleyReportFlags {
  std::string in;
  std::string aggregate;
  std::string out;
};

int cmd_shapley_report(const ShapleyReportFlags& f) {
  require_path(f.in, "input directory");
  const GridAxis axis = parse_grid_axis(f.aggregate);
  const ReportInputs inputs = load_report_inputs(f.in);
  if (inputs.profiles.empty()) {
    std::fprintf(stderr, "warning: no Shapley profiles under %s\n", f.in.c_str());
    return 0;
  }
  std::map<std::string, std::vector<ShapleyProfile>> by_model;
  for (const auto& p : inputs.profiles) by_model[p.model_id].push_back(p);

  std::ostringstream csv;
  csv << "model_id," << to_string(axis) << ",n";
  for (int p = 0; p < kPlayerCount; ++p) csv << ",phi[" << player_name(p) << ']';
  csv << '\n';
  Json variance = Json::object();
  for (const auto& [model, profiles] : by_model) {
    std::map<std::string, std::vector<ShapleyProfile>> groups;
    std::vector<GridProfile> grid;
    for (const auto& p : profiles) {
      const TaskSpec t = TaskSpec::parse(p.task);
      GridProfile g{t.language, t.upos, t.feature, {}};
      for (int i = 0; i < kPlayerCount; ++i) g.phi[i] = p.phi[i] / 100.0;
      grid.push_back(g);
      const std::string key = axis == GridAxis::language ? t.language : axis == GridAxis::pos ? t.upos : t.feature;
      groups[key].push_back(p);
    }
    for (const auto& [key, group] : groups) {
      const ShapleyProfile mean = mean_profile(group);
      csv << model << ',' << key << ',' << group.size();
      for (double v : mean.phi) csv << ',' << format_double(v);
      csv << '\n';
    }
    Json v = Json::object();
    for (const auto a : {GridAxis::language, GridAxis::pos, GridAxis::feature}) {
      const auto gv = generalization_variance(grid, a);
      v[std::string(to_string(a))] = gv ? Json(*gv) : Json(nullptr);
    }
    variance[model] = v;
  }
  const fs::path out = f.out.empty() ? fs::path(f.in) : fs::path(f.out);
  write_text_file(out / ("shapley_by_" + std::string(to_string(axis)) + ".csv"), csv.str());
  write_text_file(out / "generalization_variance.json", dump_json(variance) + "\n");
  std::fputs(csv.str().c_str(), stdout);
  return 0;
}

// ---- ablate ------------------------------------------------------------------------

int cmd_ablate(const RunFlags& f, bool layers, bool size, bool random, const std::string& fractions,
               const std::string& masking) {
  if (int(layers) + int(size) + int(random) != 1) throw UsageError("pick exactly one of --layers, --size, --random");
  ExperimentConfig c = load_config(f);
  RunOptions options;
  options.workers = workers_of(f);
  options.perturbation_seed = c.seed;

  if (random) {
    std::vector<ModelDescriptor> controls;
    for (const auto& m : c.models) {
      if (m.kind == BackendKind::random_control) controls.push_back(m);
    }
    if (controls.empty()) throw ConfigError("no random-control models registered");
    c.models = controls;
    const auto tasks = load_tasks(f, c);
    std::vector<std::string> maskings = {"original"};
    for (const auto& p : c.perturbations) {
      if (p != "original") maskings.push_back(p);
    }
    RunJournal journal(suite_dir(c) / "journal.jsonl");
    return finish_suite(run_suite(tasks, maskings, c, suite_dir(c), journal, options));
  }

  const auto tasks = load_tasks(f, c);
  std::vector<ExperimentResult> all;
  std::ostringstream csv;
  csv << "model_id,task,perturbation," << (layers ? "layers" : "train_fraction,train_size") << ",mean_test,std_test\n";
  for (const auto& task : tasks) {
    for (const auto& model : c.models) {
      const auto backend = make_backend(model);
      const ExperimentSpec spec = c.experiment(task.spec.name(), model.model_id, parse_masking(masking));
      const fs::path dir = suite_dir(c) / "ablation" / (layers ? "layers" : "size") / model.model_id / task.spec.name();
      if (layers) {
        if (!backend) throw ConfigError("layer ablation needs an embedding model, not " + model.model_id);
        for (const auto& r : layer_ablation(spec, task, *backend, options)) {
          write_text_file(dir / (r.spec.layers.name() + ".json"), dump_json(r.to_json()) + "\n");
          csv << model.model_id << ',' << task.spec.name() << ',' << masking << ',' << r.spec.layers.name() << ','
              << format_double(r.mean_test) << ',' << format_double(r.std_test) << '\n';
          all.push_back(r);
        }
      } else {
        std::vector<double> fr;
        for (const auto& s : split_list(fractions)) fr.push_back(std::stod(s));
        for (const auto& p :
             train_size_ablation(spec, task, backend.get(), fr, c.sampler.max_imbalance, options)) {
          write_text_file(dir / ("fraction_" + format_double(p.fraction) + ".json"), dump_json(p.result.to_json()) + "\n");
          csv << model.model_id << ',' << task.spec.name() << ',' << masking << ',' << format_double(p.fraction) << ','
              << p.train_size << ',' << format_double(p.result.mean_test) << ',' << format_double(p.result.std_test)
              << '\n';
          all.push_back(p.result);
        }
      }
    }
  }
  const fs::path table = suite_dir(c) / "ablation" / (layers ? "layers.csv" : "size.csv");
  write_text_file(table, csv.str());
  std::fputs(csv.str().c_str(), stdout);
  return 0;
}

// ---- analyze -----------------------------------------------------------------------

struct AnalyzeFlags {
  std::string in;
  std::string out;
  std::string config;
  bool effects = false;
  bool cluster = false;
  bool layerweights = false;
  std::string score_external;
  std::string task;
  std::string model;
  int runs = 100;
  int k_min = 3;
  int k_max = 8;
  bool standardize = false;
  std::uint64_t seed = 0;
  int workers = 0;
};

Json significance(const std::vector<EffectRecord>& effects) {
  std::set<std::string> models, perts;
  std::map<std::tuple<std::string, std::string, std::string>, double> e;
  for (const auto& r : effects) {
    models.insert(r.model_id);
    perts.insert(r.perturbation);
    e[{r.model_id, r.perturbation, r.task}] = r.effect;
  }
  struct Row {
    std::string a, b, p;
    std::size_t n, wins;
    TTestResult t;
  };
  std::vector<Row> rows;
  for (auto a = models.begin(); a != models.end(); ++a) {
    for (auto b = std::next(a); b != models.end(); ++b) {
      for (const auto& p : perts) {
        std::vector<double> xa, xb;
        std::size_t wins = 0;
        for (const auto& [key, v] : e) {
          if (std::get<0>(key) != *a || std::get<1>(key) != p) continue;
          const auto other = e.find({*b, p, std::get<2>(key)});
          if (other == e.end()) continue;
          xa.push_back(v);
          xb.push_back(other->second);
          wins += v > other->second ? 1 : 0;
        }
        if (xa.size() < 2) continue;
        rows.push_back({*a, *b, p, xa.size(), wins, paired_t_test(xa, xb)});
      }
    }
  }
  Json out = Json::array();
  for (const auto& r : rows) {
    out.push_back({{"model_a", r.a},
                   {"model_b", r.b},
                   {"perturbation", r.p},
                   {"n_tasks", r.n},
                   {"a_greater", r.wins},
                   {"sign_test_p", sign_test(r.wins, r.n)},
                   {"mean_difference", r.t.mean_difference},
                   {"t", r.t.t},
                   {"t_test_p", r.t.p},
                   {"t_test_p_bonferroni", bonferroni(r.t.p, rows.size())}});
  }
  return out;
}

int cmd_analyze(const AnalyzeFlags& f) {
  const int picked = int(f.effects) + int(f.cluster) + int(f.layerweights) + int(!f.score_external.empty());
  if (picked != 1) throw UsageError("pick exactly one of --effects, --cluster, --layerweights, --score-external");

  if (!f.score_external.empty()) {
    if (f.task.empty()) throw UsageError("--score-external needs --task");
    require_path(f.score_external, "predictions file");
    require_path(f.task, "task directory");
    const TaskDataset dataset = read_task_dir(f.task);
    std::ifstream in(f.score_external);
    const auto predicted = parse_conllu(in, dataset.spec.language, "external", Split::test);
    const ExternalScore s = score_external(dataset, predicted);
    const Json j{{"task", dataset.spec.name()}, {"mean", s.mean},       {"instances", s.instances},
                 {"exact", s.exact},            {"partial", s.partial}, {"missed", s.missed},
                 {"majority_baseline", majority_baseline(dataset)}};
    if (!f.out.empty()) write_text_file(fs::path(f.out) / "external_score.json", dump_json(j) + "\n");
    std::printf("%s\n", dump_json(j).c_str());
    return 0;
  }

  require_path(f.in, "input directory");
  const ReportInputs inputs = load_report_inputs(f.in);
  const fs::path out = f.out.empty() ? fs::path(f.in) : fs::path(f.out);
  const std::vector<EffectRecord> effects = effects_from_results(inputs.results);

  if (f.layerweights) {
    Json rows = Json::array();
    for (const auto& r : inputs.results) {
      if (r.mean_layer_weights.empty()) continue;
      const LayerWeightDiagnostics d = layer_weight_diagnostics(r.mean_layer_weights);
      rows.push_back({{"model_id", r.spec.model_id},
                      {"task", r.spec.task},
                      {"perturbation", r.spec.masking_label()},
                      {"entropy", d.entropy},
                      {"entropy_bits", d.entropy_bits},
                      {"max_min_ratio", std::isinf(d.max_min_ratio) ? Json("inf") : Json(d.max_min_ratio)},
                      {"weights", r.mean_layer_weights}});
    }
    write_text_file(out / "layer_weights.json", dump_json(rows) + "\n");
    std::printf("%zu experiments with layer weights\n", rows.size());
    return 0;
  }
  if (effects.empty()) {
    std::fprintf(stderr, "warning: no effects under %s\n", f.in.c_str());
    return 0;
  }
  if (f.effects) {
    write_text_file(out / "effects.csv", effects_csv(effects));
    write_text_file(out / "effect_means.csv", effect_means_csv(effects));
    std::set<std::string> models;
    for (const auto& e : effects) models.insert(e.model_id);
    for (const auto& a : models) {
      for (const auto& b : models) {
        if (b < a) continue;
        const CorrelationMatrix m = pearson_matrix(effects, a, b);
        write_text_file(out / ("correlation_" + a + (a == b ? "" : "__" + b) + ".csv"), m.to_csv());
      }
    }
    write_text_file(out / "significance.json", dump_json(significance(effects)) + "\n");
    std::fputs(effect_means_csv(effects).c_str(), stdout);
    return 0;
  }
  // cluster
  FeatureMatrix features = language_feature_matrix(effects, f.model);
  ConsensusConfig cc;
  cc.runs = f.runs;
  cc.k_min = f.k_min;
  cc.k_max = f.k_max;
  cc.seed = f.seed;
  cc.standardize = f.standardize;
  cc.workers = f.workers > 0 ? f.workers : default_workers();
  const CooccurrenceMatrix m = consensus_cluster(features, cc);
  std::map<std::string, std::string> families;
  if (!f.config.empty()) {
    require_path(f.config, "config file");
    families = ExperimentConfig::load(f.config).families;
  }
  write_text_file(out / "cooccurrence.json", dump_json(m.to_json()) + "\n");
  write_text_file(out / "cooccurrence.csv", m.to_csv());
  write_text_file(out / "cooccurrence.svg", cooccurrence_svg(m, families));
  std::printf("%zu languages x %zu features, %d runs\n", features.rows.size(), features.cols.size(), m.runs);
  return 0;
}

// ---- report ------------------------------------------------------------------------

int cmd_report(const std::string& in, const std::string& out, const std::string& config) {
  require_path(in, "input directory");
  ReportInputs inputs = load_report_inputs(in);
  if (!config.empty()) {
    require_path(config, "config file");
    inputs.families = ExperimentConfig::load(config).families;
  }
  const auto written = emit_report(inputs, out, std::cerr);
  for (const auto& p : written) std::printf("%s\n", p.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Morphosyntactic probing of contextual embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "morphoprobe 0.1.0");

  IngestFlags ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Parse UD treebanks into a merged corpus");
  c_ingest->add_option("--lang", ingest.lang, "Language code")->required();
  c_ingest->add_option("--treebank", ingest.treebanks, "Treebank directory (repeatable)")->required();
  c_ingest->add_option("--out", ingest.out, "Output directory")->required();

  SampleFlags sample;
  auto* c_sample = app.add_subcommand("sample", "Sample probing tasks from a corpus");
  c_sample->add_option("--corpus", sample.corpora, "Corpus or treebank directory (repeatable)")->required();
  c_sample->add_option("--lang", sample.lang, "Language code")->required();
  c_sample->add_option("--pos", sample.pos, "UPOS tag; omit with --feature to sample every candidate");
  c_sample->add_option("--feature", sample.feature, "Morphological feature");
  c_sample->add_option("--scale", sample.scale, "Multiplies every count threshold");
  c_sample->add_option("--n-train", sample.n_train);
  c_sample->add_option("--n-dev", sample.n_dev);
  c_sample->add_option("--n-test", sample.n_test);
  c_sample->add_option("--min-class-count", sample.min_class_count);
  c_sample->add_option("--min-sentences", sample.min_sentences);
  c_sample->add_option("--max-imbalance", sample.max_imbalance);
  c_sample->add_option("--seed", sample.seed);
  c_sample->add_option("--out", sample.out, "Task root directory")->required();

  PlanFlags plan;
  auto* c_plan = app.add_subcommand("plan", "Write the extraction manifest for a task");
  c_plan->add_option("--task", plan.task, "Task directory")->required();
  c_plan->add_option("--suite", plan.suite, "perturb|shapley");
  c_plan->add_option("--model", plan.model, "Model id recorded in the requests");
  c_plan->add_option("--config", plan.config, "Config supplying the perturbation list");
  c_plan->add_option("--seed", plan.seed, "PERMUTE seed");
  c_plan->add_option("--out", plan.out, "Manifest path")->required();

  RunFlags train, perturb, shapley, ablate;
  auto* c_train = app.add_subcommand("train", "Train probes on unperturbed tasks");
  add_run_flags(c_train, train);
  auto* c_perturb = app.add_subcommand("perturb", "Train probes under every configured perturbation");
  add_run_flags(c_perturb, perturb);

  std::string mode = "retrain";
  auto* c_shapley = app.add_subcommand("shapley", "Shapley decomposition over the nine positional players");
  add_run_flags(c_shapley, shapley);
  c_shapley->add_option("--mode", mode, "retrain|fixed_probe");

  ShapleyReportFlags sreport;
  auto* c_sreport = app.add_subcommand("shapley-report", "Aggregate Shapley profiles");
  c_sreport->add_option("--in", sreport.in, "Run directory")->required();
  c_sreport->add_option("--aggregate", sreport.aggregate, "language|pos|tag")->required();
  c_sreport->add_option("--out", sreport.out, "Output directory (default --in)");

  bool a_layers = false, a_size = false, a_random = false;
  std::string fractions = "0.05,0.1,0.25,0.5,1", a_masking = "original";
  auto* c_ablate = app.add_subcommand("ablate", "Layer, training-size and random-model ablations");
  add_run_flags(c_ablate, ablate, "--layer-mode");
  c_ablate->add_flag("--layers", a_layers, "Each layer alone and all layers concatenated");
  c_ablate->add_flag("--size", a_size, "Subsampled training sets");
  c_ablate->add_flag("--random", a_random, "Perturbation suite on the random-control models");
  c_ablate->add_option("--fractions", fractions, "Comma-separated training fractions");
  c_ablate->add_option("--masking", a_masking, "Perturbation for --layers/--size");

  AnalyzeFlags analyze;
  auto* c_analyze = app.add_subcommand("analyze", "Effects, correlations, clustering and diagnostics");
  c_analyze->add_option("--in", analyze.in, "Run directory");
  c_analyze->add_option("--out", analyze.out, "Output directory (default --in)");
  c_analyze->add_option("--config", analyze.config, "Config supplying language families");
  c_analyze->add_flag("--effects", analyze.effects);
  c_analyze->add_flag("--cluster", analyze.cluster);
  c_analyze->add_flag("--layerweights", analyze.layerweights);
  c_analyze->add_option("--score-external", analyze.score_external, "CoNLL-U predictions of an external analyzer");
  c_analyze->add_option("--task", analyze.task, "Task directory for --score-external");
  c_analyze->add_option("--model", analyze.model, "Model for --cluster (default: mean over models)");
  c_analyze->add_option("--runs", analyze.runs);
  c_analyze->add_option("--k-min", analyze.k_min);
  c_analyze->add_option("--k-max", analyze.k_max);
  c_analyze->add_flag("--standardize", analyze.standardize);
  c_analyze->add_option("--seed", analyze.seed);
  c_analyze->add_option("--workers", analyze.workers);

  std::string r_in, r_out, r_config;
  auto* c_report = app.add_subcommand("report", "Render tables and figures");
  c_report->add_option("--in", r_in, "Run directory")->required();
  c_report->add_option("--out", r_out, "Output directory")->required();
  c_report->add_option("--config", r_config, "Config supplying language families");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_ingest) return cmd_ingest(ingest);
    if (*c_sample) return cmd_sample(sample);
    if (*c_plan) return cmd_plan(plan);
    if (*c_train) return run_suite_command(train, false);
    if (*c_perturb) return run_suite_command(perturb, true);
    if (*c_shapley) return cmd_shapley(shapley, mode);
    if (*c_sreport) return cmd_shapley_report(sreport);
    if (*c_ablate) return cmd_ablate(ablate, a_layers, a_size, a_random, fractions, a_masking);
    if (*c_analyze) return cmd_analyze(analyze);
    if (*c_report) return cmd_report(r_in, r_out, r_config);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
