// Acceptance checks. Each criterion prints one line:
//   PASS <name>: <details>
//   FAIL <name>: <details>
// Exit status: 0 when every selected criterion passes, 1 on any failure, and
// kUnattainable when the only failures are targets recorded as unattainable.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "morphoprobe/analysis.hpp"
#include "morphoprobe/clustering.hpp"
#include "morphoprobe/conllu.hpp"
#include "morphoprobe/embedding.hpp"
#include "morphoprobe/json_io.hpp"
#include "morphoprobe/probe.hpp"
#include "morphoprobe/sampler.hpp"
#include "morphoprobe/shapley.hpp"
#include "support/blobs.hpp"
#include "support/games.hpp"
#include "support/gradients.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

namespace fs = std::filesystem;
using namespace morphoprobe;

namespace {

constexpr int kUnattainable = 77;

enum class Outcome { pass, fail, unattainable };

struct Verdict {
  Outcome outcome = Outcome::pass;
  std::string details;
};

// Collects sub-checks and the measurements behind them.
class Checks {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok) failed_.push_back(what);
    notes_.push_back((ok ? "" : "!") + what);
  }
  void note(const std::string& what) { notes_.push_back(what); }
  void unattainable(bool ok, const std::string& what) {
    if (!ok) unattainable_.push_back(what);
    notes_.push_back((ok ? "" : "!") + what);
  }

  Verdict verdict() const {
    std::string d;
    for (const auto& n : notes_) d += (d.empty() ? "" : "; ") + n;
    if (!failed_.empty()) return {Outcome::fail, d};
    if (!unattainable_.empty()) return {Outcome::unattainable, d};
    return {Outcome::pass, d};
  }

 private:
  std::vector<std::string> notes_, failed_, unattainable_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- Shapley ---------------------------------------------------------------------

Verdict shapley_axioms() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = testkit::check_axioms(1000, 2024);
  const double t = seconds_since(t0);
  c.require(r.tables == 1000, "tables=" + std::to_string(r.tables));
  c.require(r.max_efficiency_error <= 1e-6, "efficiency err " + fmt(r.max_efficiency_error));
  c.require(r.max_symmetry_error <= 1e-9, "symmetry err " + fmt(r.max_symmetry_error));
  c.require(r.max_dummy_error <= 1e-9, "dummy err " + fmt(r.max_dummy_error));
  c.require(r.max_linearity_error <= 1e-9, "linearity err " + fmt(r.max_linearity_error));
  c.require(t < 10.0, "runtime " + fmt(t, 3) + " s");
  return c.verdict();
}

Verdict shapley_oracle() {
  Checks c;
  const auto r = testkit::check_oracle(100, 99);
  c.require(r.games == 4 + 16 + 256 + 100, "games=" + std::to_string(r.games));
  c.require(r.max_error <= 1e-9, "max err " + fmt(r.max_error));
  const auto phi = shapley_values(3, testkit::three_player_game);
  c.require(phi[0] == 80.0 && phi[1] == 12.5 && phi[2] == 7.5,
            "3-player phi=(" + fmt(phi[0], 17) + ", " + fmt(phi[1], 17) + ", " + fmt(phi[2], 17) + ")");
  return c.verdict();
}

Verdict normalization() {
  Checks c;
  double worst_empty = 0.0, worst_full = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto t = testkit::planted_table(seed).table;
    worst_empty = std::max(worst_empty, std::abs(coalition_value(t, Coalition::none())));
    worst_full = std::max(worst_full, std::abs(coalition_value(t, Coalition::full()) - 100.0));
  }
  const auto three = testkit::three_player_table();
  worst_empty = std::max(worst_empty, std::abs(coalition_value(three, Coalition::none())));
  worst_full = std::max(worst_full, std::abs(coalition_value(three, Coalition::full()) - 100.0));
  c.require(worst_empty == 0.0, "max |v(empty)| " + fmt(worst_empty));
  c.require(worst_full == 0.0, "max |v(N)-100| " + fmt(worst_full));
  return c.verdict();
}

// ---- gradients ---------------------------------------------------------------------

Verdict grad_checks() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = testkit::run_gradient_checks(10, 1);
  const double t = seconds_since(t0);
  std::set<std::string> models;
  double worst = 0.0;
  std::string worst_where;
  for (const auto& k : cases) {
    models.insert(k.model);
    if (!(k.result.max_relative_error <= worst)) {
      worst = k.result.max_relative_error;
      worst_where = k.model + "/" + k.result.worst_parameter;
    }
  }
  c.note(std::to_string(models.size()) + " models x 10 batches");
  c.require(!cases.empty() && cases.size() == models.size() * 10, "cases=" + std::to_string(cases.size()));
  c.require(worst < 1e-4, "max rel err " + fmt(worst) + " at " + worst_where);
  c.require(t < 60.0, "runtime " + fmt(t, 3) + " s");
  return c.verdict();
}

// ---- sampler -----------------------------------------------------------------------

Verdict sampler_contract() {
  Checks c;
  std::vector<Treebank> banks;
  for (const char* name : {"xx_alpha", "xx_beta"}) {
    banks.push_back(read_treebank_dir(testkit::data_dir() / "fixture" / name, "xx"));
  }
  const Corpus corpus = merge_treebanks(banks);
  SamplerConfig config = SamplerConfig{}.scaled(0.1);
  config.n_train = 100;
  config.n_dev = 20;
  config.n_test = 20;

  auto sample_all = [&] {
    std::vector<TaskDataset> out;
    for (const auto& cand : enumerate_candidates(corpus)) {
      auto outcome = sample_task(corpus, cand.spec, config);
      if (auto* d = std::get_if<TaskDataset>(&outcome)) out.push_back(std::move(*d));
    }
    return out;
  };
  const auto first = sample_all();
  std::size_t violations = 0;
  std::string example;
  for (const auto& d : first) {
    const auto v = validate_dataset(d, config);
    violations += v.size();
    if (!v.empty() && example.empty()) example = d.spec.name() + ": " + v.front();
  }
  c.require(!first.empty(), std::to_string(first.size()) + " tasks sampled at 100/20/20");
  c.require(violations == 0, std::to_string(violations) + " violations" + (example.empty() ? "" : " (" + example + ")"));
  c.require(sample_all() == first, "rerun identical");
  return c.verdict();
}

// ---- directional synthetic suite ------------------------------------------------------

struct Effects {
  double original = 0.0;
  std::map<std::string, double> effect;  // by perturbation name
};

Effects masking_effects(const ExperimentSpec& base, const TaskDataset& d, const EmbeddingBackend* backend) {
  Effects e;
  auto accuracy = [&](const char* masking) {
    ExperimentSpec s = base;
    s.masking = parse_masking(masking);
    return run_experiment(s, d, backend).mean_test;
  };
  e.original = accuracy("original");
  for (const char* m : {"targ", "l2", "r2"}) e.effect[m] = effect(e.original, accuracy(m));
  return e;
}

ExperimentSpec directional_spec(const std::string& task, const std::string& model) {
  ExperimentSpec s;
  s.task = task;
  s.model_id = model;
  s.n_seeds = 1;
  s.base_seed = 5;
  s.pooling = PoolingChoice::last;
  s.train.max_epochs = 50;
  return s;
}

Verdict directional_suite() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  testkit::SyntheticConfig sc;
  sc.n_train = 300;
  const auto suffix = testkit::suffix_language(sc);
  const auto marker = testkit::marker_language(sc);

  // (a) suffix language, character bi-LSTM and a context-free random encoder.
  RandomControlConfig rc;
  rc.model_id = "random-full";
  rc.seed = 11;
  const RandomControlBackend random_full(rc);
  for (const EmbeddingBackend* backend : {static_cast<const EmbeddingBackend*>(nullptr),
                                          static_cast<const EmbeddingBackend*>(&random_full)}) {
    const std::string model = backend ? backend->info().model_id : std::string(kCharLstmModel);
    const auto spec = directional_spec(suffix.spec.name(), model);
    const auto e = masking_effects(spec, suffix, backend);
    const auto run = run_coalitions(spec, suffix, backend, CoalitionMode::retrain);
    const double share = run.profile.summary().target / 100.0;
    const std::string tag = "a/" + model + " ";
    c.require(e.original >= 0.95, tag + "acc " + fmt(e.original));
    c.require(e.effect.at("targ") >= 0.40, tag + "targ " + fmt(e.effect.at("targ")));
    c.require(e.effect.at("l2") <= 0.05, tag + "l2 " + fmt(e.effect.at("l2")));
    c.require(e.effect.at("r2") <= 0.05, tag + "r2 " + fmt(e.effect.at("r2")));
    c.require(share >= 0.80, tag + "target share " + fmt(share));
  }

  // (b) left-marker language, character bi-LSTM.
  {
    const auto spec = directional_spec(marker.spec.name(), std::string(kCharLstmModel));
    const auto e = masking_effects(spec, marker, nullptr);
    const auto run = run_coalitions(spec, marker, nullptr, CoalitionMode::retrain);
    const auto s = run.profile.summary();
    const std::string tag = "b/chlstm ";
    c.note(tag + "acc " + fmt(e.original));
    c.require(run.profile.argmax_player() == 3, tag + "argmax " + player_name(run.profile.argmax_player()) +
                                                    " phi(-1)=" + fmt(run.profile.phi[3]));
    // The ratio alone cannot tell a small negative right side from a large one.
    c.require(s.left >= 2.0 * std::abs(s.right), tag + "left >= 2|right|");
    c.require(s.left_right_ratio >= 2.0, tag + "left/right " + fmt(s.left_right_ratio) + " (left " + fmt(s.left) +
                                             ", right " + fmt(s.right) + ")");
    c.require(e.effect.at("l2") >= 0.40, tag + "l2 " + fmt(e.effect.at("l2")));
    c.require(e.effect.at("r2") <= 0.05, tag + "r2 " + fmt(e.effect.at("r2")));
  }

  // Contextual random control on (b), reported only.
  {
    RandomControlConfig rl = rc;
    rl.model_id = "random-layers";
    rl.mode = RandomMode::random_layers;
    const RandomControlBackend random_layers(rl);
    const auto spec = directional_spec(marker.spec.name(), rl.model_id);
    const auto e = masking_effects(spec, marker, &random_layers);
    c.note("b/random-layers acc " + fmt(e.original) + " l2 " + fmt(e.effect.at("l2")) + " r2 " +
           fmt(e.effect.at("r2")));
  }

  const double t = seconds_since(t0);
  c.require(t <= 600.0, "runtime " + fmt(t, 4) + " s");
  return c.verdict();
}

// ---- statistics ----------------------------------------------------------------------

Verdict statistics() {
  Checks c;
  const double p = sign_test(172, 247);
  const double target = 6.26e-5;
  const double rel = std::abs(p - target) / target;
  c.note("sign_test(172,247)=" + fmt(p, 6) + " (exact two-sided)");
  c.note("one-sided 154/247 would give " + fmt(sign_test(154, 247) / 2, 6));
  c.unattainable(rel <= 0.02, "target 6.26e-5 rel err " + fmt(rel, 3));
  const std::vector<double> uniform(13, 1.0 / 13);
  const auto d = layer_weight_diagnostics(uniform);
  c.require(std::abs(d.entropy - std::log(13.0)) < 1e-12, "uniform entropy " + fmt(d.entropy, 10) + " nats = ln 13");
  c.require(std::abs(d.entropy_bits - 3.7) < 0.005, "= " + fmt(d.entropy_bits, 10) + " bits");
  return c.verdict();
}

// ---- clustering ----------------------------------------------------------------------

Verdict clustering() {
  Checks c;
  const auto f = testkit::two_blobs(6, 10, 50.0, 1.0, 4);
  ConsensusConfig config;
  config.k_min = config.k_max = 2;
  config.seed = 1;
  const auto s = testkit::blob_separation(consensus_cluster(f, config));
  c.require(s.min_within >= 95, "K=2 within " + std::to_string(s.min_within) + "/100");
  c.require(s.max_cross <= 5, "cross " + std::to_string(s.max_cross) + "/100");
  c.require(s.symmetric, "symmetric");
  c.require(s.full_diagonal, "diagonal 100");
  const auto d = testkit::blob_separation(consensus_cluster(f, ConsensusConfig{}));
  c.note("K~U{3..8}: within " + std::to_string(d.min_within) + " cross " + std::to_string(d.max_cross));
  return c.verdict();
}

// ---- partial credit --------------------------------------------------------------------

Verdict partial_credit() {
  Checks c;
  const std::vector<std::string> single = {"Nom"}, three = {"Nom", "Acc", "Gen"}, wrong = {"Acc", "Dat"};
  const double a = partial_credit_score(single, "Nom");
  const double b = partial_credit_score(three, "Nom");
  const double z = partial_credit_score(wrong, "Nom");
  c.require(a == 1.0, "single correct " + fmt(a));
  c.require(b == 1.0 / 3.0, "d=3 with gold " + fmt(b, 17));
  c.require(z == 0.0, "gold absent " + fmt(z));
  return c.verdict();
}

// ---- end to end ------------------------------------------------------------------------

constexpr std::uintmax_t kInlineGoldenLimit = 64 * 1024;

fs::path golden_dir() { return testkit::data_dir() / "e2e" / "golden"; }

std::string file_digest(const fs::path& p) { return to_hex(sha256(read_text_file(p))); }

// Every output file except the journal, whose records carry wall-clock times.
std::map<std::string, fs::path> pipeline_outputs(const fs::path& root) {
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (e.path().filename() == "journal.jsonl" || rel == "config.json" || rel == "pipeline.log") continue;
    out[rel] = e.path();
  }
  return out;
}

bool run_step(const fs::path& work, const std::string& args, std::string& failure) {
  const std::string cmd =
      "cd '" + work.string() + "' && '" + std::string(MORPHOPROBE_CLI) + "' " + args + " >>pipeline.log 2>&1";
  const int status = std::system(cmd.c_str());
  if (status != 0) {
    failure = "step failed: " + args.substr(0, args.find(' '));
    return false;
  }
  return true;
}

Verdict end_to_end() {
  Checks c;
  const fs::path work = fs::temp_directory_path() / ("morphoprobe-e2e-" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);
  fs::copy_file(testkit::data_dir() / "e2e" / "config.json", work / "config.json");
  const auto fixture = (testkit::data_dir() / "fixture").string();

  const std::vector<std::string> steps = {
      "ingest --lang xx --treebank '" + fixture + "/xx_alpha' --treebank '" + fixture + "/xx_beta' --out corpus",
      "sample --corpus corpus --lang xx --scale 0.1 --n-train 100 --n-dev 20 --n-test 20 --out tasks",
      "plan --task tasks/xx_NOUN_Case --suite perturb --model rand --seed 11 "
      "--out out/manifest_perturb.json",
      "plan --task tasks/xx_NOUN_Case --suite shapley --model rand --out out/manifest_shapley.json",
      "train --config config.json",
      "perturb --config config.json",
      "shapley --config config.json --task tasks/xx_NOUN_Case --model rand",
      "shapley --config config.json --task tasks/xx_VERB_Tense --model randctx",
      "shapley-report --in out/fixture --aggregate language",
      "analyze --in out/fixture --effects --out out/analysis",
      "analyze --in out/fixture --layerweights --out out/analysis",
      "report --in out/fixture --out out/report --config config.json",
  };
  const auto t0 = std::chrono::steady_clock::now();
  std::string failure;
  bool ok = true;
  for (const auto& s : steps) {
    if (!(ok = run_step(work, s, failure))) break;
  }
  const double t = seconds_since(t0);
  c.require(ok, ok ? std::to_string(steps.size()) + " steps" : failure + " (log " + (work / "pipeline.log").string() + ")");
  c.require(t < 300.0, "runtime " + fmt(t, 4) + " s");
  if (!ok) return c.verdict();

  const auto outputs = pipeline_outputs(work);
  const fs::path gold = golden_dir();
  if (const char* update = std::getenv("MORPHOPROBE_UPDATE_GOLDEN"); update && std::string(update) == "1") {
    fs::remove_all(gold);
    std::string sums;
    for (const auto& [rel, path] : outputs) {
      sums += file_digest(path) + "  " + rel + "\n";
      if (fs::file_size(path) <= kInlineGoldenLimit) {
        fs::create_directories((gold / "files" / rel).parent_path());
        fs::copy_file(path, gold / "files" / rel);
      }
    }
    write_text_file(gold / "SHA256SUMS", sums);
    c.note("golden files rewritten");
  }

  std::map<std::string, std::string> expected;
  {
    std::istringstream in(read_text_file(gold / "SHA256SUMS"));
    for (std::string digest, rel; in >> digest >> rel;) expected[rel] = digest;
  }
  std::size_t mismatched = 0, missing = 0, extra = 0;
  std::string first_bad;
  for (const auto& [rel, digest] : expected) {
    const auto it = outputs.find(rel);
    if (it == outputs.end()) {
      ++missing;
      if (first_bad.empty()) first_bad = "missing " + rel;
    } else if (file_digest(it->second) != digest) {
      ++mismatched;
      if (first_bad.empty()) first_bad = "differs " + rel;
    }
  }
  for (const auto& [rel, path] : outputs) {
    if (!expected.contains(rel)) {
      ++extra;
      if (first_bad.empty()) first_bad = "unexpected " + rel;
    }
  }
  c.require(!expected.empty() && mismatched + missing + extra == 0,
            std::to_string(expected.size()) + " golden files, " + std::to_string(mismatched) + " differ, " +
                std::to_string(missing) + " missing, " + std::to_string(extra) + " unexpected" +
                (first_bad.empty() ? "" : " (" + first_bad + ")"));
  const auto v = c.verdict();
  if (v.outcome == Outcome::pass) fs::remove_all(work);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"shapley_axioms", shapley_axioms},     {"shapley_oracle", shapley_oracle},
      {"normalization", normalization},       {"grad_checks", grad_checks},
      {"sampler_contract", sampler_contract}, {"directional_suite", directional_suite},
      {"statistics", statistics},             {"clustering", clustering},
      {"partial_credit", partial_credit},     {"end_to_end", end_to_end},
  };
  CLI::App app{"Acceptance checks"};
  std::vector<std::string> selected;
  app.add_option("--criterion", selected, "Criterion to run (repeatable; default all)");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) {
    for (const auto& [name, fn] : criteria) selected.push_back(name);
  }

  bool failed = false, unattainable = false;
  for (const auto& name : selected) {
    const auto it = std::find_if(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; });
    if (it == criteria.end()) {
      std::cerr << "unknown criterion: " << name << "\n";
      return 1;
    }
    Verdict v;
    try {
      v = it->second();
    } catch (const std::exception& e) {
      v = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    std::cout << (v.outcome == Outcome::pass ? "PASS " : "FAIL ") << name << ": " << v.details
              << (v.outcome == Outcome::unattainable ? " [unattainable target]" : "") << std::endl;
    failed = failed || v.outcome == Outcome::fail;
    unattainable = unattainable || v.outcome == Outcome::unattainable;
  }
  if (failed) return 1;
  return unattainable ? kUnattainable : 0;
}
