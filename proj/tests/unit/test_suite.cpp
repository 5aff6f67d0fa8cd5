#include <gtest/gtest.h>

#include <fstream>

#include "morphoprobe/errors.hpp"
#include "morphoprobe/suite.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace morphoprobe;

namespace {

Json minimal_config() {
  return Json{{"suite", "t"},
              {"tasks", {"suffixlang_NOUN_Case"}},
              {"perturbations", {"original", "targ"}},
              {"seed", 2},
              {"n_seeds", 1},
              {"train", {{"max_epochs", 15}, {"patience", 3}, {"batch_size", 32}}},
              {"models", {{{"model_id", "rand"}, {"kind", "random"}, {"n_layers", 2}, {"dim", 8}, {"seed", 1}}}}};
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST(Config, ParsesModelsAndDefaults) {
  const auto c = ExperimentConfig::from_json(minimal_config());
  EXPECT_EQ(c.suite, "t");
  EXPECT_EQ(c.n_seeds, 1);
  EXPECT_EQ(c.variant.name, "mlp50");
  ASSERT_EQ(c.models.size(), 1u);
  EXPECT_EQ(c.model("rand").kind, BackendKind::random_control);
  EXPECT_EQ(c.model("rand").random.dim, 8);
  EXPECT_THROW(c.model("nope"), Error);
  const auto spec = c.experiment("suffixlang_NOUN_Case", "rand", PerturbationSpec::targ());
  EXPECT_EQ(spec.n_seeds, 1);
  EXPECT_EQ(spec.base_seed, 2u);
  EXPECT_EQ(spec.train.max_epochs, 15);
  EXPECT_EQ(ExperimentConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(Config, RejectsDuplicatesAndMissingPaths) {
  Json j = minimal_config();
  j["models"].push_back(j["models"][0]);
  EXPECT_THROW(ExperimentConfig::from_json(j).validate(), ConfigError);

  Json k = minimal_config();
  k["models"] = {{{"model_id", "arch"}, {"kind", "archive"}, {"path", "/nonexistent/x.mpeb"}}};
  EXPECT_THROW(ExperimentConfig::from_json(k).validate(), Error);

  EXPECT_THROW(ExperimentConfig::load("/nonexistent/config.json"), DataError);
}

TEST(Config, RelativePathsResolveAgainstFile) {
  testkit::TempDir dir;
  Json j = minimal_config();
  j["task_dir"] = "tasks";
  std::ofstream(dir / "c.json") << j.dump();
  const auto c = ExperimentConfig::load(dir / "c.json");
  EXPECT_EQ(c.task_dir, dir / "tasks");
}

TEST(Backends, MakeFromDescriptor) {
  const auto c = ExperimentConfig::from_json(minimal_config());
  const auto backend = make_backend(c.model("rand"));
  ASSERT_NE(backend, nullptr);
  EXPECT_EQ(backend->info().n_layers, 2);
  ModelDescriptor ch;
  ch.model_id = std::string(kCharLstmModel);
  ch.kind = BackendKind::chlstm;
  EXPECT_EQ(make_backend(ch), nullptr);
  ModelDescriptor bad = c.model("rand");
  bad.n_layers = 5;
  EXPECT_THROW(make_backend(bad), IntegrityError);
}

TEST(Journal, RecordsAndReloads) {
  testkit::TempDir dir;
  {
    RunJournal j(dir / "journal.jsonl");
    j.started("h1");
    j.finished("h1", "a.json");
    j.started("h2");
    j.failed("h2", "boom");
    EXPECT_TRUE(j.done("h1"));
    EXPECT_FALSE(j.done("h2"));
    EXPECT_THROW(j.finished("h1", "b.json"), IntegrityError);
  }
  RunJournal again(dir / "journal.jsonl");
  EXPECT_TRUE(again.done("h1"));
  EXPECT_EQ(again.terminal("h1")->result, "a.json");
  EXPECT_EQ(again.terminal("h2")->status, JournalStatus::failed);
  EXPECT_EQ(again.terminal("h2")->error, "boom");
  // A failure can be retried and then succeed.
  again.started("h2");
  again.finished("h2", "c.json");
  EXPECT_TRUE(again.done("h2"));
  EXPECT_EQ(again.records().size(), 6u);
  EXPECT_FALSE(again.records().front().time.empty());
}

TEST(Journal, TornFinalLineIsIgnored) {
  testkit::TempDir dir;
  {
    RunJournal j(dir / "journal.jsonl");
    j.started("h1");
    j.finished("h1", "a.json");
  }
  std::ofstream(dir / "journal.jsonl", std::ios::app) << R"({"spec_hash":"h2","sta)";
  RunJournal j(dir / "journal.jsonl");
  EXPECT_TRUE(j.done("h1"));
  EXPECT_FALSE(j.terminal("h2").has_value());
  j.started("h3");
  RunJournal reread(dir / "journal.jsonl");
  EXPECT_EQ(reread.records().size(), 3u);
}

TEST(Journal, CorruptMiddleLineIsIntegrityError) {
  testkit::TempDir dir;
  std::ofstream(dir / "journal.jsonl") << "not json\n"
                                       << R"({"spec_hash":"h1","status":"started","time":"x"})" << "\n";
  EXPECT_THROW(RunJournal(dir / "journal.jsonl"), IntegrityError);
}

TEST(Journal, DuplicateTerminalRecordIsIntegrityError) {
  testkit::TempDir dir;
  std::ofstream(dir / "journal.jsonl") << R"({"spec_hash":"h","status":"done","result":"a","time":"x"})" << "\n"
                                       << R"({"spec_hash":"h","status":"done","result":"b","time":"x"})" << "\n";
  EXPECT_THROW(RunJournal(dir / "journal.jsonl"), IntegrityError);
}

TEST(Suite, ResumeSkipsFinishedExperiments) {
  testkit::TempDir dir;
  testkit::SyntheticConfig sc;
  sc.n_train = 80;
  sc.n_dev = 20;
  sc.n_test = 20;
  const std::vector<TaskDataset> tasks = {testkit::suffix_language(sc)};
  const auto config = ExperimentConfig::from_json(minimal_config());
  const std::vector<std::string> maskings = {"original", "targ"};

  SuiteResult first;
  {
    RunJournal journal(dir / "journal.jsonl");
    first = run_suite(tasks, maskings, config, dir / "out", journal);
  }
  EXPECT_EQ(first.trained, 2u);
  EXPECT_TRUE(first.failures.empty());
  ASSERT_EQ(first.results.size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "rand" / "suffixlang_NOUN_Case" / "targ.json"));
  EXPECT_EQ(result_path(dir / "out", first.results[1].spec), dir / "out" / "rand" / "suffixlang_NOUN_Case" / "targ.json");
  const auto lines = line_count(dir / "journal.jsonl");

  RunJournal journal(dir / "journal.jsonl");
  const auto second = run_suite(tasks, maskings, config, dir / "out", journal);
  EXPECT_EQ(second.trained, 0u);
  EXPECT_EQ(line_count(dir / "journal.jsonl"), lines);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(second.results[i].to_json(), first.results[i].to_json());

  // A deleted result file forces a rerun of just that experiment.
  std::filesystem::remove(dir / "out" / "rand" / "suffixlang_NOUN_Case" / "targ.json");
  const auto third = run_suite(tasks, maskings, config, dir / "out", journal);
  EXPECT_EQ(third.trained, 1u);
}

TEST(Suite, FailuresAreRecordedNotThrown) {
  testkit::TempDir dir;
  testkit::SyntheticConfig sc;
  sc.n_train = 40;
  sc.n_dev = 10;
  sc.n_test = 10;
  Json j = minimal_config();
  j["models"] = {{{"model_id", "arch"}, {"kind", "archive"}, {"path", (dir / "empty.mpeb").string()}}};
  {
    ArchiveWriter w(dir / "empty.mpeb", {"arch", 1, 4, ""});
    w.finalize();
  }
  const auto config = ExperimentConfig::from_json(j);
  RunJournal journal(dir / "journal.jsonl");
  const auto r = run_suite({testkit::suffix_language(sc)}, {"original"}, config, dir / "out", journal);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].model_id, "arch");
  EXPECT_FALSE(r.failures[0].error.empty());
  EXPECT_EQ(journal.records().back().status, JournalStatus::failed);
}

TEST(Effects, RelativeToOriginal) {
  auto make = [](const std::string& model, const char* masking, double acc) {
    ExperimentResult r;
    r.spec.task = "t_NOUN_Case";
    r.spec.model_id = model;
    r.spec.masking = parse_masking(masking);
    SeedResult s;
    s.test_accuracy = acc;
    r.seeds.push_back(s);
    r.aggregate();
    return r;
  };
  const std::vector<ExperimentResult> rs = {make("m", "original", 0.8), make("m", "targ", 0.4),
                                            make("m", "l2", 0.8), make("z", "targ", 0.5)};
  const auto e = effects_from_results(rs);
  ASSERT_EQ(e.size(), 2u);
  for (const auto& rec : e) {
    EXPECT_EQ(rec.model_id, "m");
    EXPECT_DOUBLE_EQ(rec.effect, rec.perturbation == "targ" ? 0.5 : 0.0);
  }
}
