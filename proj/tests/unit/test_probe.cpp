#include <gtest/gtest.h>

#include "morphoprobe/errors.hpp"
#include "morphoprobe/probe.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace morphoprobe;

namespace {

TaskDataset suffix_small() {
  testkit::SyntheticConfig c;
  c.n_train = 120;
  c.n_dev = 40;
  c.n_test = 40;
  return testkit::suffix_language(c);
}

RandomControlBackend random_backend() {
  RandomControlConfig c;
  c.model_id = "random";
  c.n_layers = 3;
  c.dim = 16;
  c.seed = 5;
  return RandomControlBackend(c);
}

ExperimentSpec quick_spec() {
  ExperimentSpec s;
  s.task = "suffixlang_NOUN_Case";
  s.model_id = "random";
  s.n_seeds = 2;
  s.base_seed = 3;
  s.train.max_epochs = 30;
  s.train.patience = 5;
  s.train.batch_size = 32;
  s.train.adam.lr = 1e-2;
  return s;
}

}  // namespace

TEST(ExperimentSpec, JsonRoundTripAndHash) {
  auto s = quick_spec();
  s.masking = PerturbationSpec::both(2);
  s.layers = nn::LayerSelection::parse("layer:2");
  s.pooling = PoolingChoice::first;
  const auto back = ExperimentSpec::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(back.hash(), s.hash());
  EXPECT_EQ(s.hash().size(), 64u);
  auto t = s;
  t.base_seed = 4;
  EXPECT_NE(t.hash(), s.hash());
  EXPECT_EQ(parse_pooling_choice("auto"), PoolingChoice::automatic);
  EXPECT_THROW(parse_pooling_choice("mean"), ConfigError);
}

TEST(ExperimentResult, AggregatesSkipDivergedSeeds) {
  ExperimentResult r;
  for (double acc : {0.8, 0.9, 0.1}) {
    SeedResult s;
    s.test_accuracy = acc;
    s.dev_accuracy = acc;
    s.epochs = 10;
    s.layer_weights = {0.25, 0.75};
    r.seeds.push_back(s);
  }
  r.seeds[2].diverged = true;
  r.aggregate();
  EXPECT_EQ(r.valid_seeds(), 2u);
  EXPECT_DOUBLE_EQ(r.mean_test, 0.85);
  EXPECT_NEAR(r.std_test, 0.05, 1e-12);  // population, not sample
  EXPECT_EQ(r.mean_layer_weights, std::vector<double>({0.25, 0.75}));

  for (auto& s : r.seeds) s.diverged = true;
  r.aggregate();
  EXPECT_TRUE(std::isnan(r.mean_test));
}

TEST(RunExperiment, DeterministicAndLearnsSuffix) {
  const auto d = suffix_small();
  const auto backend = random_backend();
  const auto spec = quick_spec();
  const auto a = run_experiment(spec, d, &backend);
  const auto b = run_experiment(spec, d, &backend, {.workers = 2});
  EXPECT_EQ(a.to_json(), b.to_json());
  ASSERT_EQ(a.seeds.size(), 2u);
  EXPECT_NE(a.seeds[0].seed, a.seeds[1].seed);
  // The label lives in the final wordpiece, so auto pooling settles on "last".
  for (const auto& s : a.seeds) EXPECT_EQ(s.pooling, Pooling::last);
  EXPECT_GE(a.mean_test, 0.95);
  ASSERT_EQ(a.mean_layer_weights.size(), 3u);
  EXPECT_EQ(ExperimentResult::from_json(a.to_json()).to_json(), a.to_json());
}

TEST(RunExperiment, TargMaskRemovesSuffixSignal) {
  const auto d = suffix_small();
  const auto backend = random_backend();
  auto spec = quick_spec();
  spec.masking = PerturbationSpec::targ();
  const auto r = run_experiment(spec, d, &backend);
  // Only the majority class (40%) is recoverable.
  EXPECT_LE(r.mean_test, 0.5);
}

TEST(RunExperiment, MissingArchiveRecordsAreReported) {
  testkit::TempDir dir;
  {
    ArchiveWriter w(dir / "empty.mpeb", {"random", 3, 16, "toy"});
    w.finalize();
  }
  ArchiveBackend backend(dir / "empty.mpeb");
  try {
    run_experiment(quick_spec(), suffix_small(), &backend);
    FAIL() << "expected MissingEmbeddingsError";
  } catch (const MissingEmbeddingsError& e) {
    EXPECT_EQ(e.ids().empty(), false);
    EXPECT_EQ(e.ids().front().size(), 64u);
  }
}

TEST(RunExperiment, BackendRequiredForEmbeddingModels) {
  EXPECT_THROW(run_experiment(quick_spec(), suffix_small(), nullptr), Error);
}

TEST(PerturbTask, SharesPermutationSeedsAcrossCalls) {
  const auto d = suffix_small();
  const auto a = perturb_task(d, PerturbationSpec::permute(), 9);
  const auto b = perturb_task(d, PerturbationSpec::permute(), 9);
  EXPECT_EQ(a.splits[0], b.splits[0]);
  EXPECT_EQ(a.splits[0].size(), d.train.size());
  EXPECT_EQ(a.labels[2].size(), d.test.size());
}

TEST(CharData, VocabularyFromTrainingSplit) {
  const auto d = suffix_small();
  const auto data = char_task_data(perturb_task(d, PerturbationSpec::targ(), 0));
  EXPECT_EQ(data.vocab.id(kCharMask), 1);
  const auto& train = data.splits[0];
  ASSERT_EQ(train.ids.size(), d.train.size());
  // Target characters are all masked, from its first to its last character.
  for (int p = train.positions[0][0]; p <= train.positions[1][0]; ++p) {
    EXPECT_EQ(train.ids[0][static_cast<std::size_t>(p)], 1);
  }
}

TEST(Coalitions, IdenticalMaskingsShareExperiments) {
  const auto d = suffix_small();
  const auto backend = random_backend();
  auto spec = quick_spec();
  spec.n_seeds = 1;
  spec.pooling = PoolingChoice::last;
  const auto run = run_coalitions(spec, d, &backend, CoalitionMode::fixed_probe);
  // Five-word sentences with the target in the middle: only players -2..2 matter.
  EXPECT_EQ(run.distinct_experiments, 32u);
  EXPECT_DOUBLE_EQ(coalition_value(run.table, Coalition::none()), 0.0);
  EXPECT_DOUBLE_EQ(coalition_value(run.table, Coalition::full()), 100.0);
  // Far players own no words, so adding them changes nothing.
  for (std::uint32_t m = 0; m <= kFullCoalition; ++m) {
    const std::uint32_t far = (1u << 0) | (1u << 1) | (1u << 7) | (1u << 8);
    EXPECT_DOUBLE_EQ(run.table.at(Coalition{m}), run.table.at(Coalition{m & ~far}));
  }
  EXPECT_GE(run.profile.phi[4], 80.0);
}
