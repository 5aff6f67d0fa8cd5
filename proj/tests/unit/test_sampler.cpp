#include <gtest/gtest.h>

#include <set>

#include "morphoprobe/errors.hpp"
#include "morphoprobe/json_io.hpp"
#include "morphoprobe/sampler.hpp"
#include "support/temp_dir.hpp"

using namespace morphoprobe;

namespace {

TokenRecord token(int index, std::string form, std::string upos, FeatureMap feats = {}) {
  TokenRecord t;
  t.index = index;
  t.form = std::move(form);
  t.lemma = t.form;
  t.upos = std::move(upos);
  t.feats = std::move(feats);
  return t;
}

// One four-token sentence per eligible target; every target form is unique.
// counts[value] = {train, dev, test}.
Corpus make_corpus(const std::map<std::string, std::array<std::size_t, 3>>& counts, std::size_t filler = 0) {
  Corpus c;
  c.language = "zz";
  std::size_t n = 0;
  for (const auto& [value, per_split] : counts) {
    for (Split s : kAllSplits) {
      for (std::size_t i = 0; i < per_split[static_cast<std::size_t>(s)]; ++i) {
        SentenceRecord r;
        r.language = "zz";
        r.treebank_id = "tb";
        r.split = s;
        r.sent_id = std::to_string(n);
        r.tokens = {token(1, "the", "DET"), token(2, "n" + std::to_string(n) + value, "NOUN", {{"Number", value}}),
                    token(3, "goes", "VERB", {{"Tense", "Pres"}}), token(4, ".", "PUNCT")};
        c.sentences.push_back(r);
        ++c.counts[s];
        ++n;
      }
    }
  }
  for (std::size_t i = 0; i < filler; ++i) {
    SentenceRecord r;
    r.language = "zz";
    r.split = Split::train;
    r.sent_id = "f" + std::to_string(i);
    r.tokens = {token(1, "a", "DET"), token(2, "b", "ADV"), token(3, ".", "PUNCT")};
    c.sentences.push_back(r);
    ++c.counts.train;
  }
  return c;
}

}  // namespace

TEST(TaskSpec, NameRoundTripsWithUnderscoresInLanguage) {
  const TaskSpec s{"zh_classical", "NOUN", "Case"};
  EXPECT_EQ(s.name(), "zh_classical_NOUN_Case");
  EXPECT_EQ(TaskSpec::parse(s.name()), s);
  EXPECT_THROW(TaskSpec::parse("nounderscore"), Error);
}

TEST(Candidates, OneCandidatePerAttestedCombination) {
  const Corpus c = make_corpus({{"Sing", {5, 1, 1}}, {"Plur", {5, 1, 1}}});
  const auto cands = enumerate_candidates(c);
  std::set<std::string> names;
  for (const auto& k : cands) names.insert(k.spec.upos + "_" + k.spec.feature);
  EXPECT_EQ(names, (std::set<std::string>{"NOUN_Number", "VERB_Tense"}));
  for (const auto& k : cands) {
    if (k.spec.upos == "NOUN") {
      EXPECT_EQ(k.class_counts.at("Sing"), 7u);
      EXPECT_EQ(k.class_counts.at("Plur"), 7u);
    }
  }
}

TEST(Candidates, AbsentCombinationIsNotProduced) {
  const Corpus c = make_corpus({{"Sing", {2, 1, 1}}});
  for (const auto& k : enumerate_candidates(c)) EXPECT_FALSE(k.spec.upos == "VERB" && k.spec.feature == "Number");
  for (const auto& k : enumerate_candidates(c, {"NOUN"}, {"Number"})) EXPECT_EQ(k.spec.upos, "NOUN");
}

TEST(SampleTask, BalancedTwoClassesGivesExactCounts) {
  const Corpus c = make_corpus({{"Sing", {3000, 300, 300}}, {"Plur", {3000, 300, 300}}});
  SamplerConfig cfg;
  const SampleOutcome out = sample_task(c, {"zz", "NOUN", "Number"}, cfg);
  ASSERT_TRUE(std::holds_alternative<TaskDataset>(out));
  const auto& d = std::get<TaskDataset>(out);
  EXPECT_EQ(d.train.size(), 2000u);
  EXPECT_EQ(d.dev.size(), 200u);
  EXPECT_EQ(d.test.size(), 200u);
  EXPECT_EQ(d.labels, (std::vector<std::string>{"Plur", "Sing"}));
  EXPECT_TRUE(validate_dataset(d, cfg).empty());
}

TEST(SampleTask, RareClassIsDiscardedThenTooFewClasses) {
  SamplerConfig cfg = SamplerConfig{}.scaled(0.01);  // 20/2/2, min_class_count 2, min_sentences 5
  cfg.min_class_count = 200;
  const Corpus c = make_corpus({{"Sing", {300, 30, 30}}, {"Plur", {120, 15, 15}}});
  const SampleOutcome out = sample_task(c, {"zz", "NOUN", "Number"}, cfg);
  ASSERT_TRUE(std::holds_alternative<Rejection>(out));
  EXPECT_EQ(std::get<Rejection>(out).reason, RejectionReason::too_few_classes);

  const Corpus three = make_corpus({{"Sing", {300, 30, 30}}, {"Plur", {300, 30, 30}}, {"Dual", {120, 15, 15}}});
  const SampleOutcome ok = sample_task(three, {"zz", "NOUN", "Number"}, cfg);
  ASSERT_TRUE(std::holds_alternative<TaskDataset>(ok));
  EXPECT_EQ(std::get<TaskDataset>(ok).labels, (std::vector<std::string>{"Plur", "Sing"}));
}

TEST(SampleTask, SmallCorpusIsRejected) {
  const Corpus c = make_corpus({{"Sing", {100, 10, 10}}, {"Plur", {100, 10, 10}}});
  const SampleOutcome out = sample_task(c, {"zz", "NOUN", "Number"}, SamplerConfig{});
  ASSERT_TRUE(std::holds_alternative<Rejection>(out));
  EXPECT_EQ(std::get<Rejection>(out).reason, RejectionReason::insufficient_sentences);
}

TEST(SampleTask, UnreachableCountsAreRejected) {
  SamplerConfig cfg = SamplerConfig{}.scaled(0.1);  // 200/20/20
  cfg.min_class_count = 1;
  const Corpus c = make_corpus({{"Sing", {150, 30, 30}}, {"Plur", {20, 30, 30}}}, 400);
  const SampleOutcome out = sample_task(c, {"zz", "NOUN", "Number"}, cfg);
  ASSERT_TRUE(std::holds_alternative<Rejection>(out));
  EXPECT_EQ(std::get<Rejection>(out).reason, RejectionReason::counts_unattainable);
}

TEST(SampleTask, SkewedAvailabilityIsDownsampledToTheCap) {
  SamplerConfig cfg = SamplerConfig{}.scaled(0.1);
  cfg.min_class_count = 1;
  const Corpus c = make_corpus({{"Sing", {1000, 100, 100}}, {"Plur", {60, 10, 10}}});
  const auto out = sample_task(c, {"zz", "NOUN", "Number"}, cfg);
  ASSERT_TRUE(std::holds_alternative<TaskDataset>(out));
  const auto& d = std::get<TaskDataset>(out);
  const auto counts = class_counts(d.train, d.labels);
  EXPECT_EQ(counts[0] + counts[1], 200u);
  EXPECT_LE(static_cast<double>(std::max(counts[0], counts[1])), 3.0 * static_cast<double>(std::min(counts[0], counts[1])));
  EXPECT_TRUE(validate_dataset(d, cfg).empty());
}

TEST(SampleTask, DeterministicAndSplitProvenance) {
  const Corpus c = make_corpus({{"Sing", {400, 60, 60}}, {"Plur", {400, 60, 60}}});
  SamplerConfig cfg = SamplerConfig{}.scaled(0.1);
  cfg.seed = 42;
  const auto a = std::get<TaskDataset>(sample_task(c, {"zz", "NOUN", "Number"}, cfg));
  const auto b = std::get<TaskDataset>(sample_task(c, {"zz", "NOUN", "Number"}, cfg));
  EXPECT_EQ(a, b);
  cfg.seed = 43;
  const auto other = std::get<TaskDataset>(sample_task(c, {"zz", "NOUN", "Number"}, cfg));
  EXPECT_NE(a.train, other.train);

  std::map<std::string, Split> origin;
  for (const auto& s : c.sentences) origin[s.tokens[1].form] = s.split;
  for (Split s : kAllSplits) {
    for (const auto& inst : a.split(s)) EXPECT_EQ(origin.at(inst.target()), s);
  }
}

TEST(SampleTask, LengthWindowIsRespected) {
  Corpus c = make_corpus({{"Sing", {300, 30, 30}}, {"Plur", {300, 30, 30}}});
  // Pad every tenth sentence beyond the window.
  for (std::size_t i = 0; i < c.sentences.size(); i += 10) {
    auto& toks = c.sentences[i].tokens;
    while (toks.size() <= 40) toks.push_back(token(static_cast<int>(toks.size()) + 1, "x", "X"));
  }
  SamplerConfig cfg = SamplerConfig{}.scaled(0.1);
  cfg.min_class_count = 1;
  const auto d = std::get<TaskDataset>(sample_task(c, {"zz", "NOUN", "Number"}, cfg));
  for (Split s : kAllSplits) {
    for (const auto& inst : d.split(s)) {
      EXPECT_GE(inst.words.size(), 3u);
      EXPECT_LE(inst.words.size(), 40u);
    }
  }
}

TEST(Validate, SharedTargetFormIsNamed) {
  const Corpus c = make_corpus({{"Sing", {400, 60, 60}}, {"Plur", {400, 60, 60}}});
  SamplerConfig cfg = SamplerConfig{}.scaled(0.1);
  auto d = std::get<TaskDataset>(sample_task(c, {"zz", "NOUN", "Number"}, cfg));
  ASSERT_TRUE(validate_dataset(d, cfg).empty());
  const std::string form = d.test[0].target();
  d.train[0].words[static_cast<std::size_t>(d.train[0].target_index)] = form;
  const auto v = validate_dataset(d, cfg);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find(form), std::string::npos);
}

TEST(Validate, FourToOneImbalanceIsFlagged) {
  TaskDataset d;
  d.spec = {"zz", "NOUN", "Number"};
  d.labels = {"Plur", "Sing"};
  SamplerConfig cfg;
  cfg.n_train = 5;
  cfg.n_dev = 2;
  cfg.n_test = 2;
  const auto inst = [](const std::string& form, const std::string& label) {
    return ProbingInstance{{"a", form, "c"}, 1, label};
  };
  for (int i = 0; i < 4; ++i) d.train.push_back(inst("s" + std::to_string(i), "Sing"));
  d.train.push_back(inst("p0", "Plur"));
  d.dev = {inst("d0", "Sing"), inst("d1", "Plur")};
  d.test = {inst("t0", "Sing"), inst("t1", "Plur")};
  const auto v = validate_dataset(d, cfg);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("imbalance"), std::string::npos);
}

TEST(Quotas, LargestRemainderThenCap) {
  EXPECT_EQ(allocate_quotas({50, 50}, 10, 3.0), (std::vector<std::size_t>{5, 5}));
  // Proportional 9/1 exceeds 3:1; slots move to the small class.
  EXPECT_EQ(allocate_quotas({90, 10}, 8, 3.0), (std::vector<std::size_t>{6, 2}));
  EXPECT_TRUE(allocate_quotas({100, 1}, 10, 3.0).empty());
  EXPECT_TRUE(allocate_quotas({3, 3}, 10, 3.0).empty());
}

TEST(Subsample, StratifiedAndCapped) {
  const Corpus c = make_corpus({{"Sing", {400, 60, 60}}, {"Plur", {400, 60, 60}}});
  const auto d = std::get<TaskDataset>(sample_task(c, {"zz", "NOUN", "Number"}, SamplerConfig{}.scaled(0.1)));
  const auto half = subsample_train(d, 0.5, 1, 3.0);
  EXPECT_EQ(half.train.size(), 100u);
  EXPECT_EQ(half.dev, d.dev);
  const auto counts = class_counts(half.train, half.labels);
  EXPECT_EQ(counts[0], 50u);
  EXPECT_THROW(subsample_train(d, 0.001, 1, 3.0), DataError);
}

TEST(TaskDir, RoundTripAndJsonLinesFormat) {
  const Corpus c = make_corpus({{"Sing", {400, 60, 60}}, {"Plur", {400, 60, 60}}});
  const SamplerConfig cfg = SamplerConfig{}.scaled(0.1);
  const auto d = std::get<TaskDataset>(sample_task(c, {"zz", "NOUN", "Number"}, cfg));
  testkit::TempDir tmp;
  write_task_dir(tmp.path() / "t", d, cfg);
  EXPECT_EQ(read_task_dir(tmp.path() / "t"), d);
  const std::string first_line = read_text_file(tmp.path() / "t" / "train" / "data.jsonl").substr(0, 200);
  const Json j = Json::parse(first_line.substr(0, first_line.find('\n')));
  EXPECT_TRUE(j.contains("words"));
  EXPECT_TRUE(j.contains("target"));
  EXPECT_TRUE(j.contains("label"));
  const Json manifest = read_json_file(tmp.path() / "t" / "manifest.json");
  EXPECT_EQ(manifest.at("labels"), Json({"Plur", "Sing"}));
}
