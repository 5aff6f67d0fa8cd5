#include "morphoprobe/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "morphoprobe/errors.hpp"
#include "morphoprobe/json_io.hpp"
#include "morphoprobe/rng.hpp"

namespace morphoprobe {

namespace {

struct Occurrence {
  std::size_t sentence;
  int token;  // 0-based
};

Json config_to_json(const SamplerConfig& c) {
  return Json{{"n_train", c.n_train},
              {"n_dev", c.n_dev},
              {"n_test", c.n_test},
              {"max_imbalance", c.max_imbalance},
              {"min_class_count", c.min_class_count},
              {"min_sentences", c.min_sentences},
              {"min_len", c.min_len},
              {"max_len", c.max_len},
              {"seed", c.seed}};
}

}  // namespace

std::vector<std::size_t> allocate_quotas(const std::vector<std::size_t>& available, std::size_t n,
                                         double max_imbalance) {
  const std::size_t total = std::accumulate(available.begin(), available.end(), std::size_t{0});
  if (total < n || available.empty()) return {};
  const std::size_t k = available.size();
  std::vector<std::size_t> q(k);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double exact =
        static_cast<double>(n) * static_cast<double>(available[c]) / static_cast<double>(total);
    q[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += q[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i) {
    const auto c = remainders[i % k].second;
    if (q[c] < available[c]) {
      ++q[c];
      ++assigned;
    }
  }
  const auto ratio_ok = [&] {
    const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
    return *lo > 0 && static_cast<double>(*hi) <= max_imbalance * static_cast<double>(*lo);
  };
  while (!ratio_ok()) {
    const auto hi = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
    std::size_t receiver = k;
    for (std::size_t c = 0; c < k; ++c) {
      if (q[c] < available[c] && (receiver == k || q[c] < q[receiver])) receiver = c;
    }
    if (receiver == k || q[receiver] + 1 >= q[hi]) return {};
    --q[hi];
    ++q[receiver];
  }
  return q;
}

std::string TaskSpec::name() const { return language + "_" + upos + "_" + feature; }

std::size_t SamplerConfig::count(Split s) const noexcept {
  return s == Split::train ? n_train : (s == Split::dev ? n_dev : n_test);
}

TaskSpec TaskSpec::parse(std::string_view name) {
  const auto second = name.rfind('_');
  const auto first = second == std::string_view::npos || second == 0 ? std::string_view::npos
                                                                     : name.rfind('_', second - 1);
  if (first == std::string_view::npos || first == 0 || second + 1 == name.size() || second == first + 1) {
    throw DataError("task name '" + std::string(name) + "' is not <language>_<POS>_<feature>");
  }
  return {std::string(name.substr(0, first)), std::string(name.substr(first + 1, second - first - 1)),
          std::string(name.substr(second + 1))};
}

SamplerConfig SamplerConfig::scaled(double factor) const {
  if (!(factor > 0.0)) throw ConfigError("scale must be positive");
  const auto scale = [factor](std::size_t v) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(factor * static_cast<double>(v))));
  };
  SamplerConfig out = *this;
  out.n_train = scale(n_train);
  out.n_dev = scale(n_dev);
  out.n_test = scale(n_test);
  out.min_class_count = scale(min_class_count);
  out.min_sentences = scale(min_sentences);
  return out;
}

void SamplerConfig::validate() const {
  if (n_train == 0 || n_dev == 0 || n_test == 0) throw ConfigError("split sizes must be positive");
  if (!(max_imbalance >= 1.0)) throw ConfigError("max_imbalance must be >= 1");
  if (min_class_count == 0 || min_sentences == 0) throw ConfigError("thresholds must be positive");
  if (min_len == 0 || min_len > max_len) throw ConfigError("invalid sentence length bounds");
}

std::vector<ProbingInstance>& TaskDataset::split(Split s) noexcept {
  return s == Split::train ? train : (s == Split::dev ? dev : test);
}

const std::vector<ProbingInstance>& TaskDataset::split(Split s) const noexcept {
  return s == Split::train ? train : (s == Split::dev ? dev : test);
}

int TaskDataset::label_index(std::string_view label) const {
  const auto it = std::lower_bound(labels.begin(), labels.end(), label);
  if (it == labels.end() || *it != label) {
    throw DataError("label '" + std::string(label) + "' not in label set of " + spec.name());
  }
  return static_cast<int>(it - labels.begin());
}

std::vector<TaskCandidate> enumerate_candidates(const Corpus& corpus,
                                                const std::vector<std::string>& pos_set,
                                                const std::vector<std::string>& feature_set) {
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::size_t>> counts;
  const std::set<std::string> pos(pos_set.begin(), pos_set.end());
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) {
      if (!pos.contains(t.upos)) continue;
      for (const auto& f : feature_set) {
        if (auto it = t.feats.find(f); it != t.feats.end()) ++counts[{t.upos, f}][it->second];
      }
    }
  }
  std::vector<TaskCandidate> out;
  for (auto& [key, values] : counts) {
    out.push_back({TaskSpec{corpus.language, key.first, key.second}, std::move(values)});
  }
  return out;
}

std::string_view to_string(RejectionReason reason) noexcept {
  switch (reason) {
    case RejectionReason::insufficient_sentences: return "insufficient_sentences";
    case RejectionReason::too_few_classes: return "too_few_classes";
    case RejectionReason::counts_unattainable: return "counts_unattainable";
  }
  return "counts_unattainable";
}

SampleOutcome sample_task(const Corpus& corpus, const TaskSpec& spec, const SamplerConfig& config) {
  config.validate();
  if (corpus.sentences.size() < config.min_sentences) {
    return Rejection{RejectionReason::insufficient_sentences,
                     std::to_string(corpus.sentences.size()) + " sentences, need " +
                         std::to_string(config.min_sentences)};
  }

  std::map<std::string, std::size_t> global;
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) {
      if (t.upos != spec.upos) continue;
      if (auto it = t.feats.find(spec.feature); it != t.feats.end()) ++global[it->second];
    }
  }

  // Eligible occurrences per split and class, in corpus order.
  std::map<std::string, std::array<std::vector<Occurrence>, 3>> eligible;
  for (std::size_t si = 0; si < corpus.sentences.size(); ++si) {
    const auto& s = corpus.sentences[si];
    const auto len = s.tokens.size();
    if (len < config.min_len || len > config.max_len) continue;
    for (std::size_t ti = 0; ti < len; ++ti) {
      const auto& t = s.tokens[ti];
      if (t.upos != spec.upos) continue;
      auto it = t.feats.find(spec.feature);
      if (it == t.feats.end()) continue;
      eligible[it->second][static_cast<std::size_t>(s.split)].push_back(
          {si, static_cast<int>(ti)});
    }
  }

  std::vector<std::string> labels;
  for (const auto& [value, n] : global) {
    if (n < config.min_class_count) continue;
    const auto it = eligible.find(value);
    if (it == eligible.end()) continue;
    const auto& per_split = it->second;
    if (std::any_of(per_split.begin(), per_split.end(), [](const auto& v) { return v.empty(); })) {
      continue;
    }
    labels.push_back(value);
  }
  if (labels.size() < 2) {
    return Rejection{RejectionReason::too_few_classes,
                     std::to_string(labels.size()) + " class(es) with >= " +
                         std::to_string(config.min_class_count) +
                         " occurrences attested in every split"};
  }
  const std::set<std::string> label_set(labels.begin(), labels.end());

  TaskDataset dataset;
  dataset.spec = spec;
  dataset.labels = labels;
  std::unordered_set<std::string> claimed;

  for (Split split : {Split::test, Split::dev, Split::train}) {
    Xoshiro256 rng(derive_seed(config.seed, static_cast<std::uint64_t>(split)));
    // One target per sentence, drawn uniformly among unclaimed matching tokens.
    std::map<std::size_t, std::vector<int>> by_sentence;
    for (const auto& label : labels) {
      for (const auto& occ : eligible[label][static_cast<std::size_t>(split)]) {
        const auto& form = corpus.sentences[occ.sentence].tokens[occ.token].form;
        if (!claimed.contains(form)) by_sentence[occ.sentence].push_back(occ.token);
      }
    }
    std::vector<std::vector<Occurrence>> pool(labels.size());
    for (auto& [si, tokens] : by_sentence) {
      std::sort(tokens.begin(), tokens.end());
      const int token = tokens[rng.below(tokens.size())];
      const auto& value = corpus.sentences[si].tokens[token].feats.at(spec.feature);
      const auto c = static_cast<std::size_t>(
          std::lower_bound(labels.begin(), labels.end(), value) - labels.begin());
      pool[c].push_back({si, token});
    }
    std::vector<std::size_t> available;
    for (const auto& p : pool) available.push_back(p.size());
    const auto quotas = allocate_quotas(available, config.count(split), config.max_imbalance);
    if (quotas.empty()) {
      std::ostringstream msg;
      msg << to_string(split) << ": cannot draw " << config.count(split)
          << " instances within imbalance " << config.max_imbalance << " from available counts";
      for (std::size_t c = 0; c < labels.size(); ++c) msg << ' ' << labels[c] << '=' << available[c];
      return Rejection{RejectionReason::counts_unattainable, msg.str()};
    }
    auto& out = dataset.split(split);
    for (std::size_t c = 0; c < labels.size(); ++c) {
      auto& candidates = pool[c];
      rng.shuffle(std::span(candidates));
      candidates.resize(quotas[c]);
      std::sort(candidates.begin(), candidates.end(),
                [](const Occurrence& a, const Occurrence& b) { return a.sentence < b.sentence; });
      for (const auto& occ : candidates) {
        const auto& sentence = corpus.sentences[occ.sentence];
        ProbingInstance inst;
        for (const auto& t : sentence.tokens) inst.words.push_back(t.form);
        inst.target_index = occ.token;
        inst.label = labels[c];
        out.push_back(std::move(inst));
      }
    }
    rng.shuffle(std::span(out));
    for (const auto& inst : out) claimed.insert(inst.target());
  }
  return dataset;
}

std::vector<std::size_t> class_counts(const std::vector<ProbingInstance>& split,
                                      const std::vector<std::string>& labels) {
  std::vector<std::size_t> counts(labels.size(), 0);
  for (const auto& inst : split) {
    const auto it = std::find(labels.begin(), labels.end(), inst.label);
    if (it != labels.end()) ++counts[static_cast<std::size_t>(it - labels.begin())];
  }
  return counts;
}

std::vector<std::string> validate_dataset(const TaskDataset& dataset, const SamplerConfig& config) {
  std::vector<std::string> violations;
  if (dataset.labels.size() < 2) {
    violations.push_back("label set has " + std::to_string(dataset.labels.size()) +
                         " element(s), need >= 2");
  }
  if (!std::is_sorted(dataset.labels.begin(), dataset.labels.end()) ||
      std::adjacent_find(dataset.labels.begin(), dataset.labels.end()) != dataset.labels.end()) {
    violations.push_back("label set is not sorted and unique");
  }
  std::array<std::set<std::string>, 3> forms;
  for (Split split : kAllSplits) {
    const auto& items = dataset.split(split);
    const std::string name(to_string(split));
    if (items.size() != config.count(split)) {
      violations.push_back(name + ": " + std::to_string(items.size()) + " instances, expected " +
                           std::to_string(config.count(split)));
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& inst = items[i];
      const auto len = inst.words.size();
      if (len < config.min_len || len > config.max_len) {
        violations.push_back(name + "[" + std::to_string(i) + "]: length " + std::to_string(len) +
                             " outside [" + std::to_string(config.min_len) + ", " +
                             std::to_string(config.max_len) + "]");
      }
      if (inst.target_index < 0 || static_cast<std::size_t>(inst.target_index) >= len) {
        violations.push_back(name + "[" + std::to_string(i) + "]: target index " +
                             std::to_string(inst.target_index) + " out of range");
        continue;
      }
      if (std::find(dataset.labels.begin(), dataset.labels.end(), inst.label) ==
          dataset.labels.end()) {
        violations.push_back(name + "[" + std::to_string(i) + "]: label '" + inst.label +
                             "' not in label set");
      }
      forms[static_cast<std::size_t>(split)].insert(inst.target());
    }
    if (!items.empty() && !dataset.labels.empty()) {
      const auto counts = class_counts(items, dataset.labels);
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      if (*lo == 0 ||
          static_cast<double>(*hi) > config.max_imbalance * static_cast<double>(*lo)) {
        violations.push_back(name + ": class imbalance " + std::to_string(*hi) + ":" +
                             std::to_string(*lo) + " exceeds " + format_double(config.max_imbalance) +
                             ":1");
      }
    }
  }
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) {
      for (const auto& form : forms[a]) {
        if (forms[b].contains(form)) {
          violations.push_back("target form '" + form + "' appears in both " +
                               std::string(to_string(kAllSplits[a])) + " and " +
                               std::string(to_string(kAllSplits[b])));
        }
      }
    }
  }
  return violations;
}

void write_task_dir(const std::filesystem::path& dir, const TaskDataset& dataset,
                    const SamplerConfig& config) {
  Json manifest{{"spec",
                 {{"language", dataset.spec.language},
                  {"upos", dataset.spec.upos},
                  {"feature", dataset.spec.feature}}},
                {"labels", dataset.labels},
                {"seed", config.seed},
                {"config", config_to_json(config)},
                {"counts",
                 {{"train", dataset.train.size()},
                  {"dev", dataset.dev.size()},
                  {"test", dataset.test.size()}}}};
  write_text_file(dir / "manifest.json", dump_json(manifest));
  for (Split split : kAllSplits) {
    std::string lines;
    for (const auto& inst : dataset.split(split)) {
      lines += dump_json(Json{{"words", inst.words}, {"target", inst.target_index}, {"label", inst.label}},
                         -1);
      lines += '\n';
    }
    write_text_file(dir / std::string(to_string(split)) / "data.jsonl", lines);
  }
}

TaskDataset read_task_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("task directory not found: " + dir.string());
  const Json manifest = read_json_file(dir / "manifest.json");
  TaskDataset dataset;
  try {
    dataset.spec.language = manifest.at("spec").at("language").get<std::string>();
    dataset.spec.upos = manifest.at("spec").at("upos").get<std::string>();
    dataset.spec.feature = manifest.at("spec").at("feature").get<std::string>();
    dataset.labels = manifest.at("labels").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
  for (Split split : kAllSplits) {
    const auto path = dir / std::string(to_string(split)) / "data.jsonl";
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        const Json j = Json::parse(line);
        ProbingInstance inst;
        inst.words = j.at("words").get<std::vector<std::string>>();
        inst.target_index = j.at("target").get<int>();
        inst.label = j.at("label").get<std::string>();
        dataset.split(split).push_back(std::move(inst));
      } catch (const Json::exception& e) {
        throw ParseError(path.string() + ": " + e.what(), line_no);
      }
    }
  }
  return dataset;
}

}  // namespace morphoprobe

namespace morphoprobe {

TaskDataset subsample_train(const TaskDataset& dataset, double fraction, std::uint64_t seed,
                            double max_imbalance) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("train fraction must lie in (0, 1]");
  if (fraction == 1.0) return dataset;
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(dataset.train.size())));
  std::vector<std::vector<std::size_t>> by_class(dataset.labels.size());
  for (std::size_t i = 0; i < dataset.train.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.label_index(dataset.train[i].label))].push_back(i);
  }
  std::vector<std::size_t> available;
  for (const auto& c : by_class) available.push_back(c.size());
  const auto quotas = allocate_quotas(available, n, max_imbalance);
  if (quotas.empty() || std::find(quotas.begin(), quotas.end(), std::size_t{0}) != quotas.end()) {
    throw DataError("train fraction " + format_double(fraction) + " leaves fewer than one sample per class");
  }
  Xoshiro256 rng(seed);
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto idx = by_class[c];
    rng.shuffle(std::span<std::size_t>(idx));
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quotas[c]));
  }
  std::sort(keep.begin(), keep.end());
  TaskDataset out = dataset;
  out.train.clear();
  for (const auto i : keep) out.train.push_back(dataset.train[i]);
  return out;
}

}  // namespace morphoprobe
