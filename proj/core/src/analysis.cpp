#include "morphoprobe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "morphoprobe/errors.hpp"

namespace morphoprobe {

double effect(double acc_unperturbed, double acc_perturbed) {
  if (!(acc_unperturbed > 0.0)) {
    throw UndefinedError("effect is undefined for unperturbed accuracy " + format_double(acc_unperturbed));
  }
  return 1.0 - acc_perturbed / acc_unperturbed;
}

// ---- significance -----------------------------------------------------------

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ConfigError("degrees of freedom must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::students_t_distribution<double>(df), t);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("paired samples differ in length");
  if (a.size() < 2) throw DataError("paired t-test needs at least 2 pairs");
  TTestResult r;
  r.n = a.size();
  r.df = static_cast<double>(r.n - 1);
  std::vector<double> d(r.n);
  for (std::size_t i = 0; i < r.n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(r.n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  r.mean_difference = mean;
  const double sd = std::sqrt(ss / r.df);
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean > 0 ? INFINITY : -INFINITY;
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(r.n)));
  r.p = std::min(1.0, 2.0 * student_t_cdf(-std::abs(r.t), r.df));
  return r;
}

double bonferroni(double p, std::size_t family_size) {
  if (family_size == 0) throw ConfigError("family size must be positive");
  return std::min(1.0, p * static_cast<double>(family_size));
}

double sign_test(std::uint64_t k, std::uint64_t n) {
  if (k > n) throw DataError("more successes than trials");
  if (n == 0) return 1.0;
  const std::uint64_t tail = std::min(k, n - k);
  const boost::math::binomial_distribution<double> dist(static_cast<double>(n), 0.5);
  return std::min(1.0, 2.0 * boost::math::cdf(dist, static_cast<double>(tail)));
}

// ---- correlations -------------------------------------------------------------

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("correlated columns differ in length");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationMatrix pearson_matrix(std::span<const EffectRecord> records, const std::string& model_a,
                                 const std::string& model_b, std::size_t min_common) {
  // perturbation -> task -> effect, per model
  std::map<std::string, std::map<std::string, double>> a, b;
  for (const auto& r : records) {
    if (r.model_id == model_a) a[r.perturbation][r.task] = r.effect;
    if (r.model_id == model_b) b[r.perturbation][r.task] = r.effect;
  }
  if (a.empty()) throw NotFoundError("no effects for model '" + model_a + "'");
  if (b.empty()) throw NotFoundError("no effects for model '" + model_b + "'");
  CorrelationMatrix m;
  for (const auto& [p, _] : a) m.rows.push_back(p);
  for (const auto& [p, _] : b) m.cols.push_back(p);
  m.r.assign(m.rows.size(), std::vector<double>(m.cols.size(), NAN));
  m.n.assign(m.rows.size(), std::vector<std::size_t>(m.cols.size(), 0));
  m.defined.assign(m.rows.size(), std::vector<bool>(m.cols.size(), false));
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& col_a = a[m.rows[i]];
    for (std::size_t j = 0; j < m.cols.size(); ++j) {
      const auto& col_b = b[m.cols[j]];
      std::vector<double> x, y;
      for (const auto& [task, e] : col_a) {
        const auto it = col_b.find(task);
        if (it == col_b.end()) continue;
        x.push_back(e);
        y.push_back(it->second);
      }
      m.n[i][j] = x.size();
      if (x.size() < min_common) continue;
      if (const auto r = pearson(x, y)) {
        m.r[i][j] = *r;
        m.defined[i][j] = true;
      }
    }
  }
  return m;
}

Json CorrelationMatrix::to_json() const {
  Json cells = Json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < cols.size(); ++j) row.push_back(defined[i][j] ? Json(r[i][j]) : Json(nullptr));
    cells.push_back(std::move(row));
  }
  return Json{{"rows", rows}, {"cols", cols}, {"r", std::move(cells)}, {"n", n}};
}

std::string CorrelationMatrix::to_csv() const {
  std::ostringstream out;
  out << "perturbation";
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << rows[i];
    for (std::size_t j = 0; j < cols.size(); ++j) out << ',' << (defined[i][j] ? format_double(r[i][j]) : "NA");
    out << '\n';
  }
  return out.str();
}

// ---- layer weights -------------------------------------------------------------

LayerWeightDiagnostics layer_weight_diagnostics(std::span<const double> weights) {
  if (weights.empty()) throw DataError("no layer weights");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw DataError("layer weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw DataError("layer weights sum to " + format_double(sum) + ", not 1");
  LayerWeightDiagnostics d;
  for (double w : weights) {
    if (w > 0.0) d.entropy -= w * std::log(w);
  }
  d.entropy_bits = d.entropy / std::numbers::ln2;
  const auto [lo, hi] = std::minmax_element(weights.begin(), weights.end());
  d.max_min_ratio = *lo == 0.0 ? INFINITY : *hi / *lo;
  return d;
}

// ---- external analyzers ----------------------------------------------------------

double partial_credit_score(std::span<const std::string> predicted, const std::string& gold) {
  const std::set<std::string> distinct(predicted.begin(), predicted.end());
  if (!distinct.contains(gold)) return 0.0;
  return 1.0 / static_cast<double>(distinct.size());
}

namespace {

struct Span {
  std::size_t begin;
  std::size_t end;
};

// Offsets into the concatenation of the words without separators, so that two
// tokenizations of the same text line up.
std::vector<Span> word_spans(const std::vector<std::string>& words) {
  std::vector<Span> out;
  std::size_t pos = 0;
  for (const auto& w : words) {
    out.push_back({pos, pos + w.size()});
    pos += w.size();
  }
  return out;
}

}  // namespace

ExternalScore score_external(const TaskDataset& dataset, std::span<const SentenceRecord> predicted) {
  if (predicted.size() != dataset.test.size()) {
    throw DataError("analyzer output has " + std::to_string(predicted.size()) + " sentences, test split has " +
                    std::to_string(dataset.test.size()));
  }
  ExternalScore s;
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& inst = dataset.test[i];
    const Span target = word_spans(inst.words)[static_cast<std::size_t>(inst.target_index)];
    std::vector<std::string> pred_words;
    for (const auto& t : predicted[i].tokens) pred_words.push_back(t.form);
    const auto spans = word_spans(pred_words);
    std::vector<std::string> values;
    for (std::size_t k = 0; k < spans.size(); ++k) {
      if (spans[k].begin >= target.end || spans[k].end <= target.begin) continue;
      const auto& feats = predicted[i].tokens[k].feats;
      const auto it = feats.find(dataset.spec.feature);
      if (it != feats.end()) values.push_back(it->second);
    }
    const double score = partial_credit_score(values, inst.label);
    total += score;
    if (score == 1.0) {
      ++s.exact;
    } else if (score > 0.0) {
      ++s.partial;
    } else {
      ++s.missed;
    }
  }
  s.instances = predicted.size();
  s.mean = s.instances ? total / static_cast<double>(s.instances) : 0.0;
  return s;
}

double majority_baseline(const TaskDataset& dataset) {
  if (dataset.test.empty()) throw DataError("empty test split");
  std::map<std::string, std::size_t> counts;
  for (const auto& inst : dataset.train) ++counts[inst.label];
  if (counts.empty()) throw DataError("empty training split");
  std::string best;
  std::size_t best_count = 0;
  for (const auto& [label, c] : counts) {
    if (c > best_count) {
      best = label;
      best_count = c;
    }
  }
  std::size_t hits = 0;
  for (const auto& inst : dataset.test) hits += inst.label == best ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(dataset.test.size());
}

}  // namespace morphoprobe
