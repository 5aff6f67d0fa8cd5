#include "morphoprobe/clustering.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "morphoprobe/errors.hpp"
#include "morphoprobe/rng.hpp"
#include "morphoprobe/sampler.hpp"

namespace morphoprobe {

FeatureMatrix language_feature_matrix(std::span<const EffectRecord> records, const std::string& model_id) {
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> cells;
  std::map<std::string, int> rows, cols;
  for (const auto& r : records) {
    if (!model_id.empty() && r.model_id != model_id) continue;
    const TaskSpec t = TaskSpec::parse(r.task);
    const std::string col = r.perturbation + "/" + t.upos + "_" + t.feature;
    auto& c = cells[{t.language, col}];
    c.first += r.effect;
    c.second += 1;
    rows[t.language] = 0;
    cols[col] = 0;
  }
  if (rows.empty()) throw NotFoundError("no effect records" + (model_id.empty() ? "" : " for '" + model_id + "'"));
  FeatureMatrix m;
  for (auto& [name, idx] : rows) {
    idx = static_cast<int>(m.rows.size());
    m.rows.push_back(name);
  }
  for (auto& [name, idx] : cols) {
    idx = static_cast<int>(m.cols.size());
    m.cols.push_back(name);
  }
  m.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(m.rows.size()),
                                       static_cast<Eigen::Index>(m.cols.size()), NAN);
  for (const auto& [key, acc] : cells) m.values(rows[key.first], cols[key.second]) = acc.first / acc.second;
  return m;
}

Eigen::MatrixXd impute_column_means(const Eigen::MatrixXd& values) {
  Eigen::MatrixXd out = values;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    double sum = 0.0;
    int n = 0;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      if (!std::isnan(out(i, j))) {
        sum += out(i, j);
        ++n;
      }
    }
    const double mean = n ? sum / n : 0.0;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      if (std::isnan(out(i, j))) out(i, j) = mean;
    }
  }
  return out;
}

KMeansResult kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, double tol, int max_iter) {
  const Eigen::Index n = x.rows();
  if (k < 1 || k > n) throw ConfigError("k must lie in [1, rows]");
  Xoshiro256 rng(seed);
  KMeansResult r;
  r.centers.resize(k, x.cols());
  r.centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - r.centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (d2(i) <= 0.0) continue;
        u -= d2(i);
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
      while (d2(pick) <= 0.0) --pick;
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    r.centers.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - r.centers.row(c)).squaredNorm());
  }

  r.assignment.assign(static_cast<std::size_t>(n), 0);
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (x.row(i) - r.centers.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (x.row(i) - r.centers.row(c)).squaredNorm();
        if (d < best_d) {
          best = c;
          best_d = d;
        }
      }
      r.assignment[static_cast<std::size_t>(i)] = best;
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = r.assignment[static_cast<std::size_t>(i)];
      next.row(c) += x.row(i);
      ++sizes[static_cast<std::size_t>(c)];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] == 0) {
        next.row(c) = r.centers.row(c);
      } else {
        next.row(c) /= sizes[static_cast<std::size_t>(c)];
      }
      shift = std::max(shift, (next.row(c) - r.centers.row(c)).norm());
    }
    r.centers = std::move(next);
    if (shift <= tol) break;
  }
  r.iterations = std::min(r.iterations, max_iter);
  return r;
}

CooccurrenceMatrix consensus_cluster(const FeatureMatrix& features, const ConsensusConfig& config) {
  const auto n = static_cast<int>(features.values.rows());
  if (config.runs < 1) throw ConfigError("runs must be positive");
  if (config.k_min < 1 || config.k_max < config.k_min) throw ConfigError("invalid K range");
  if (n < config.k_min) {
    throw DataError(std::to_string(n) + " languages cannot form " + std::to_string(config.k_min) + " clusters");
  }
  Eigen::MatrixXd x = impute_column_means(features.values);
  if (config.standardize) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double mean = x.col(j).mean();
      const double sd = std::sqrt((x.col(j).array() - mean).square().sum() / static_cast<double>(x.rows()));
      x.col(j) = (x.col(j).array() - mean) / (sd > 0.0 ? sd : 1.0);
    }
  }

  std::vector<std::vector<int>> assignments(static_cast<std::size_t>(config.runs));
  const auto run = [&](int r) {
    Xoshiro256 rng(derive_seed(config.seed, static_cast<std::uint64_t>(r)));
    int k = 0;
    do {
      k = static_cast<int>(rng.between(config.k_min, config.k_max));
    } while (k > n);
    assignments[static_cast<std::size_t>(r)] = kmeans(x, k, rng(), config.tol, config.max_iter).assignment;
  };
  const int workers = std::max(1, std::min(config.workers, config.runs));
  if (workers == 1) {
    for (int r = 0; r < config.runs; ++r) run(r);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int r = w; r < config.runs; r += workers) run(r);
      });
    }
  }

  CooccurrenceMatrix m;
  m.labels = features.rows;
  m.runs = config.runs;
  m.counts.assign(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), 0));
  for (const auto& a : assignments) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (a[static_cast<std::size_t>(i)] == a[static_cast<std::size_t>(j)]) {
          ++m.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
      }
    }
  }
  return m;
}

Json CooccurrenceMatrix::to_json() const {
  return Json{{"labels", labels}, {"counts", counts}, {"runs", runs}};
}

CooccurrenceMatrix CooccurrenceMatrix::from_json(const Json& j) {
  CooccurrenceMatrix m;
  try {
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.counts = j.at("counts").get<std::vector<std::vector<int>>>();
    m.runs = j.at("runs").get<int>();
  } catch (const Json::exception& e) {
    throw ParseError(std::string("co-occurrence matrix: ") + e.what());
  }
  if (m.counts.size() != m.labels.size()) throw ParseError("co-occurrence matrix is not square");
  for (const auto& row : m.counts) {
    if (row.size() != m.labels.size()) throw ParseError("co-occurrence matrix is not square");
  }
  return m;
}

std::string CooccurrenceMatrix::to_csv() const {
  std::ostringstream out;
  out << "language";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels[i];
    for (const int c : counts[i]) out << ',' << c;
    out << '\n';
  }
  return out.str();
}

}  // namespace morphoprobe
