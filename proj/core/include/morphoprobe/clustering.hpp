#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "morphoprobe/analysis.hpp"
#include "morphoprobe/json_io.hpp"

namespace morphoprobe {

// One row per language; NaN marks a missing entry.
struct FeatureMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  Eigen::MatrixXd values;
};

// Rows are languages and columns "<perturbation>/<POS>_<feature>" for the given
// model. With an empty model_id the effects are averaged over all models.
FeatureMatrix language_feature_matrix(std::span<const EffectRecord> records, const std::string& model_id = {});

// Replaces NaNs by their column mean; a column with no observed value becomes 0.
Eigen::MatrixXd impute_column_means(const Eigen::MatrixXd& values);

struct KMeansResult {
  std::vector<int> assignment;
  Eigen::MatrixXd centers;  // k x d
  int iterations = 0;
};

// k-means++ seeding followed by Lloyd iterations until no center moves more than
// `tol` or `max_iter` is reached. Ties in assignment go to the lower cluster index.
KMeansResult kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, double tol = 1e-6, int max_iter = 100);

struct ConsensusConfig {
  int runs = 100;
  int k_min = 3;
  int k_max = 8;
  std::uint64_t seed = 0;
  bool standardize = false;
  double tol = 1e-6;
  int max_iter = 100;
  int workers = 1;
};

struct CooccurrenceMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<int>> counts;
  int runs = 0;

  Json to_json() const;
  static CooccurrenceMatrix from_json(const Json& j);
  std::string to_csv() const;
};

// Each run draws K uniformly from {k_min..k_max}, redrawing while K exceeds the
// number of rows, and counts how often every pair lands in the same cluster.
CooccurrenceMatrix consensus_cluster(const FeatureMatrix& features, const ConsensusConfig& config = {});

}  // namespace morphoprobe
