#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morphoprobe/json_io.hpp"
#include "morphoprobe/perturbation.hpp"

namespace morphoprobe {

inline constexpr std::size_t kCoalitionCount = std::size_t{1} << kPlayerCount;

// Test accuracy of the probe for every coalition of unmasked players.
class CoalitionTable {
 public:
  void set(Coalition c, double accuracy);
  bool has(Coalition c) const noexcept { return present_[c.members]; }
  double at(Coalition c) const;
  bool complete() const noexcept;
  std::vector<Coalition> missing() const;

  double acc_full() const { return at(Coalition::full()); }
  double acc_all_masked() const { return at(Coalition::none()); }

  Json to_json() const;
  static CoalitionTable from_json(const Json& j);

 private:
  std::array<double, kCoalitionCount> accuracy_{};
  std::array<bool, kCoalitionCount> present_{};
};

// v(S) = 100 (Acc_S - Acc_masked) / (Acc_full - Acc_masked), so v(empty) = 0 and
// v(all) = 100. Throws UndefinedError when Acc_full == Acc_masked.
double coalition_value(const CoalitionTable& table, Coalition s);

struct ShapleySummary {
  double left = 0.0;    // players -4 and further .. -1
  double right = 0.0;   // players 1 .. 4 and further
  double target = 0.0;  // player 0
  double context = 0.0;
  double left_right_ratio = 0.0;  // +inf when right <= 0 < left; NaN when both are <= 0
};

struct ShapleyProfile {
  std::array<double, kPlayerCount> phi{};
  std::string task;
  std::string model_id;

  ShapleySummary summary() const;
  int argmax_player() const;
  Json to_json() const;
  static ShapleyProfile from_json(const Json& j);
};

ShapleyProfile shapley_from_table(const CoalitionTable& table, std::string task = {},
                                  std::string model_id = {});

// A cooperative game on n players; bit i of the argument marks player i present.
using ValueFunction = std::function<double(std::uint32_t)>;

// Exact Shapley values by subset enumeration,
//   phi(i) = sum over S not containing i of |S|! (n-|S|-1)! / n! [v(S+i) - v(S)].
// n <= 20.
std::vector<double> shapley_values(int n, const ValueFunction& v);

// Exact Shapley values as the mean marginal contribution over all n! orderings.
// Refuses n > 6.
std::vector<double> shapley_permutation_oracle(int n, const ValueFunction& v);

// Manhattan distance between two profiles on the unit scale (phi / 100).
double dfm(const ShapleyProfile& profile, const ShapleyProfile& mean);
double l1_distance(std::span<const double> a, std::span<const double> b);

ShapleyProfile mean_profile(std::span<const ShapleyProfile> profiles);

// Profiles ranked by their distance from the mean profile, largest first.
struct Outlier {
  std::string task;
  std::string model_id;
  double dfm = 0.0;
};
std::vector<Outlier> rank_outliers(std::span<const ShapleyProfile> profiles);

// A profile located in the language x POS x feature grid.
struct GridProfile {
  std::string language;
  std::string pos;
  std::string feature;
  std::array<double, kPlayerCount> phi{};  // unit scale
};

enum class GridAxis { language, pos, feature };
GridAxis parse_grid_axis(std::string_view name);
std::string_view to_string(GridAxis axis) noexcept;

// Mean L1 distance of each member to the mean profile of its axis value. With
// `impute`, every absent grid cell is filled with the column means of the
// observed profiles first. Axis values with fewer than two members are skipped.
// Returns nullopt when no axis value qualifies.
std::optional<double> generalization_variance(std::span<const GridProfile> profiles, GridAxis axis,
                                              bool impute = true);

}  // namespace morphoprobe
