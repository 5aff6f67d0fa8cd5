#include "morphoprobe/shapley.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <tuple>

#include "morphoprobe/errors.hpp"

namespace morphoprobe {

void CoalitionTable::set(Coalition c, double accuracy) {
  if (c.members > kFullCoalition) throw DataError("coalition outside the player set");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
    throw DataError("accuracy " + format_double(accuracy) + " for " + c.name() + " is outside [0, 1]");
  }
  accuracy_[c.members] = accuracy;
  present_[c.members] = true;
}

double CoalitionTable::at(Coalition c) const {
  if (c.members > kFullCoalition || !present_[c.members]) {
    throw DataError("coalition table lacks " + c.name());
  }
  return accuracy_[c.members];
}

bool CoalitionTable::complete() const noexcept {
  return std::all_of(present_.begin(), present_.end(), [](bool b) { return b; });
}

std::vector<Coalition> CoalitionTable::missing() const {
  std::vector<Coalition> out;
  for (std::uint32_t m = 0; m <= kFullCoalition; ++m) {
    if (!present_[m]) out.push_back(Coalition{m});
  }
  return out;
}

Json CoalitionTable::to_json() const {
  Json acc = Json::object();
  for (std::uint32_t m = 0; m <= kFullCoalition; ++m) {
    if (present_[m]) acc[Coalition{m}.name()] = accuracy_[m];
  }
  return Json{{"players", kPlayerCount}, {"accuracy", std::move(acc)}};
}

CoalitionTable CoalitionTable::from_json(const Json& j) {
  CoalitionTable t;
  try {
    if (j.at("players").get<int>() != kPlayerCount) throw DataError("coalition table has the wrong player count");
    for (const auto& [key, value] : j.at("accuracy").items()) {
      unsigned m = 0;
      if (key.size() != 4 || key[0] != 'c' || std::sscanf(key.c_str() + 1, "%3u", &m) != 1) {
        throw DataError("bad coalition key '" + key + "'");
      }
      t.set(Coalition{m}, value.get<double>());
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("coalition table: ") + e.what());
  }
  return t;
}

double coalition_value(const CoalitionTable& table, Coalition s) {
  const double full = table.acc_full();
  const double masked = table.acc_all_masked();
  if (full == masked) {
    throw UndefinedError("degenerate task: full and fully masked accuracy are both " + format_double(full));
  }
  return 100.0 * ((table.at(s) - masked) / (full - masked));
}

// ---- generic games ------------------------------------------------------------

std::vector<double> shapley_values(int n, const ValueFunction& v) {
  if (n < 1 || n > 20) throw ConfigError("subset enumeration supports 1..20 players");
  const std::uint32_t count = 1u << n;
  std::vector<double> values(count);
  for (std::uint32_t s = 0; s < count; ++s) values[s] = v(s);
  // weight[k] = k! (n-k-1)!, divided by n! once per player at the end.
  std::vector<double> factorial(static_cast<std::size_t>(n) + 1, 1.0);
  for (int k = 1; k <= n; ++k) factorial[static_cast<std::size_t>(k)] = factorial[static_cast<std::size_t>(k) - 1] * k;
  std::vector<double> weight(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    weight[static_cast<std::size_t>(k)] = factorial[static_cast<std::size_t>(k)] * factorial[static_cast<std::size_t>(n - k - 1)];
  }
  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const std::uint32_t bit = 1u << i;
    double total = 0.0;
    for (std::uint32_t s = 0; s < count; ++s) {
      if (s & bit) continue;
      total += weight[static_cast<std::size_t>(std::popcount(s))] * (values[s | bit] - values[s]);
    }
    phi[static_cast<std::size_t>(i)] = total / factorial[static_cast<std::size_t>(n)];
  }
  return phi;
}

std::vector<double> shapley_permutation_oracle(int n, const ValueFunction& v) {
  if (n < 1 || n > 6) throw ConfigError("the permutation oracle supports 1..6 players");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  long orderings = 0;
  do {
    std::uint32_t s = 0;
    double prev = v(0);
    for (const int p : order) {
      s |= 1u << p;
      const double cur = v(s);
      phi[static_cast<std::size_t>(p)] += cur - prev;
      prev = cur;
    }
    ++orderings;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& x : phi) x /= static_cast<double>(orderings);
  return phi;
}

// ---- profiles -----------------------------------------------------------------

ShapleySummary ShapleyProfile::summary() const {
  ShapleySummary s;
  const int t = player_for_offset(0);
  for (int p = 0; p < kPlayerCount; ++p) {
    if (p < t) s.left += phi[static_cast<std::size_t>(p)];
    if (p > t) s.right += phi[static_cast<std::size_t>(p)];
  }
  s.target = phi[static_cast<std::size_t>(t)];
  s.context = s.left + s.right;
  // A right side that contributes nothing or hurts leaves any positive left side
  // unboundedly larger.
  if (s.right > 0.0) {
    s.left_right_ratio = s.left / s.right;
  } else if (s.left > 0.0) {
    s.left_right_ratio = INFINITY;
  } else {
    s.left_right_ratio = NAN;
  }
  return s;
}

int ShapleyProfile::argmax_player() const {
  return static_cast<int>(std::max_element(phi.begin(), phi.end()) - phi.begin());
}

Json ShapleyProfile::to_json() const {
  Json values = Json::object();
  for (int p = 0; p < kPlayerCount; ++p) values[player_name(p)] = phi[static_cast<std::size_t>(p)];
  const ShapleySummary s = summary();
  return Json{{"task", task},
              {"model_id", model_id},
              {"phi", std::vector<double>(phi.begin(), phi.end())},
              {"players", values},
              {"summary",
               {{"left", s.left},
                {"right", s.right},
                {"target", s.target},
                {"context", s.context},
                {"left_right_ratio", std::isinf(s.left_right_ratio) ? Json("inf") : Json(s.left_right_ratio)}}}};
}

ShapleyProfile ShapleyProfile::from_json(const Json& j) {
  ShapleyProfile p;
  try {
    p.task = j.value("task", "");
    p.model_id = j.value("model_id", "");
    const auto phi = j.at("phi").get<std::vector<double>>();
    if (phi.size() != kPlayerCount) throw DataError("profile needs 9 values");
    std::copy(phi.begin(), phi.end(), p.phi.begin());
  } catch (const Json::exception& e) {
    throw DataError(std::string("Shapley profile: ") + e.what());
  }
  return p;
}

ShapleyProfile shapley_from_table(const CoalitionTable& table, std::string task, std::string model_id) {
  if (!table.complete()) {
    throw DataError("coalition table is incomplete (" + std::to_string(table.missing().size()) + " missing)");
  }
  std::array<double, kCoalitionCount> v{};
  for (std::uint32_t m = 0; m <= kFullCoalition; ++m) v[m] = coalition_value(table, Coalition{m});
  const auto phi = shapley_values(kPlayerCount, [&](std::uint32_t s) { return v[s]; });
  ShapleyProfile out;
  std::copy(phi.begin(), phi.end(), out.phi.begin());
  out.task = std::move(task);
  out.model_id = std::move(model_id);
  return out;
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("profiles differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

double dfm(const ShapleyProfile& profile, const ShapleyProfile& mean) {
  return l1_distance(profile.phi, mean.phi) / 100.0;
}

ShapleyProfile mean_profile(std::span<const ShapleyProfile> profiles) {
  if (profiles.empty()) throw DataError("no profiles to average");
  ShapleyProfile m;
  m.task = "mean";
  for (const auto& p : profiles) {
    for (int i = 0; i < kPlayerCount; ++i) m.phi[static_cast<std::size_t>(i)] += p.phi[static_cast<std::size_t>(i)];
  }
  for (double& x : m.phi) x /= static_cast<double>(profiles.size());
  return m;
}

std::vector<Outlier> rank_outliers(std::span<const ShapleyProfile> profiles) {
  const ShapleyProfile m = mean_profile(profiles);
  std::vector<Outlier> out;
  for (const auto& p : profiles) out.push_back({p.task, p.model_id, dfm(p, m)});
  std::stable_sort(out.begin(), out.end(), [](const Outlier& a, const Outlier& b) { return a.dfm > b.dfm; });
  return out;
}

// ---- generalization across the language x POS x feature grid --------------------

GridAxis parse_grid_axis(std::string_view name) {
  if (name == "language") return GridAxis::language;
  if (name == "pos") return GridAxis::pos;
  if (name == "tag" || name == "feature") return GridAxis::feature;
  throw ConfigError("unknown aggregation axis '" + std::string(name) + "' (language|pos|tag)");
}

std::string_view to_string(GridAxis axis) noexcept {
  switch (axis) {
    case GridAxis::language: return "language";
    case GridAxis::pos: return "pos";
    case GridAxis::feature: return "tag";
  }
  return "language";
}

std::optional<double> generalization_variance(std::span<const GridProfile> profiles, GridAxis axis,
                                              bool impute) {
  if (profiles.empty()) return std::nullopt;
  std::vector<GridProfile> cells(profiles.begin(), profiles.end());
  if (impute) {
    std::set<std::string> langs, poses, feats;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    std::array<double, kPlayerCount> colmean{};
    for (const auto& p : profiles) {
      langs.insert(p.language);
      poses.insert(p.pos);
      feats.insert(p.feature);
      seen.emplace(p.language, p.pos, p.feature);
      for (int i = 0; i < kPlayerCount; ++i) colmean[static_cast<std::size_t>(i)] += p.phi[static_cast<std::size_t>(i)];
    }
    for (double& x : colmean) x /= static_cast<double>(profiles.size());
    for (const auto& l : langs) {
      for (const auto& p : poses) {
        for (const auto& f : feats) {
          if (!seen.contains({l, p, f})) cells.push_back({l, p, f, colmean});
        }
      }
    }
  }
  const auto key = [axis](const GridProfile& p) -> const std::string& {
    switch (axis) {
      case GridAxis::language: return p.language;
      case GridAxis::pos: return p.pos;
      case GridAxis::feature: return p.feature;
    }
    return p.language;
  };
  std::map<std::string, std::vector<const GridProfile*>> groups;
  for (const auto& c : cells) groups[key(c)].push_back(&c);
  double total = 0.0;
  std::size_t members = 0;
  for (const auto& [value, group] : groups) {
    if (group.size() < 2) continue;
    std::array<double, kPlayerCount> mean{};
    for (const auto* g : group) {
      for (int i = 0; i < kPlayerCount; ++i) mean[static_cast<std::size_t>(i)] += g->phi[static_cast<std::size_t>(i)];
    }
    for (double& x : mean) x /= static_cast<double>(group.size());
    for (const auto* g : group) total += l1_distance(g->phi, mean);
    members += group.size();
  }
  if (members == 0) return std::nullopt;
  return total / static_cast<double>(members);
}

}  // namespace morphoprobe
