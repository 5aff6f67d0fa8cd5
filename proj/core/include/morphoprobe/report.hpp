#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "morphoprobe/analysis.hpp"
#include "morphoprobe/clustering.hpp"
#include "morphoprobe/probe.hpp"
#include "morphoprobe/shapley.hpp"

namespace morphoprobe {

// Tables are sorted before rendering, so output depends only on their contents.
struct ReportInputs {
  std::vector<ExperimentResult> results;
  std::vector<EffectRecord> effects;  // derived from results when empty
  std::vector<ShapleyProfile> profiles;
  std::optional<CooccurrenceMatrix> cooccurrence;
  std::map<std::string, std::string> families;  // language -> family

  bool empty() const;
};

// One row per experiment seed.
std::string results_csv(const std::vector<ExperimentResult>& results);
// One entry per experiment with the aggregates.
Json results_summary(const std::vector<ExperimentResult>& results);
std::string effects_csv(const std::vector<EffectRecord>& effects);
// Mean effect per model and perturbation.
std::string effect_means_csv(const std::vector<EffectRecord>& effects);
std::string shapley_csv(const std::vector<ShapleyProfile>& profiles);

// Nine bars, one per player, each carrying its exact value in data-value.
std::string shapley_bar_svg(const ShapleyProfile& profile, const std::string& title);

// Rows ordered by family and then label; unknown families sort last as "other".
std::vector<std::size_t> family_order(const std::vector<std::string>& labels,
                                      const std::map<std::string, std::string>& families);
// Grey-scale co-occurrence heatmap with a separator line between families.
std::string cooccurrence_svg(const CooccurrenceMatrix& matrix, const std::map<std::string, std::string>& families);

// Collects the outputs under a run directory: experiment results
// (<model>/<task>/<masking>.json), Shapley profiles (shapley.json) and a consensus
// matrix (cooccurrence.json). Anything under an "ablation" directory is skipped.
ReportInputs load_report_inputs(const std::filesystem::path& dir);

// Writes every table and figure the inputs support into out_dir and returns the
// paths in write order. Empty inputs produce a warning and no files.
std::vector<std::filesystem::path> emit_report(const ReportInputs& inputs, const std::filesystem::path& out_dir,
                                               std::ostream& warnings);

}  // namespace morphoprobe
