#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "morphoprobe/embedding.hpp"
#include "morphoprobe/perturbation.hpp"
#include "morphoprobe/sampler.hpp"

namespace morphoprobe {

struct ManifestEntry {
  RequestId id{};
  EmbeddingRequest request;
};

// Every distinct masked variant an experiment suite needs, deduplicated by request hash.
struct ExtractionManifest {
  std::string model_id;
  std::vector<ManifestEntry> entries;  // first-seen order

  Json to_json() const;
  static ExtractionManifest from_json(const Json& j);
};

// Seed used for PERMUTE on instance `index` of `split`; shared by planning and training
// so both see the same permutation.
std::uint64_t instance_seed(std::uint64_t base_seed, Split split, std::size_t index);

// All 2^9 coalitions, in bitmask order.
std::vector<Masking> all_coalitions();

ExtractionManifest plan_manifest(const TaskDataset& dataset, const std::vector<Masking>& maskings,
                                 const std::string& model_id, std::uint64_t perturbation_seed = 0);

void write_manifest(const std::filesystem::path& path, const ExtractionManifest& manifest);
ExtractionManifest read_manifest(const std::filesystem::path& path);

}  // namespace morphoprobe
