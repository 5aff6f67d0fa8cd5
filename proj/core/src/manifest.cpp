#include "morphoprobe/manifest.hpp"

#include <unordered_set>

#include "morphoprobe/errors.hpp"
#include "morphoprobe/rng.hpp"

namespace morphoprobe {

Json ExtractionManifest::to_json() const {
  Json requests = Json::array();
  for (const auto& e : entries) {
    Json r = e.request.to_json();
    r["id"] = to_hex(e.id);
    requests.push_back(std::move(r));
  }
  return Json{{"model_id", model_id}, {"requests", std::move(requests)}};
}

ExtractionManifest ExtractionManifest::from_json(const Json& j) {
  ExtractionManifest m;
  try {
    m.model_id = j.at("model_id").get<std::string>();
    std::unordered_set<std::string> seen;
    for (const auto& r : j.at("requests")) {
      ManifestEntry e;
      e.request = EmbeddingRequest::from_json(r);
      e.id = request_hash(e.request);
      if (r.contains("id") && r.at("id").get<std::string>() != to_hex(e.id)) {
        throw IntegrityError("manifest id " + r.at("id").get<std::string>() +
                             " does not match the request content");
      }
      if (!seen.insert(to_hex(e.id)).second) throw IntegrityError("duplicate manifest id " + to_hex(e.id));
      m.entries.push_back(std::move(e));
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::uint64_t instance_seed(std::uint64_t base_seed, Split split, std::size_t index) {
  return derive_seed(derive_seed(base_seed, static_cast<std::uint64_t>(split) + 101), index);
}

std::vector<Masking> all_coalitions() {
  std::vector<Masking> out;
  for (std::uint32_t m = 0; m <= kFullCoalition; ++m) out.emplace_back(Coalition{m});
  return out;
}

ExtractionManifest plan_manifest(const TaskDataset& dataset, const std::vector<Masking>& maskings,
                                 const std::string& model_id, std::uint64_t perturbation_seed) {
  ExtractionManifest manifest;
  manifest.model_id = model_id;
  std::unordered_set<std::string> seen;
  for (Split split : kAllSplits) {
    const auto& items = dataset.split(split);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto seed = instance_seed(perturbation_seed, split, i);
      for (const auto& masking : maskings) {
        ManifestEntry e;
        e.request = make_request(perturb(items[i], masking, seed), model_id);
        e.id = request_hash(e.request);
        if (seen.insert(to_hex(e.id)).second) manifest.entries.push_back(std::move(e));
      }
    }
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const ExtractionManifest& manifest) {
  write_text_file(path, dump_json(manifest.to_json()));
}

ExtractionManifest read_manifest(const std::filesystem::path& path) {
  return ExtractionManifest::from_json(read_json_file(path));
}

}  // namespace morphoprobe
