#pragma once

#include <cstdint>

#include "morphoprobe/sampler.hpp"

namespace morphoprobe::testkit {

struct SyntheticConfig {
  std::size_t n_train = 400;
  std::size_t n_dev = 100;
  std::size_t n_test = 100;
  std::uint64_t seed = 7;
};

// Labels in the ratio 2:1:1:1, five-word sentences with the target in the middle.
inline const std::vector<std::string> kSyntheticLabels = {"Acc", "Dat", "Gen", "Nom"};

// The label is spelled by the target's last character; the context is noise.
TaskDataset suffix_language(const SyntheticConfig& config = {});

// The label is carried only by the marker word right before the target.
TaskDataset marker_language(const SyntheticConfig& config = {});

// Decision rules that recover the label from the visible words, used as
// separability oracles.
std::string suffix_rule(const ProbingInstance& instance);
std::string marker_rule(const ProbingInstance& instance);

}  // namespace morphoprobe::testkit
