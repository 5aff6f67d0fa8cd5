#include "morphoprobe/perturbation.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <numeric>

#include "morphoprobe/errors.hpp"
#include "morphoprobe/rng.hpp"
#include "morphoprobe/utf8.hpp"

namespace morphoprobe {

namespace {

PerturbedInstance start_from(const ProbingInstance& instance, std::string provenance,
                             std::uint64_t seed) {
  for (const auto& w : instance.words) {
    if (w == kMaskSentinel) throw DataError("input word equals the mask sentinel");
  }
  if (instance.target_index < 0 ||
      static_cast<std::size_t>(instance.target_index) >= instance.words.size()) {
    throw DataError("target index out of range");
  }
  PerturbedInstance out;
  out.words = instance.words;
  out.source_words = instance.words;
  out.target_index = instance.target_index;
  out.label = instance.label;
  out.provenance = std::move(provenance);
  out.seed = seed;
  return out;
}

void mask(PerturbedInstance& p, int position) {
  if (position < 0 || static_cast<std::size_t>(position) >= p.words.size()) return;
  p.words[static_cast<std::size_t>(position)] = std::string(kMaskSentinel);
  const auto it = std::lower_bound(p.masked_positions.begin(), p.masked_positions.end(), position);
  if (it == p.masked_positions.end() || *it != position) p.masked_positions.insert(it, position);
}

}  // namespace

PerturbationSpec PerturbationSpec::parse(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "original" || lower == "unperturbed") return original();
  if (lower == "targ") return targ();
  if (lower == "permute") return permute();
  if (lower.size() >= 2 && (lower[0] == 'l' || lower[0] == 'r' || lower[0] == 'b')) {
    int n = 0;
    for (std::size_t i = 1; i < lower.size(); ++i) {
      if (lower[i] < '0' || lower[i] > '9') throw ConfigError("unknown perturbation '" + lower + "'");
      n = n * 10 + (lower[i] - '0');
    }
    PerturbationSpec spec{lower[0] == 'l'   ? PerturbationKind::left
                          : lower[0] == 'r' ? PerturbationKind::right
                                            : PerturbationKind::both,
                          n};
    spec.validate();
    return spec;
  }
  throw ConfigError("unknown perturbation '" + std::string(name) + "'");
}

std::string PerturbationSpec::name() const {
  switch (kind) {
    case PerturbationKind::original: return "original";
    case PerturbationKind::targ: return "targ";
    case PerturbationKind::left: return "l" + std::to_string(n);
    case PerturbationKind::right: return "r" + std::to_string(n);
    case PerturbationKind::both: return "b" + std::to_string(n);
    case PerturbationKind::permute: return "permute";
  }
  return "original";
}

void PerturbationSpec::validate() const {
  const bool windowed = kind == PerturbationKind::left || kind == PerturbationKind::right ||
                        kind == PerturbationKind::both;
  if (windowed && n < 1) throw ConfigError("context width must be >= 1 for " + name());
}

std::string player_name(int player) {
  if (player == 0) return "-4-";
  if (player == 8) return "4+";
  return std::to_string(player - 4);
}

int Coalition::size() const noexcept { return std::popcount(members & kFullCoalition); }

std::string Coalition::name() const {
  char buf[8];
  std::snprintf(buf, sizeof buf, "c%03u", members & kFullCoalition);
  return buf;
}

std::string masking_name(const Masking& masking) {
  return std::visit([](const auto& m) { return m.name(); }, masking);
}

Masking parse_masking(std::string_view name) {
  if (name.size() == 4 && name[0] == 'c' &&
      std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    const auto m = static_cast<std::uint32_t>(std::stoul(std::string(name.substr(1))));
    if (m > kFullCoalition) throw ConfigError("coalition '" + std::string(name) + "' out of range");
    return Coalition{m};
  }
  return PerturbationSpec::parse(name);
}

bool PerturbedInstance::is_masked(int position) const {
  return std::binary_search(masked_positions.begin(), masked_positions.end(), position);
}

PerturbedInstance apply(const ProbingInstance& instance, const PerturbationSpec& spec,
                        std::uint64_t seed) {
  spec.validate();
  PerturbedInstance out = start_from(instance, spec.name(), seed);
  const int t = instance.target_index;
  switch (spec.kind) {
    case PerturbationKind::original:
      break;
    case PerturbationKind::targ:
      mask(out, t);
      break;
    case PerturbationKind::left:
      for (int k = 1; k <= spec.n; ++k) mask(out, t - k);
      break;
    case PerturbationKind::right:
      for (int k = 1; k <= spec.n; ++k) mask(out, t + k);
      break;
    case PerturbationKind::both:
      for (int k = 1; k <= spec.n; ++k) {
        mask(out, t - k);
        mask(out, t + k);
      }
      break;
    case PerturbationKind::permute: {
      std::vector<int> order(instance.words.size());
      std::iota(order.begin(), order.end(), 0);
      Xoshiro256 rng(seed);
      rng.shuffle(std::span(order));
      for (std::size_t i = 0; i < order.size(); ++i) {
        out.words[i] = instance.words[static_cast<std::size_t>(order[i])];
        if (order[i] == t) out.target_index = static_cast<int>(i);
      }
      out.source_words = out.words;
      break;
    }
  }
  return out;
}

PerturbedInstance coalition_mask(const ProbingInstance& instance, Coalition coalition) {
  PerturbedInstance out = start_from(instance, coalition.name(), 0);
  const int n = static_cast<int>(instance.words.size());
  for (int i = 0; i < n; ++i) {
    if (!coalition.contains(player_for_offset(i - instance.target_index))) mask(out, i);
  }
  return out;
}

PerturbedInstance perturb(const ProbingInstance& instance, const Masking& masking,
                          std::uint64_t seed) {
  if (const auto* spec = std::get_if<PerturbationSpec>(&masking)) return apply(instance, *spec, seed);
  return coalition_mask(instance, std::get<Coalition>(masking));
}

CharSequence char_mask(const PerturbedInstance& instance) {
  CharSequence out;
  for (std::size_t i = 0; i < instance.source_words.size(); ++i) {
    const std::u32string word = utf8_decode(instance.source_words[i]);
    if (word.find(kCharMask) != std::u32string::npos) {
      throw DataError("word '" + instance.source_words[i] + "' contains the reserved mask character");
    }
    if (i > 0) out.chars.push_back(U' ');
    const int begin = static_cast<int>(out.chars.size());
    if (instance.is_masked(static_cast<int>(i))) {
      out.chars.append(word.size(), kCharMask);
    } else {
      out.chars += word;
    }
    out.word_spans.emplace_back(begin, static_cast<int>(out.chars.size()));
  }
  return out;
}

}  // namespace morphoprobe
