#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "morphoprobe/sampler.hpp"

namespace morphoprobe {

// Abstract mask symbol in word sequences; embedding backends translate it to the
// model's own mask token.
inline constexpr std::string_view kMaskSentinel = "⟨MASK⟩";

// Reserved character that replaces each character of a masked word in the
// character-level input (first code point of the Unicode private use area).
inline constexpr char32_t kCharMask = U'\uE000';

enum class PerturbationKind { original, targ, left, right, both, permute };

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::original;
  int n = 0;  // context width for left/right/both

  static PerturbationSpec original() { return {PerturbationKind::original, 0}; }
  static PerturbationSpec targ() { return {PerturbationKind::targ, 0}; }
  static PerturbationSpec left(int n) { return {PerturbationKind::left, n}; }
  static PerturbationSpec right(int n) { return {PerturbationKind::right, n}; }
  static PerturbationSpec both(int n) { return {PerturbationKind::both, n}; }
  static PerturbationSpec permute() { return {PerturbationKind::permute, 0}; }

  // "original", "targ", "l2", "r2", "b2", "permute"
  static PerturbationSpec parse(std::string_view name);
  std::string name() const;
  void validate() const;

  bool operator==(const PerturbationSpec&) const = default;
};

// The nine positional players, in bit order: -4 or further left, -3, -2, -1,
// the target, 1, 2, 3, and 4 or further right.
inline constexpr int kPlayerCount = 9;
inline constexpr std::uint32_t kFullCoalition = (1u << kPlayerCount) - 1;

// Player (0..8) owning the word at `offset` from the target.
constexpr int player_for_offset(int offset) noexcept {
  return offset <= -4 ? 0 : (offset >= 4 ? 8 : offset + 4);
}
// "-4-", "-3", ..., "0", ..., "4+"
std::string player_name(int player);

struct Coalition {
  std::uint32_t members = kFullCoalition;  // bit p set: player p is present (unmasked)

  static Coalition full() { return {kFullCoalition}; }
  static Coalition none() { return {0}; }
  bool contains(int player) const noexcept { return (members >> player) & 1u; }
  int size() const noexcept;
  std::string name() const;  // "c" + 3-digit zero-padded bitmask

  bool operator==(const Coalition&) const = default;
};

using Masking = std::variant<PerturbationSpec, Coalition>;
std::string masking_name(const Masking& masking);
// Inverse of masking_name: "c000".."c511" or a perturbation name.
Masking parse_masking(std::string_view name);

struct PerturbedInstance {
  std::vector<std::string> words;         // masked words replaced by kMaskSentinel
  std::vector<std::string> source_words;  // words before masking (after any permutation)
  std::vector<int> masked_positions;      // sorted
  int target_index = 0;
  std::string label;
  std::string provenance;
  std::uint64_t seed = 0;

  bool is_masked(int position) const;
  bool operator==(const PerturbedInstance&) const = default;
};

PerturbedInstance apply(const ProbingInstance& instance, const PerturbationSpec& spec,
                        std::uint64_t seed);

// Masks the words of every player absent from the coalition.
PerturbedInstance coalition_mask(const ProbingInstance& instance, Coalition coalition);

PerturbedInstance perturb(const ProbingInstance& instance, const Masking& masking,
                          std::uint64_t seed);

// Character rendering for the character-level model: words joined by single
// spaces; each character of a masked word becomes kCharMask.
struct CharSequence {
  std::u32string chars;
  std::vector<std::pair<int, int>> word_spans;  // [begin, end) per word

  int first_char(int word) const { return word_spans.at(static_cast<std::size_t>(word)).first; }
  int last_char(int word) const { return word_spans.at(static_cast<std::size_t>(word)).second - 1; }
};

CharSequence char_mask(const PerturbedInstance& instance);

}  // namespace morphoprobe
