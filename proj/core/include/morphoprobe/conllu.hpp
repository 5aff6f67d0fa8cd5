#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace morphoprobe {

enum class Split { train, dev, test };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view name);
inline constexpr Split kAllSplits[] = {Split::train, Split::dev, Split::test};

// Feature name -> value. Ordered so serialization is canonical.
using FeatureMap = std::map<std::string, std::string>;

struct TokenRecord {
  int index = 0;  // 1-based CoNLL-U ID
  std::string form;
  std::string lemma;
  std::string upos;
  std::string xpos = "_";
  FeatureMap feats;
  std::string head = "_";
  std::string deprel = "_";
  std::string deps = "_";
  std::string misc = "_";
  bool is_multiword_part = false;

  bool operator==(const TokenRecord&) const = default;
};

struct SentenceRecord {
  std::vector<TokenRecord> tokens;
  std::string language;
  std::string treebank_id;
  Split split = Split::train;
  std::string sent_id;

  bool operator==(const SentenceRecord&) const = default;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;

  std::size_t& operator[](Split s) noexcept;
  std::size_t operator[](Split s) const noexcept;
  std::size_t total() const noexcept { return train + dev + test; }
};

struct Corpus {
  std::string language;
  std::vector<SentenceRecord> sentences;
  SplitCounts counts;
};

// The 17 universal POS tags.
bool is_universal_pos(std::string_view tag) noexcept;

// "_" or empty -> {}; otherwise "A=x|B=y". Multi-values ("Fem,Masc") are kept verbatim.
FeatureMap parse_feats(std::string_view column);
std::string format_feats(const FeatureMap& feats);

std::vector<SentenceRecord> parse_conllu(std::istream& in, std::string_view language,
                                         std::string_view treebank_id, Split split);
std::vector<SentenceRecord> parse_conllu(std::string_view text, std::string_view language,
                                         std::string_view treebank_id, Split split);

// Token lines plus a "# sent_id" comment, terminated by a blank line.
std::string to_conllu(const SentenceRecord& sentence);

struct Treebank {
  std::string language;
  std::string treebank_id;
  std::vector<SentenceRecord> sentences;
};

// Reads every "*.conllu" file in a UD treebank directory. The split comes from the
// file name ("-train", "-dev", "-test"); the treebank id is the directory name.
Treebank read_treebank_dir(const std::filesystem::path& dir, std::string_view language);

Corpus merge_treebanks(const std::vector<Treebank>& treebanks);

struct CorpusStats {
  SplitCounts sentences;
  std::size_t tokens = 0;
  double mean_sentence_length = 0.0;
  // feature name -> value -> occurrence count
  std::map<std::string, std::map<std::string, std::size_t>> feature_inventory;
  std::size_t distinct_form_pos = 0;
  std::size_t ambiguous_form_pos = 0;
  double ambiguity_rate = 0.0;
};

inline const std::vector<std::string> kDefaultAmbiguityFeatures = {"Case", "Gender", "Number",
                                                                   "Tense"};

// Ambiguity rate: fraction of (form, UPOS) pairs observed with two or more distinct
// values of any of `features`.
CorpusStats corpus_stats(const Corpus& corpus,
                         const std::vector<std::string>& features = kDefaultAmbiguityFeatures);

// Throws EncodingError with the byte offset of the first invalid sequence.
void validate_utf8(std::string_view text, std::size_t line = 0);

}  // namespace morphoprobe
