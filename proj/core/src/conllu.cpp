#include "morphoprobe/conllu.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "morphoprobe/errors.hpp"

namespace morphoprobe {

namespace {

constexpr std::array<std::string_view, 17> kUniversalPos = {
    "ADJ",  "ADP", "ADV",  "AUX",   "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

bool parse_positive_int(std::string_view text, int& out) {
  if (text.empty() || text.size() > 9) return false;
  int value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return false;
    value = value * 10 + (c - '0');
  }
  out = value;
  return value >= 1;
}

std::string_view trim_comment(std::string_view line) {
  line.remove_prefix(1);
  while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
  return line;
}

class BlockBuilder {
 public:
  BlockBuilder(std::string_view language, std::string_view treebank_id, Split split)
      : language_(language), treebank_id_(treebank_id), split_(split) {}

  void comment(std::string_view text) {
    text = trim_comment(text);
    constexpr std::string_view key = "sent_id";
    if (text.substr(0, key.size()) != key) return;
    text.remove_prefix(key.size());
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    if (text.empty() || text.front() != '=') return;
    text.remove_prefix(1);
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
    sent_id_ = std::string(text);
  }

  void token_line(std::string_view line, std::size_t line_no) {
    const auto cols = split_tabs(line);
    if (cols.size() != 10) {
      throw ParseError("expected 10 tab-separated columns, found " + std::to_string(cols.size()),
                       line_no);
    }
    const std::string_view id = cols[0];
    if (const auto dash = id.find('-'); dash != std::string_view::npos) {
      int lo = 0;
      int hi = 0;
      if (!parse_positive_int(id.substr(0, dash), lo) ||
          !parse_positive_int(id.substr(dash + 1), hi) || hi < lo) {
        throw ParseError("malformed multiword range id '" + std::string(id) + "'", line_no);
      }
      mw_lo_ = lo;
      mw_hi_ = hi;
      return;
    }
    if (id.find('.') != std::string_view::npos) return;  // empty node

    int index = 0;
    if (!parse_positive_int(id, index)) {
      throw ParseError("malformed token id '" + std::string(id) + "'", line_no);
    }
    const int expected = static_cast<int>(tokens_.size()) + 1;
    if (index != expected) {
      throw ParseError("token id " + std::to_string(index) + " out of sequence (expected " +
                           std::to_string(expected) + ")",
                       line_no);
    }
    TokenRecord tok;
    tok.index = index;
    tok.form = cols[1];
    tok.lemma = cols[2];
    tok.upos = cols[3];
    if (!is_universal_pos(tok.upos) && tok.upos != "_") {
      throw ParseError("unknown UPOS tag '" + tok.upos + "'", line_no);
    }
    tok.xpos = cols[4];
    try {
      tok.feats = parse_feats(cols[5]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    tok.head = cols[6];
    tok.deprel = cols[7];
    tok.deps = cols[8];
    tok.misc = cols[9];
    tok.is_multiword_part = index >= mw_lo_ && index <= mw_hi_;
    tokens_.push_back(std::move(tok));
  }

  bool has_content() const noexcept { return !tokens_.empty(); }

  SentenceRecord finish(std::size_t ordinal) {
    SentenceRecord s;
    s.tokens = std::move(tokens_);
    s.language = language_;
    s.treebank_id = treebank_id_;
    s.split = split_;
    s.sent_id = sent_id_.empty() ? std::string(to_string(split_)) + "-" + std::to_string(ordinal)
                                 : std::move(sent_id_);
    tokens_.clear();
    sent_id_.clear();
    mw_lo_ = mw_hi_ = 0;
    return s;
  }

 private:
  std::string language_;
  std::string treebank_id_;
  Split split_;
  std::vector<TokenRecord> tokens_;
  std::string sent_id_;
  int mw_lo_ = 0;
  int mw_hi_ = 0;
};

}  // namespace

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::size_t& SplitCounts::operator[](Split s) noexcept {
  return s == Split::train ? train : (s == Split::dev ? dev : test);
}

std::size_t SplitCounts::operator[](Split s) const noexcept {
  return s == Split::train ? train : (s == Split::dev ? dev : test);
}

bool is_universal_pos(std::string_view tag) noexcept {
  return std::find(kUniversalPos.begin(), kUniversalPos.end(), tag) != kUniversalPos.end();
}

FeatureMap parse_feats(std::string_view column) {
  FeatureMap feats;
  if (column.empty() || column == "_") return feats;
  std::size_t start = 0;
  while (start <= column.size()) {
    auto bar = column.find('|', start);
    if (bar == std::string_view::npos) bar = column.size();
    const auto entry = column.substr(start, bar - start);
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("feature entry '" + std::string(entry) + "' has no '='");
    }
    const auto name = entry.substr(0, eq);
    const auto value = entry.substr(eq + 1);
    if (name.empty() || value.empty()) {
      throw ParseError("feature entry '" + std::string(entry) + "' has an empty name or value");
    }
    feats[std::string(name)] = std::string(value);
    start = bar + 1;
  }
  return feats;
}

std::string format_feats(const FeatureMap& feats) {
  if (feats.empty()) return "_";
  std::string out;
  for (const auto& [name, value] : feats) {
    if (!out.empty()) out += '|';
    out += name;
    out += '=';
    out += value;
  }
  return out;
}

void validate_utf8(std::string_view text, std::size_t line) {
  const auto* p = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  auto fail = [&](std::size_t at) {
    std::string where = "byte offset " + std::to_string(at);
    if (line > 0) where = "line " + std::to_string(line) + ", " + where;
    throw EncodingError("invalid UTF-8 at " + where);
  };
  while (i < n) {
    const unsigned char c = p[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      fail(i);
    }
    if (i + len > n) fail(i);
    for (std::size_t k = 1; k < len; ++k) {
      if ((p[i + k] & 0xC0) != 0x80) fail(i);
      cp = (cp << 6) | (p[i + k] & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                          (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail(i);
    i += len;
  }
}

std::vector<SentenceRecord> parse_conllu(std::istream& in, std::string_view language,
                                         std::string_view treebank_id, Split split) {
  std::vector<SentenceRecord> out;
  BlockBuilder block(language, treebank_id, split);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    validate_utf8(line, line_no);
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (line.empty()) {
      if (block.has_content()) out.push_back(block.finish(out.size() + 1));
      continue;
    }
    if (line.front() == '#') {
      block.comment(line);
      continue;
    }
    block.token_line(line, line_no);
  }
  if (block.has_content()) out.push_back(block.finish(out.size() + 1));
  return out;
}

std::vector<SentenceRecord> parse_conllu(std::string_view text, std::string_view language,
                                         std::string_view treebank_id, Split split) {
  std::istringstream in{std::string(text)};
  return parse_conllu(in, language, treebank_id, split);
}

std::string to_conllu(const SentenceRecord& sentence) {
  std::string out = "# sent_id = " + sentence.sent_id + "\n";
  for (const auto& t : sentence.tokens) {
    out += std::to_string(t.index);
    for (const std::string* col : {&t.form, &t.lemma, &t.upos, &t.xpos}) {
      out += '\t';
      out += *col;
    }
    out += '\t';
    out += format_feats(t.feats);
    for (const std::string* col : {&t.head, &t.deprel, &t.deps, &t.misc}) {
      out += '\t';
      out += *col;
    }
    out += '\n';
  }
  out += '\n';
  return out;
}

Treebank read_treebank_dir(const std::filesystem::path& dir, std::string_view language) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw DataError("treebank directory not found: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".conllu") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  Treebank tb;
  tb.language = language;
  tb.treebank_id = fs::path(dir).lexically_normal().filename().string();
  if (tb.treebank_id.empty()) tb.treebank_id = fs::path(dir).parent_path().filename().string();
  for (const auto& file : files) {
    const std::string name = file.stem().string();
    std::optional<Split> split;
    for (Split s : kAllSplits) {
      if (name.find("-" + std::string(to_string(s))) != std::string::npos ||
          name.find("_" + std::string(to_string(s))) != std::string::npos ||
          name == to_string(s)) {
        split = s;
      }
    }
    if (!split) continue;
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    try {
      auto sentences = parse_conllu(in, language, tb.treebank_id, *split);
      std::move(sentences.begin(), sentences.end(), std::back_inserter(tb.sentences));
    } catch (const ParseError& e) {
      throw ParseError(file.string() + ": " + e.what());
    }
  }
  if (tb.sentences.empty()) {
    throw DataError("no train/dev/test CoNLL-U files in " + dir.string());
  }
  return tb;
}

Corpus merge_treebanks(const std::vector<Treebank>& treebanks) {
  if (treebanks.empty()) throw ConfigError("merge_treebanks: no treebanks given");
  Corpus corpus;
  corpus.language = treebanks.front().language;
  for (const auto& tb : treebanks) {
    if (tb.language != corpus.language) {
      throw ConfigError("cannot merge treebanks of different languages: '" + corpus.language +
                        "' and '" + tb.language + "'");
    }
    for (const auto& s : tb.sentences) {
      if (s.language != corpus.language) {
        throw ConfigError("sentence " + s.sent_id + " has language '" + s.language + "'");
      }
      corpus.sentences.push_back(s);
      ++corpus.counts[s.split];
    }
  }
  return corpus;
}

CorpusStats corpus_stats(const Corpus& corpus, const std::vector<std::string>& features) {
  CorpusStats stats;
  // (form, upos) -> feature -> distinct values
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::set<std::string>>>
      analyses;
  for (const auto& s : corpus.sentences) {
    ++stats.sentences[s.split];
    stats.tokens += s.tokens.size();
    for (const auto& t : s.tokens) {
      for (const auto& [name, value] : t.feats) ++stats.feature_inventory[name][value];
      auto& entry = analyses[{t.form, t.upos}];
      for (const auto& f : features) {
        if (auto it = t.feats.find(f); it != t.feats.end()) entry[f].insert(it->second);
      }
    }
  }
  const auto n_sent = stats.sentences.total();
  stats.mean_sentence_length =
      n_sent == 0 ? 0.0 : static_cast<double>(stats.tokens) / static_cast<double>(n_sent);
  stats.distinct_form_pos = analyses.size();
  for (const auto& [key, per_feature] : analyses) {
    const bool ambiguous = std::any_of(per_feature.begin(), per_feature.end(),
                                       [](const auto& kv) { return kv.second.size() >= 2; });
    if (ambiguous) ++stats.ambiguous_form_pos;
  }
  stats.ambiguity_rate = stats.distinct_form_pos == 0
                             ? 0.0
                             : static_cast<double>(stats.ambiguous_form_pos) /
                                   static_cast<double>(stats.distinct_form_pos);
  return stats;
}

}  // namespace morphoprobe
