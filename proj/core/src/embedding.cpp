#include "morphoprobe/embedding.hpp"

#include <algorithm>
#include <map>

#include <openssl/evp.h>

#include "morphoprobe/errors.hpp"

namespace morphoprobe {

void EmbeddingRequest::validate() const {
  const int n = static_cast<int>(words.size());
  for (std::size_t i = 0; i < masked_positions.size(); ++i) {
    const int p = masked_positions[i];
    if (p < 0 || p >= n) {
      throw DataError("masked position " + std::to_string(p) + " outside [0, " + std::to_string(n) + ")");
    }
    if (i > 0 && masked_positions[i - 1] >= p) throw DataError("masked positions must be sorted and unique");
  }
}

bool EmbeddingRequest::is_masked(int position) const {
  return std::binary_search(masked_positions.begin(), masked_positions.end(), position);
}

Json EmbeddingRequest::to_json() const {
  return Json{{"words", words}, {"masked_positions", masked_positions}, {"model_id", model_id}};
}

EmbeddingRequest EmbeddingRequest::from_json(const Json& j) {
  EmbeddingRequest r;
  try {
    r.words = j.at("words").get<std::vector<std::string>>();
    r.masked_positions = j.at("masked_positions").get<std::vector<int>>();
    r.model_id = j.at("model_id").get<std::string>();
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed embedding request: ") + e.what());
  }
  return r;
}

std::string EmbeddingRequest::canonical_json() const { return to_json().dump(); }

EmbeddingRequest make_request(const PerturbedInstance& instance, std::string model_id) {
  EmbeddingRequest r;
  r.words = instance.source_words;
  r.masked_positions = instance.masked_positions;
  r.model_id = std::move(model_id);
  return r;
}

RequestId sha256(std::string_view bytes) {
  RequestId out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw Error("SHA-256 computation failed");
  }
  return out;
}

RequestId request_hash(const EmbeddingRequest& request) { return sha256(request.canonical_json()); }

std::string to_hex(const RequestId& id) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto b : id) {
    out += digits[b >> 4];
    out += digits[b & 0xF];
  }
  return out;
}

RequestId id_from_hex(std::string_view hex) {
  if (hex.size() != 64) throw ParseError("request id must be 64 hex digits");
  const auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw ParseError(std::string("invalid hex digit '") + c + "'");
  };
  RequestId id{};
  for (std::size_t i = 0; i < id.size(); ++i) {
    id[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return id;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ParseError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ParseError("invalid base64 payload");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

std::span<const float> LayeredEmbedding::row(int layer, int subword) const {
  const auto offset = (static_cast<std::size_t>(layer) * n_subwords + subword) * dim;
  return {values.data() + offset, static_cast<std::size_t>(dim)};
}

std::span<float> LayeredEmbedding::row(int layer, int subword) {
  const auto offset = (static_cast<std::size_t>(layer) * n_subwords + subword) * dim;
  return {values.data() + offset, static_cast<std::size_t>(dim)};
}

std::vector<int> LayeredEmbedding::subwords_of(int word) const {
  std::vector<int> out;
  for (int s = 0; s < n_subwords; ++s) {
    if (subword_token_map[static_cast<std::size_t>(s)] == word) out.push_back(s);
  }
  return out;
}

void LayeredEmbedding::validate(const EmbeddingRequest& request) const {
  if (n_layers <= 0 || dim <= 0 || n_subwords < 0) throw IntegrityError("non-positive tensor shape");
  if (values.size() != static_cast<std::size_t>(n_layers) * n_subwords * dim) {
    throw IntegrityError("tensor has " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(static_cast<std::size_t>(n_layers) * n_subwords * dim));
  }
  if (subword_token_map.size() != static_cast<std::size_t>(n_subwords)) {
    throw IntegrityError("alignment length differs from subword count");
  }
  const int n_words = static_cast<int>(request.words.size());
  std::vector<int> per_word(static_cast<std::size_t>(n_words), 0);
  int previous = -1;
  for (auto w : subword_token_map) {
    if (w == -1) continue;
    if (w < 0 || w >= n_words) throw IntegrityError("alignment refers to word " + std::to_string(w));
    if (w < previous) throw IntegrityError("alignment is not monotone");
    previous = w;
    ++per_word[static_cast<std::size_t>(w)];
  }
  for (int w = 0; w < n_words; ++w) {
    const int count = per_word[static_cast<std::size_t>(w)];
    if (count == 0) throw IntegrityError("word " + std::to_string(w) + " has no subwords");
    if (request.is_masked(w) && count != 1) {
      throw IntegrityError("masked word " + std::to_string(w) + " maps to " + std::to_string(count) +
                           " subwords");
    }
  }
}

std::string_view to_string(Pooling pooling) noexcept {
  return pooling == Pooling::first ? "first" : "last";
}

Pooling parse_pooling(std::string_view name) {
  if (name == "first") return Pooling::first;
  if (name == "last") return Pooling::last;
  throw ConfigError("unknown pooling '" + std::string(name) + "'");
}

LayerMatrix pool_subwords(const LayeredEmbedding& embedding, int word, Pooling strategy) {
  int chosen = -1;
  for (int s = 0; s < embedding.n_subwords; ++s) {
    if (embedding.subword_token_map[static_cast<std::size_t>(s)] != word) continue;
    chosen = s;
    if (strategy == Pooling::first) break;
  }
  if (chosen < 0) throw DataError("word index " + std::to_string(word) + " is not in the alignment");
  LayerMatrix out(embedding.n_layers, embedding.dim);
  for (int l = 0; l < embedding.n_layers; ++l) {
    const auto r = embedding.row(l, chosen);
    std::copy(r.begin(), r.end(), out.row(l).data());
  }
  return out;
}

Fertility fertility(std::span<const AlignmentSample> samples) {
  Fertility f;
  std::size_t target_subwords = 0;
  for (const auto& sample : samples) {
    std::map<std::int32_t, std::size_t> per_word;
    for (auto w : sample.subword_token_map) {
      if (w >= 0) ++per_word[w];
    }
    f.words += per_word.size();
    for (const auto& [w, count] : per_word) f.subwords += count;
    if (auto it = per_word.find(sample.target_index); it != per_word.end()) {
      target_subwords += it->second;
      ++f.targets;
    }
  }
  f.overall = f.words == 0 ? 0.0 : static_cast<double>(f.subwords) / static_cast<double>(f.words);
  f.target = f.targets == 0 ? 0.0 : static_cast<double>(target_subwords) / static_cast<double>(f.targets);
  return f;
}

}  // namespace morphoprobe
