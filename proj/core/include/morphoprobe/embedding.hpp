#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "morphoprobe/json_io.hpp"
#include "morphoprobe/perturbation.hpp"

namespace morphoprobe {

struct EmbeddingRequest {
  std::vector<std::string> words;
  std::vector<int> masked_positions;  // sorted, unique, within [0, words.size())
  std::string model_id;

  void validate() const;
  bool is_masked(int position) const;
  Json to_json() const;
  static EmbeddingRequest from_json(const Json& j);
  // UTF-8, sorted keys, no whitespace.
  std::string canonical_json() const;

  bool operator==(const EmbeddingRequest&) const = default;
};

EmbeddingRequest make_request(const PerturbedInstance& instance, std::string model_id);

using RequestId = std::array<std::uint8_t, 32>;

// SHA-256 of the canonical JSON.
RequestId request_hash(const EmbeddingRequest& request);
RequestId sha256(std::string_view bytes);
std::string to_hex(const RequestId& id);
RequestId id_from_hex(std::string_view hex);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Per-request tensor of layer outputs, layer-major: values[(layer * n_subwords + subword) * dim + d].
struct LayeredEmbedding {
  int n_layers = 0;
  int n_subwords = 0;
  int dim = 0;
  std::vector<float> values;
  std::vector<std::int32_t> subword_token_map;  // word index, or -1 for special symbols

  std::span<const float> row(int layer, int subword) const;
  std::span<float> row(int layer, int subword);
  // Subword positions aligned to `word`, ascending.
  std::vector<int> subwords_of(int word) const;
  // Shape and alignment checks against the request that produced this tensor.
  void validate(const EmbeddingRequest& request) const;

  bool operator==(const LayeredEmbedding&) const = default;
};

enum class Pooling { first, last };
std::string_view to_string(Pooling pooling) noexcept;
Pooling parse_pooling(std::string_view name);

using LayerMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// [n_layers x dim]: the first or last subword row of `word` in every layer.
LayerMatrix pool_subwords(const LayeredEmbedding& embedding, int word, Pooling strategy);

struct ModelInfo {
  std::string model_id;
  int n_layers = 0;
  int dim = 0;
  std::string tokenizer;
};

// Contract shared by archive, HTTP, static-vector and random-control backends.
// Implementations are safe for concurrent calls to embed().
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual ModelInfo info() const = 0;
  virtual LayeredEmbedding embed(const EmbeddingRequest& request) const = 0;
};

struct AlignmentSample {
  std::vector<std::int32_t> subword_token_map;
  int target_index = 0;
};

struct Fertility {
  double overall = 0.0;  // subwords / words, special symbols excluded
  double target = 0.0;   // mean subword count of target words
  std::size_t words = 0;
  std::size_t subwords = 0;
  std::size_t targets = 0;
};

Fertility fertility(std::span<const AlignmentSample> samples);

}  // namespace morphoprobe
