#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "morphoprobe/embedding.hpp"

namespace morphoprobe {

// ---------------------------------------------------------------------------
// MPEB v1 archive
//
//   "MPEB" | u32 version | u32 metadata length | metadata JSON
//   then per record: 32-byte id | u32 n_subwords | i32[n_subwords] alignment |
//                    f32[n_layers * n_subwords * dim] (layer-major)
//
// All integers and floats are little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kArchiveVersion = 1;

class ArchiveWriter {
 public:
  ArchiveWriter(const std::filesystem::path& path, const ModelInfo& info, Json extra_metadata = {});
  ~ArchiveWriter();
  ArchiveWriter(const ArchiveWriter&) = delete;
  ArchiveWriter& operator=(const ArchiveWriter&) = delete;

  void add(const RequestId& id, const LayeredEmbedding& embedding);
  void add(const EmbeddingRequest& request, const LayeredEmbedding& embedding);
  std::size_t size() const noexcept { return ids_.size(); }
  // Flushes and closes; no records may be added afterwards.
  void finalize();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  ModelInfo info_;
  std::unordered_set<std::string> ids_;
  bool finalized_ = false;
};

// Read-only memory-mapped view of an archive.
class ArchiveReader {
 public:
  explicit ArchiveReader(const std::filesystem::path& path);
  ~ArchiveReader();
  ArchiveReader(const ArchiveReader&) = delete;
  ArchiveReader& operator=(const ArchiveReader&) = delete;

  const ModelInfo& info() const noexcept { return info_; }
  const Json& metadata() const noexcept { return metadata_; }
  std::size_t size() const noexcept { return index_.size(); }
  bool contains(const RequestId& id) const;
  // Throws NotFoundError with the hex id when absent.
  LayeredEmbedding get(const RequestId& id) const;
  std::vector<RequestId> ids() const;

 private:
  struct Entry {
    std::size_t offset;  // of the alignment array
    std::uint32_t n_subwords;
  };

  const std::uint8_t* data_ = nullptr;
  std::size_t size_ = 0;
  ModelInfo info_;
  Json metadata_;
  std::unordered_map<std::string, Entry> index_;
  std::vector<RequestId> order_;
};

class ArchiveBackend final : public EmbeddingBackend {
 public:
  explicit ArchiveBackend(const std::filesystem::path& path);
  ModelInfo info() const override { return reader_->info(); }
  LayeredEmbedding embed(const EmbeddingRequest& request) const override;
  const ArchiveReader& reader() const noexcept { return *reader_; }

 private:
  std::unique_ptr<ArchiveReader> reader_;
};

// ---------------------------------------------------------------------------
// Static word vectors (fastText ".vec" text format). One layer, one subword per
// word, no special symbols. Masked and out-of-vocabulary words embed as zeros.
// ---------------------------------------------------------------------------

class StaticVectors {
 public:
  static StaticVectors read_vec(const std::filesystem::path& path);
  StaticVectors(int dim, std::unordered_map<std::string, std::vector<float>> table);

  int dim() const noexcept { return dim_; }
  const std::vector<float>* find(const std::string& word) const;
  std::size_t size() const noexcept { return table_.size(); }

 private:
  int dim_;
  std::unordered_map<std::string, std::vector<float>> table_;
};

class StaticBackend final : public EmbeddingBackend {
 public:
  StaticBackend(std::string model_id, std::shared_ptr<const StaticVectors> vectors);
  ModelInfo info() const override;
  LayeredEmbedding embed(const EmbeddingRequest& request) const override;

 private:
  std::string model_id_;
  std::shared_ptr<const StaticVectors> vectors_;
};

// ---------------------------------------------------------------------------
// Random-control backend. Words are split by a toy subword tokenizer into pieces
// of at most `piece_len` characters ("walked" -> "wal", "##ked"); the sequence is
// wrapped in [CLS] ... [SEP] and a masked word becomes one [MASK] piece.
//
// fully_random:  every piece embeds as Gaussian noise seeded by (seed, piece),
//                replicated over all layers.
// random_layers: layer 0 is a static embedding table (falling back to the seeded
//                noise for pieces it lacks); each higher layer adds a randomly
//                initialized, untrained local mixing step
//                    h' = h + context_mix * tanh(A h[j] + B h[j-1] + C h[j+1]).
// ---------------------------------------------------------------------------

enum class RandomMode { fully_random, random_layers };
std::string_view to_string(RandomMode mode) noexcept;
RandomMode parse_random_mode(std::string_view name);

struct RandomControlConfig {
  std::string model_id = "random";
  RandomMode mode = RandomMode::fully_random;
  int n_layers = 13;
  int dim = 64;
  std::uint64_t seed = 0;
  int piece_len = 3;
  double context_mix = 1.0;
  std::shared_ptr<const StaticVectors> static_layer;  // random_layers only; optional
};

std::vector<std::string> toy_wordpiece(const std::string& word, int piece_len);

class RandomControlBackend final : public EmbeddingBackend {
 public:
  explicit RandomControlBackend(RandomControlConfig config);
  ModelInfo info() const override;
  LayeredEmbedding embed(const EmbeddingRequest& request) const override;

 private:
  std::vector<float> piece_noise(const std::string& piece) const;

  RandomControlConfig config_;
  // Per mixing layer: A, B, C (dim x dim each).
  std::vector<std::array<Eigen::MatrixXf, 3>> mixing_;
};

// ---------------------------------------------------------------------------
// HTTP client for the embedding service.
//
//   POST /v1/embed  {"model_id", "words", "masked_positions"}
//     -> {"n_layers", "dim", "subword_token_map", "vectors_b64"}
//   GET  /v1/model  -> {"model_id", "n_layers", "dim"}
//   400 malformed, 404 unknown model, 503 busy (Retry-After honoured).
// ---------------------------------------------------------------------------

Json encode_embed_response(const LayeredEmbedding& embedding);
LayeredEmbedding decode_embed_response(const Json& body);

struct HttpBackendConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string model_id;
  int max_in_flight = 4;
  int max_attempts = 3;
  double max_retry_wait_s = 5.0;
  double timeout_s = 60.0;
};

class HttpBackend final : public EmbeddingBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ModelInfo info() const override;
  LayeredEmbedding embed(const EmbeddingRequest& request) const override;

 private:
  HttpBackendConfig config_;
  mutable std::counting_semaphore<1024> in_flight_;
};

// Read-through cache keyed by request hash.
class CachedBackend final : public EmbeddingBackend {
 public:
  explicit CachedBackend(std::shared_ptr<const EmbeddingBackend> inner);
  ModelInfo info() const override { return inner_->info(); }
  LayeredEmbedding embed(const EmbeddingRequest& request) const override;
  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  std::shared_ptr<const EmbeddingBackend> inner_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::string, LayeredEmbedding> cache_;
  mutable std::atomic<std::size_t> hits_{0};
  mutable std::atomic<std::size_t> misses_{0};
};

// Throws IntegrityError when a backend disagrees with the registry's declared shape.
void check_model_info(const ModelInfo& expected, const ModelInfo& actual);

}  // namespace morphoprobe
