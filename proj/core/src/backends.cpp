#include <chrono>
#include <cmath>
#include <cstring>
#include <mutex>
#include <sstream>
#include <thread>

#include "morphoprobe/backends.hpp"
#include "morphoprobe/errors.hpp"
#include "morphoprobe/rng.hpp"
#include "morphoprobe/utf8.hpp"

// After Eigen: the resolver headers pulled in here define a `_res` macro.
#include <httplib.h>

namespace morphoprobe {

double Xoshiro256::normal() noexcept {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// ----------------------------------------------------------------- static --

StaticVectors::StaticVectors(int dim, std::unordered_map<std::string, std::vector<float>> table)
    : dim_(dim), table_(std::move(table)) {
  for (const auto& [word, v] : table_) {
    if (static_cast<int>(v.size()) != dim_) throw IntegrityError("vector for '" + word + "' has wrong size");
  }
}

StaticVectors StaticVectors::read_vec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word vectors " + path.string());
  std::size_t count = 0;
  int dim = 0;
  std::string header;
  std::getline(in, header);
  {
    std::istringstream hs(header);
    if (!(hs >> count >> dim) || dim <= 0) throw ParseError(path.string() + ": bad .vec header", 1);
  }
  std::unordered_map<std::string, std::vector<float>> table;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<float> v(static_cast<std::size_t>(dim));
    for (auto& x : v) {
      if (!(ls >> x)) throw ParseError(path.string() + ": expected " + std::to_string(dim) + " values", line_no);
    }
    table.emplace(std::move(word), std::move(v));
  }
  if (table.size() != count) {
    throw ParseError(path.string() + ": header declares " + std::to_string(count) + " vectors, found " +
                     std::to_string(table.size()));
  }
  return StaticVectors(dim, std::move(table));
}

const std::vector<float>* StaticVectors::find(const std::string& word) const {
  const auto it = table_.find(word);
  return it == table_.end() ? nullptr : &it->second;
}

StaticBackend::StaticBackend(std::string model_id, std::shared_ptr<const StaticVectors> vectors)
    : model_id_(std::move(model_id)), vectors_(std::move(vectors)) {}

ModelInfo StaticBackend::info() const { return {model_id_, 1, vectors_->dim(), "whole-word"}; }

LayeredEmbedding StaticBackend::embed(const EmbeddingRequest& request) const {
  request.validate();
  LayeredEmbedding e;
  e.n_layers = 1;
  e.dim = vectors_->dim();
  e.n_subwords = static_cast<int>(request.words.size());
  e.values.assign(static_cast<std::size_t>(e.n_subwords) * e.dim, 0.0f);
  for (int w = 0; w < e.n_subwords; ++w) {
    e.subword_token_map.push_back(w);
    if (request.is_masked(w)) continue;
    if (const auto* v = vectors_->find(request.words[static_cast<std::size_t>(w)])) {
      std::copy(v->begin(), v->end(), e.row(0, w).begin());
    }
  }
  return e;
}

// ----------------------------------------------------------------- random --

std::string_view to_string(RandomMode mode) noexcept {
  return mode == RandomMode::fully_random ? "fully_random" : "random_layers";
}

RandomMode parse_random_mode(std::string_view name) {
  if (name == "fully_random") return RandomMode::fully_random;
  if (name == "random_layers") return RandomMode::random_layers;
  throw ConfigError("unknown random-control mode '" + std::string(name) + "'");
}

std::vector<std::string> toy_wordpiece(const std::string& word, int piece_len) {
  const std::u32string chars = utf8_decode(word);
  std::vector<std::string> pieces;
  for (std::size_t i = 0; i < chars.size(); i += static_cast<std::size_t>(piece_len)) {
    const auto piece = utf8_encode(std::u32string_view(chars).substr(i, static_cast<std::size_t>(piece_len)));
    pieces.push_back(i == 0 ? piece : "##" + piece);
  }
  if (pieces.empty()) pieces.emplace_back("[UNK]");
  return pieces;
}

RandomControlBackend::RandomControlBackend(RandomControlConfig config) : config_(std::move(config)) {
  if (config_.n_layers < 1 || config_.dim < 1 || config_.piece_len < 1) {
    throw ConfigError("random-control backend needs positive n_layers, dim and piece_len");
  }
  if (config_.static_layer && config_.static_layer->dim() != config_.dim) {
    throw IntegrityError("static layer dimension differs from the random-control dimension");
  }
  if (config_.mode == RandomMode::random_layers) {
    const float scale = 1.0f / std::sqrt(static_cast<float>(config_.dim));
    for (int l = 1; l < config_.n_layers; ++l) {
      Xoshiro256 rng(derive_seed(config_.seed ^ 0x6c61796572ULL, static_cast<std::uint64_t>(l)));
      std::array<Eigen::MatrixXf, 3> m;
      for (auto& mat : m) {
        mat.resize(config_.dim, config_.dim);
        for (Eigen::Index i = 0; i < mat.size(); ++i) mat.data()[i] = static_cast<float>(rng.normal()) * scale;
      }
      mixing_.push_back(std::move(m));
    }
  }
}

ModelInfo RandomControlBackend::info() const {
  return {config_.model_id, config_.n_layers, config_.dim,
          "toy-wordpiece-" + std::to_string(config_.piece_len)};
}

std::vector<float> RandomControlBackend::piece_noise(const std::string& piece) const {
  Xoshiro256 rng(derive_seed(config_.seed, fnv1a64(piece)));
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.dim));
  std::vector<float> v(static_cast<std::size_t>(config_.dim));
  for (auto& x : v) x = static_cast<float>(rng.normal() * scale);
  return v;
}

LayeredEmbedding RandomControlBackend::embed(const EmbeddingRequest& request) const {
  request.validate();
  std::vector<std::string> pieces{"[CLS]"};
  std::vector<std::int32_t> map{-1};
  for (std::size_t w = 0; w < request.words.size(); ++w) {
    if (request.is_masked(static_cast<int>(w))) {
      pieces.emplace_back("[MASK]");
      map.push_back(static_cast<std::int32_t>(w));
      continue;
    }
    for (auto& p : toy_wordpiece(request.words[w], config_.piece_len)) {
      pieces.push_back(std::move(p));
      map.push_back(static_cast<std::int32_t>(w));
    }
  }
  pieces.emplace_back("[SEP]");
  map.push_back(-1);

  LayeredEmbedding e;
  e.n_layers = config_.n_layers;
  e.dim = config_.dim;
  e.n_subwords = static_cast<int>(pieces.size());
  e.subword_token_map = std::move(map);
  e.values.resize(static_cast<std::size_t>(e.n_layers) * e.n_subwords * e.dim);

  // Column j of `h` is the current vector of subword j.
  Eigen::MatrixXf h(config_.dim, e.n_subwords);
  for (int j = 0; j < e.n_subwords; ++j) {
    const std::vector<float>* fixed = nullptr;
    if (config_.mode == RandomMode::random_layers && config_.static_layer) {
      fixed = config_.static_layer->find(pieces[static_cast<std::size_t>(j)]);
    }
    if (fixed) {
      h.col(j) = Eigen::Map<const Eigen::VectorXf>(fixed->data(), config_.dim);
    } else {
      const auto noise = piece_noise(pieces[static_cast<std::size_t>(j)]);
      h.col(j) = Eigen::Map<const Eigen::VectorXf>(noise.data(), config_.dim);
    }
  }
  const auto store = [&](int layer) {
    for (int j = 0; j < e.n_subwords; ++j) {
      auto dst = e.row(layer, j);
      Eigen::Map<Eigen::VectorXf>(dst.data(), config_.dim) = h.col(j);
    }
  };
  store(0);
  for (int l = 1; l < config_.n_layers; ++l) {
    if (config_.mode == RandomMode::random_layers) {
      const auto& [a, b, c] = mixing_[static_cast<std::size_t>(l - 1)];
      const Eigen::Index n = h.cols();
      Eigen::MatrixXf prev = Eigen::MatrixXf::Zero(config_.dim, n);
      Eigen::MatrixXf next = Eigen::MatrixXf::Zero(config_.dim, n);
      if (n > 1) {
        prev.rightCols(n - 1) = h.leftCols(n - 1);
        next.leftCols(n - 1) = h.rightCols(n - 1);
      }
      const Eigen::MatrixXf pre = a * h + b * prev + c * next;
      h += static_cast<float>(config_.context_mix) * pre.array().tanh().matrix();
    }
    store(l);
  }
  return e;
}

// ------------------------------------------------------------------- http --

Json encode_embed_response(const LayeredEmbedding& embedding) {
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(embedding.values.data());
  return Json{{"n_layers", embedding.n_layers},
              {"dim", embedding.dim},
              {"subword_token_map", embedding.subword_token_map},
              {"vectors_b64", base64_encode({bytes, embedding.values.size() * sizeof(float)})}};
}

LayeredEmbedding decode_embed_response(const Json& body) {
  LayeredEmbedding e;
  try {
    e.n_layers = body.at("n_layers").get<int>();
    e.dim = body.at("dim").get<int>();
    e.subword_token_map = body.at("subword_token_map").get<std::vector<std::int32_t>>();
    const auto bytes = base64_decode(body.at("vectors_b64").get<std::string>());
    if (bytes.size() % sizeof(float) != 0) throw IntegrityError("vector payload is not float32-aligned");
    e.values.resize(bytes.size() / sizeof(float));
    std::memcpy(e.values.data(), bytes.data(), bytes.size());
  } catch (const Json::exception& ex) {
    throw ParseError(std::string("malformed embedding response: ") + ex.what());
  }
  e.n_subwords = static_cast<int>(e.subword_token_map.size());
  return e;
}

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)), in_flight_(std::max(1, std::min(config_.max_in_flight, 1024))) {}

namespace {

httplib::Client make_client(const HttpBackendConfig& c) {
  httplib::Client client(c.host, c.port);
  const auto secs = static_cast<time_t>(c.timeout_s);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  return client;
}

}  // namespace

ModelInfo HttpBackend::info() const {
  auto client = make_client(config_);
  auto res = client.Get("/v1/model");
  if (!res) throw TransportError("GET /v1/model: " + httplib::to_string(res.error()), 0, 1, 0.0);
  if (res->status != 200) {
    throw TransportError("GET /v1/model returned " + std::to_string(res->status), res->status, 1, 0.0);
  }
  try {
    const auto body = Json::parse(res->body);
    return {body.at("model_id").get<std::string>(), body.at("n_layers").get<int>(),
            body.at("dim").get<int>(), body.value("tokenizer", std::string("remote"))};
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed /v1/model response: ") + e.what());
  }
}

LayeredEmbedding HttpBackend::embed(const EmbeddingRequest& request) const {
  request.validate();
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  const std::string body = request.canonical_json();
  double retry_after = 0.0;
  int status = 0;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    auto client = make_client(config_);
    auto res = client.Post("/v1/embed", body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      status = 0;
      retry_after = 0.0;
    } else {
      status = res->status;
      if (status == 200) {
        LayeredEmbedding e;
        try {
          e = decode_embed_response(Json::parse(res->body));
        } catch (const Json::exception& ex) {
          throw ParseError(std::string("malformed embedding response: ") + ex.what());
        }
        e.validate(request);
        return e;
      }
      if (status == 400) throw DataError("embedding service rejected request: " + res->body);
      if (status == 404) throw NotFoundError("embedding service does not serve model '" + request.model_id + "'");
      last_error = "status " + std::to_string(status);
      retry_after = 0.0;
      if (res->has_header("Retry-After")) {
        try {
          retry_after = std::stod(res->get_header_value("Retry-After"));
        } catch (...) {
          retry_after = 0.0;
        }
      }
      if (status != 503) break;
    }
    if (attempt < config_.max_attempts) {
      const double wait = std::min(config_.max_retry_wait_s, std::max(retry_after, 0.05 * attempt));
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
  }
  throw TransportError("POST /v1/embed failed after " + std::to_string(config_.max_attempts) +
                           " attempt(s): " + last_error,
                       status, config_.max_attempts, retry_after);
}

// ------------------------------------------------------------------ cache --

CachedBackend::CachedBackend(std::shared_ptr<const EmbeddingBackend> inner) : inner_(std::move(inner)) {}

LayeredEmbedding CachedBackend::embed(const EmbeddingRequest& request) const {
  const std::string key = to_hex(request_hash(request));
  {
    std::shared_lock lock(mutex_);
    if (const auto it = cache_.find(key); it != cache_.end()) {
      ++hits_;
      return it->second;
    }
  }
  ++misses_;
  LayeredEmbedding e = inner_->embed(request);
  std::unique_lock lock(mutex_);
  return cache_.try_emplace(key, std::move(e)).first->second;
}

}  // namespace morphoprobe
