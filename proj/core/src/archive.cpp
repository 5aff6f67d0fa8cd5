#include <bit>
#include <cstring>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include "morphoprobe/backends.hpp"
#include "morphoprobe/errors.hpp"

namespace morphoprobe {

static_assert(std::endian::native == std::endian::little,
              "the MPEB reader and writer assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'P', 'E', 'B'};

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(const std::uint8_t* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

ModelInfo info_from_metadata(const Json& meta) {
  ModelInfo info;
  try {
    info.model_id = meta.at("model_id").get<std::string>();
    info.n_layers = meta.at("n_layers").get<int>();
    info.dim = meta.at("dim").get<int>();
    info.tokenizer = meta.at("tokenizer").get<std::string>();
  } catch (const Json::exception& e) {
    throw IntegrityError(std::string("archive metadata: ") + e.what());
  }
  if (info.n_layers <= 0 || info.dim <= 0) throw IntegrityError("archive metadata: non-positive shape");
  return info;
}

}  // namespace

ArchiveWriter::ArchiveWriter(const std::filesystem::path& path, const ModelInfo& info,
                             Json extra_metadata)
    : path_(path), info_(info) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw DataError("cannot create archive " + path.string());
  Json meta = extra_metadata.is_object() ? std::move(extra_metadata) : Json::object();
  meta["model_id"] = info.model_id;
  meta["n_layers"] = info.n_layers;
  meta["dim"] = info.dim;
  meta["tokenizer"] = info.tokenizer;
  const std::string text = meta.dump();
  out_.write(kMagic, 4);
  write_pod(out_, kArchiveVersion);
  write_pod(out_, static_cast<std::uint32_t>(text.size()));
  out_.write(text.data(), static_cast<std::streamsize>(text.size()));
}

ArchiveWriter::~ArchiveWriter() {
  if (!finalized_) {
    try {
      finalize();
    } catch (...) {
    }
  }
}

void ArchiveWriter::add(const RequestId& id, const LayeredEmbedding& embedding) {
  if (finalized_) throw Error("archive already finalized");
  if (embedding.n_layers != info_.n_layers || embedding.dim != info_.dim) {
    throw IntegrityError("embedding shape " + std::to_string(embedding.n_layers) + "x" +
                         std::to_string(embedding.dim) + " does not match archive " +
                         std::to_string(info_.n_layers) + "x" + std::to_string(info_.dim));
  }
  if (embedding.values.size() !=
          static_cast<std::size_t>(embedding.n_layers) * embedding.n_subwords * embedding.dim ||
      embedding.subword_token_map.size() != static_cast<std::size_t>(embedding.n_subwords)) {
    throw IntegrityError("inconsistent embedding tensor");
  }
  if (!ids_.insert(to_hex(id)).second) throw IntegrityError("duplicate archive record " + to_hex(id));
  out_.write(reinterpret_cast<const char*>(id.data()), static_cast<std::streamsize>(id.size()));
  write_pod(out_, static_cast<std::uint32_t>(embedding.n_subwords));
  out_.write(reinterpret_cast<const char*>(embedding.subword_token_map.data()),
             static_cast<std::streamsize>(embedding.subword_token_map.size() * sizeof(std::int32_t)));
  out_.write(reinterpret_cast<const char*>(embedding.values.data()),
             static_cast<std::streamsize>(embedding.values.size() * sizeof(float)));
  if (!out_) throw DataError("write failed: " + path_.string());
}

void ArchiveWriter::add(const EmbeddingRequest& request, const LayeredEmbedding& embedding) {
  embedding.validate(request);
  add(request_hash(request), embedding);
}

void ArchiveWriter::finalize() {
  if (finalized_) return;
  finalized_ = true;
  out_.flush();
  if (!out_) throw DataError("flush failed: " + path_.string());
  out_.close();
}

ArchiveReader::ArchiveReader(const std::filesystem::path& path) {
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) throw DataError("cannot open archive " + path.string());
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    throw DataError("cannot stat archive " + path.string());
  }
  size_ = static_cast<std::size_t>(st.st_size);
  if (size_ > 0) {
    void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
    if (p == MAP_FAILED) {
      ::close(fd);
      throw DataError("cannot map archive " + path.string());
    }
    data_ = static_cast<const std::uint8_t*>(p);
  }
  ::close(fd);

  const auto fail = [&](const std::string& why) -> void {
    throw IntegrityError(path.string() + ": " + why);
  };
  try {
    if (size_ < 12 || std::memcmp(data_, kMagic, 4) != 0) fail("not an MPEB archive");
    const auto version = read_pod<std::uint32_t>(data_ + 4);
    if (version != kArchiveVersion) fail("unsupported version " + std::to_string(version));
    const auto meta_len = read_pod<std::uint32_t>(data_ + 8);
    if (12 + static_cast<std::size_t>(meta_len) > size_) fail("truncated metadata");
    try {
      metadata_ = Json::parse(reinterpret_cast<const char*>(data_ + 12),
                              reinterpret_cast<const char*>(data_ + 12 + meta_len));
    } catch (const Json::exception& e) {
      fail(std::string("metadata is not JSON: ") + e.what());
    }
    info_ = info_from_metadata(metadata_);

    std::size_t pos = 12 + meta_len;
    const std::size_t floats_per_subword = static_cast<std::size_t>(info_.n_layers) * info_.dim;
    while (pos < size_) {
      if (pos + 36 > size_) fail("truncated record header at offset " + std::to_string(pos));
      RequestId id{};
      std::memcpy(id.data(), data_ + pos, id.size());
      const auto n_sub = read_pod<std::uint32_t>(data_ + pos + 32);
      const std::size_t body =
          n_sub * sizeof(std::int32_t) + static_cast<std::size_t>(n_sub) * floats_per_subword * sizeof(float);
      if (pos + 36 + body > size_) fail("truncated record at offset " + std::to_string(pos));
      if (!index_.emplace(to_hex(id), Entry{pos + 36, n_sub}).second) {
        fail("duplicate record " + to_hex(id));
      }
      order_.push_back(id);
      pos += 36 + body;
    }
  } catch (...) {
    if (data_) ::munmap(const_cast<std::uint8_t*>(data_), size_);
    data_ = nullptr;
    throw;
  }
}

ArchiveReader::~ArchiveReader() {
  if (data_) ::munmap(const_cast<std::uint8_t*>(data_), size_);
}

bool ArchiveReader::contains(const RequestId& id) const { return index_.contains(to_hex(id)); }

std::vector<RequestId> ArchiveReader::ids() const { return order_; }

LayeredEmbedding ArchiveReader::get(const RequestId& id) const {
  const auto it = index_.find(to_hex(id));
  if (it == index_.end()) throw NotFoundError("not_found(" + to_hex(id) + ")");
  const Entry& e = it->second;
  LayeredEmbedding out;
  out.n_layers = info_.n_layers;
  out.dim = info_.dim;
  out.n_subwords = static_cast<int>(e.n_subwords);
  out.subword_token_map.resize(e.n_subwords);
  std::memcpy(out.subword_token_map.data(), data_ + e.offset, e.n_subwords * sizeof(std::int32_t));
  out.values.resize(static_cast<std::size_t>(out.n_layers) * out.n_subwords * out.dim);
  std::memcpy(out.values.data(), data_ + e.offset + e.n_subwords * sizeof(std::int32_t),
              out.values.size() * sizeof(float));
  return out;
}

ArchiveBackend::ArchiveBackend(const std::filesystem::path& path)
    : reader_(std::make_unique<ArchiveReader>(path)) {}

LayeredEmbedding ArchiveBackend::embed(const EmbeddingRequest& request) const {
  request.validate();
  if (request.model_id != reader_->info().model_id) {
    throw IntegrityError("request for model '" + request.model_id + "' sent to an archive of '" +
                         reader_->info().model_id + "'");
  }
  LayeredEmbedding e = reader_->get(request_hash(request));
  e.validate(request);
  return e;
}

void check_model_info(const ModelInfo& expected, const ModelInfo& actual) {
  if (expected.n_layers != actual.n_layers || expected.dim != actual.dim) {
    throw IntegrityError("model '" + expected.model_id + "' is registered as " +
                         std::to_string(expected.n_layers) + " layers x " + std::to_string(expected.dim) +
                         " but the backend reports " + std::to_string(actual.n_layers) + " x " +
                         std::to_string(actual.dim));
  }
}

}  // namespace morphoprobe
