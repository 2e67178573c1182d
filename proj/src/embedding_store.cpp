#include "prefbench/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace prefbench {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void require(std::size_t n) const {
    if (remaining() < n) {
      throw EmbeddingFormatError(EmbeddingFormatErrorKind::kTruncated, pos_);
    }
  }

  std::uint32_t u32() {
    require(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    require(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string string(std::size_t n) {
    require(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

double squared_norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

void check_rows(std::size_t dim, std::span<const std::string> ids,
                std::span<const float> data) {
  if (dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "embedding dim must be >= 1");
  }
  if (data.size() != ids.size() * dim) {
    throw Error(ErrorCode::kInvalidArgument,
                "embedding data size does not match count x dim");
  }
  std::set<std::string_view> seen;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r].empty()) {
      throw Error(ErrorCode::kValidation, "empty embedding id at row " + std::to_string(r));
    }
    if (ids[r].size() > UINT32_MAX) {
      throw Error(ErrorCode::kValidation, "embedding id too long at row " + std::to_string(r));
    }
    if (!seen.insert(ids[r]).second) {
      throw Error(ErrorCode::kValidation, "duplicate embedding id '" + ids[r] + "'");
    }
    auto row = data.subspan(r * dim, dim);
    for (float x : row) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::kValidation,
                    "non-finite value in embedding '" + ids[r] + "'");
      }
    }
    if (squared_norm(row) == 0.0) {
      throw Error(ErrorCode::kValidation, "zero vector for embedding '" + ids[r] + "'");
    }
  }
}

std::vector<std::uint8_t> encode_rows(std::size_t dim, std::span<const std::string> ids,
                                      std::span<const float> data) {
  std::vector<std::uint8_t> out;
  std::size_t id_bytes = 0;
  for (const auto& id : ids) id_bytes += 4 + id.size();
  out.reserve(kEmbeddingHeaderSize + id_bytes + data.size() * 4);
  out.insert(out.end(), std::begin(kEmbeddingMagic), std::end(kEmbeddingMagic));
  put_u32(out, kEmbeddingVersion);
  put_u32(out, static_cast<std::uint32_t>(dim));
  put_u64(out, ids.size());
  for (const auto& id : ids) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.insert(out.end(), id.begin(), id.end());
  }
  for (float x : data) put_u32(out, std::bit_cast<std::uint32_t>(x));
  return out;
}

void write_bytes(const std::vector<std::uint8_t>& bytes,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

}  // namespace

const char* to_string(EmbeddingFormatErrorKind kind) {
  switch (kind) {
    case EmbeddingFormatErrorKind::kBadMagic: return "bad magic";
    case EmbeddingFormatErrorKind::kUnsupportedVersion: return "unsupported version";
    case EmbeddingFormatErrorKind::kBadDimension: return "bad dimension";
    case EmbeddingFormatErrorKind::kTruncated: return "truncated";
    case EmbeddingFormatErrorKind::kEmptyId: return "empty id";
    case EmbeddingFormatErrorKind::kDuplicateId: return "duplicate id";
    case EmbeddingFormatErrorKind::kNonFinite: return "non-finite value";
    case EmbeddingFormatErrorKind::kZeroVector: return "zero vector";
    case EmbeddingFormatErrorKind::kTrailingBytes: return "trailing bytes";
  }
  return "unknown";
}

EmbeddingFormatError::EmbeddingFormatError(EmbeddingFormatErrorKind kind,
                                           std::uint64_t offset,
                                           const std::string& detail)
    : Error(ErrorCode::kFormat,
            std::string(to_string(kind)) + " at offset " + std::to_string(offset) +
                (detail.empty() ? "" : ": " + detail)),
      kind_(kind),
      offset_(offset) {}

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "embedding dim must be >= 1");
}

void EmbeddingMatrix::add(std::string id, std::span<const float> vector) {
  if (vector.size() != dim_) {
    throw Error(ErrorCode::kInvalidArgument,
                "embedding '" + id + "' has dim " + std::to_string(vector.size()) +
                    ", expected " + std::to_string(dim_));
  }
  if (index_.contains(id)) {
    throw Error(ErrorCode::kValidation, "duplicate embedding id '" + id + "'");
  }
  std::string ids[1] = {id};
  check_rows(dim_, ids, vector);
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), vector.begin(), vector.end());
}

std::span<const float> EmbeddingMatrix::row(std::size_t r) const {
  if (r >= size()) throw Error(ErrorCode::kInvalidArgument, "embedding row out of range");
  return std::span<const float>(data_).subspan(r * dim_, dim_);
}

std::optional<std::size_t> EmbeddingMatrix::find(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> EmbeddingMatrix::lookup(std::string_view id) const {
  auto r = find(id);
  if (!r) {
    throw Error(ErrorCode::kValidation, "unknown embedding id '" + std::string(id) + "'");
  }
  return row(*r);
}

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& matrix) {
  return encode_rows(matrix.dim(), matrix.ids(), matrix.data());
}

EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes) {
  using Kind = EmbeddingFormatErrorKind;
  Reader in(bytes);
  if (bytes.size() < 4) throw EmbeddingFormatError(Kind::kTruncated, 0);
  if (std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0) {
    throw EmbeddingFormatError(Kind::kBadMagic, 0);
  }
  in.string(4);
  const std::uint32_t version = in.u32();
  if (version != kEmbeddingVersion) {
    throw EmbeddingFormatError(Kind::kUnsupportedVersion, 4,
                               "version " + std::to_string(version));
  }
  const std::uint32_t dim = in.u32();
  if (dim == 0) throw EmbeddingFormatError(Kind::kBadDimension, 8, "dim 0");
  const std::uint64_t count = in.u64();

  // Every row needs at least its 4-byte id length.
  if (count > in.remaining() / 4) {
    throw EmbeddingFormatError(Kind::kTruncated, in.offset(),
                               "count " + std::to_string(count) + " exceeds file size");
  }

  EmbeddingMatrix matrix(dim);
  std::vector<std::string> ids;
  std::vector<std::uint64_t> id_offsets;
  ids.reserve(count);
  std::set<std::string_view> seen;
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint64_t at = in.offset();
    const std::uint32_t len = in.u32();
    if (len == 0) throw EmbeddingFormatError(Kind::kEmptyId, at);
    ids.push_back(in.string(len));
    id_offsets.push_back(at);
  }
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (!seen.insert(ids[r]).second) {
      throw EmbeddingFormatError(Kind::kDuplicateId, id_offsets[r], "'" + ids[r] + "'");
    }
  }

  std::vector<float> row(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint64_t row_offset = in.offset();
    for (std::uint32_t c = 0; c < dim; ++c) {
      const std::uint64_t at = in.offset();
      row[c] = std::bit_cast<float>(in.u32());
      if (!std::isfinite(row[c])) {
        throw EmbeddingFormatError(Kind::kNonFinite, at, "id '" + ids[r] + "'");
      }
    }
    if (squared_norm(row) == 0.0) {
      throw EmbeddingFormatError(Kind::kZeroVector, row_offset, "id '" + ids[r] + "'");
    }
    matrix.add(std::move(ids[r]), row);
  }
  if (in.remaining() != 0) {
    throw EmbeddingFormatError(Kind::kTrailingBytes, in.offset());
  }
  return matrix;
}

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  write_bytes(encode_embeddings(matrix), path);
}

void write_embeddings(std::size_t dim, std::span<const std::string> ids,
                      std::span<const float> data, const std::filesystem::path& path) {
  check_rows(dim, ids, data);
  write_bytes(encode_rows(dim, ids, data), path);
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_embeddings(bytes);
  } catch (const EmbeddingFormatError& e) {
    throw EmbeddingFormatError(e.kind(), e.offset(), path.string());
  }
}

std::vector<double> l2_normalize(std::span<const double> vector) {
  double norm = 0.0;
  for (double x : vector) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kNumeric, "cannot normalize a zero or non-finite vector");
  }
  std::vector<double> out(vector.size());
  for (std::size_t i = 0; i < vector.size(); ++i) out[i] = vector[i] / norm;
  return out;
}

namespace {

std::vector<double> promote(const EmbeddingMatrix& m) {
  auto src = m.data();
  return std::vector<double>(src.begin(), src.end());
}

}  // namespace

EmbeddingSet::EmbeddingSet(std::shared_ptr<const EmbeddingMatrix> text,
                           std::shared_ptr<const EmbeddingMatrix> image)
    : text_(std::move(text)), image_(std::move(image)) {
  if (!text_ || !image_) throw Error(ErrorCode::kInvalidArgument, "null embedding matrix");
  text_values_ = promote(*text_);
  image_values_ = text_ == image_ ? std::vector<double>{} : promote(*image_);
}

EmbeddingSet::EmbeddingSet(std::shared_ptr<const EmbeddingMatrix> combined)
    : EmbeddingSet(combined, combined) {}

std::span<const double> EmbeddingSet::prompt(std::string_view prompt_id) const {
  auto r = text_->find(prompt_id);
  if (!r) {
    throw Error(ErrorCode::kValidation,
                "prompt id '" + std::string(prompt_id) + "' not found in text embeddings");
  }
  return std::span<const double>(text_values_).subspan(*r * text_->dim(), text_->dim());
}

std::span<const double> EmbeddingSet::image(std::string_view image_id) const {
  auto r = image_->find(image_id);
  if (!r) {
    throw Error(ErrorCode::kValidation,
                "image id '" + std::string(image_id) + "' not found in image embeddings");
  }
  const auto& values = text_ == image_ ? text_values_ : image_values_;
  return std::span<const double>(values).subspan(*r * image_->dim(), image_->dim());
}

}  // namespace prefbench
