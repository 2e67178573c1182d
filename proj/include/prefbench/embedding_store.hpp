// Binary persistence and lookup for frozen encoder embeddings.
//
// File layout (all integers and floats little-endian):
//
//   offset 0   magic    "PEV1"
//   offset 4   version  u32 (currently 1)
//   offset 8   dim      u32 (>= 1)
//   offset 12  count    u64
//   offset 20  ids      count x (u32 byte length, UTF-8 bytes)
//   ...        data     count x dim binary32, row-major
//
// Vectors are stored as binary32 and promoted to binary64 whenever they
// take part in scoring or training.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prefbench/common.hpp"

namespace prefbench {

inline constexpr char kEmbeddingMagic[4] = {'P', 'E', 'V', '1'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderSize = 20;

enum class EmbeddingFormatErrorKind {
  kBadMagic,
  kUnsupportedVersion,
  kBadDimension,
  kTruncated,
  kEmptyId,
  kDuplicateId,
  kNonFinite,
  kZeroVector,
  kTrailingBytes,
};

const char* to_string(EmbeddingFormatErrorKind kind);

// A malformed embedding file. `offset` is the byte position of the problem.
class EmbeddingFormatError : public Error {
 public:
  EmbeddingFormatError(EmbeddingFormatErrorKind kind, std::uint64_t offset,
                       const std::string& detail = {});

  EmbeddingFormatErrorKind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  EmbeddingFormatErrorKind kind_;
  std::uint64_t offset_;
};

// Ordered id -> vector table. Rows are validated on insertion (non-empty
// unique id, finite values, non-zero norm) and never change afterwards.
class EmbeddingMatrix {
 public:
  explicit EmbeddingMatrix(std::size_t dim);

  void add(std::string id, std::span<const float> vector);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  const std::string& id(std::size_t row) const { return ids_.at(row); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const float> row(std::size_t r) const;
  std::span<const float> data() const noexcept { return data_; }

  std::optional<std::size_t> find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id).has_value(); }
  // Throws Error(kValidation) naming the id when absent.
  std::span<const float> lookup(std::string_view id) const;

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.data_ == b.data_;
  }

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Serialized bytes of a matrix, exactly as written to disk.
std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& matrix);
EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes);

void write_embeddings(const EmbeddingMatrix& matrix,
                      const std::filesystem::path& path);
// Validates ids and values first; nothing is written if any check fails.
void write_embeddings(std::size_t dim, std::span<const std::string> ids,
                      std::span<const float> data,
                      const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

std::vector<double> l2_normalize(std::span<const double> vector);

// Text (prompt) and image embeddings promoted to binary64. Prompt ids
// resolve in the text table, image ids in the image table; both may be the
// same matrix.
class EmbeddingSet {
 public:
  EmbeddingSet(std::shared_ptr<const EmbeddingMatrix> text,
               std::shared_ptr<const EmbeddingMatrix> image);
  // One combined table holding prompt and image ids.
  explicit EmbeddingSet(std::shared_ptr<const EmbeddingMatrix> combined);

  std::size_t text_dim() const noexcept { return text_->dim(); }
  std::size_t image_dim() const noexcept { return image_->dim(); }

  const EmbeddingMatrix& text() const noexcept { return *text_; }
  const EmbeddingMatrix& image() const noexcept { return *image_; }

  std::span<const double> prompt(std::string_view prompt_id) const;
  std::span<const double> image(std::string_view image_id) const;
  bool has_prompt(std::string_view id) const { return text_->contains(id); }
  bool has_image(std::string_view id) const { return image_->contains(id); }

 private:
  std::shared_ptr<const EmbeddingMatrix> text_;
  std::shared_ptr<const EmbeddingMatrix> image_;
  std::vector<double> text_values_;
  std::vector<double> image_values_;
};

}  // namespace prefbench
