#pragma once

// Character-level one-hot encoding of tabular rows.
//
// A row of text cells becomes a matrix with one one-hot row per character.
// Structured encoding reserves a fixed number of character slots per field,
// so every position always belongs to the same field. Unstructured encoding
// concatenates only the characters that are present.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace chartab::encoding {

std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(std::u32string_view text);

// Distinct dataset characters plus two reserved indices: the placeholder
// (unused slots, missing values) and the occluder (attribution masking).
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<char32_t> characters);

  std::size_t size() const { return characters_.size(); }
  // Width of a one-hot row.
  std::size_t dimension() const { return characters_.size() + 2; }
  std::size_t placeholder_index() const { return characters_.size(); }
  std::size_t occluder_index() const { return characters_.size() + 1; }

  std::optional<std::size_t> index_of(char32_t c) const;
  char32_t character(std::size_t index) const { return characters_.at(index); }
  const std::vector<char32_t>& characters() const { return characters_; }

  bool operator==(const Vocabulary& other) const { return characters_ == other.characters_; }

 private:
  std::vector<char32_t> characters_;
  std::unordered_map<char32_t, std::size_t> index_;
};

struct Field {
  std::string name;
  std::size_t width = 1;

  bool operator==(const Field&) const = default;
};

class FieldSchema {
 public:
  FieldSchema() = default;
  explicit FieldSchema(std::vector<Field> fields);

  std::size_t n_fields() const { return fields_.size(); }
  std::size_t total_width() const { return total_width_; }
  const std::vector<Field>& fields() const { return fields_; }
  const Field& field(std::size_t i) const { return fields_.at(i); }
  // First matrix row belonging to field i.
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }
  std::size_t field_of_position(std::size_t position) const;

  bool operator==(const FieldSchema& other) const { return fields_ == other.fields_; }

 private:
  std::vector<Field> fields_;
  std::vector<std::size_t> offsets_;
  std::size_t total_width_ = 0;
};

// One table row. A missing cell is nullopt; the target is a scalar for
// regression or a class index for classification.
struct RawExample {
  std::vector<std::optional<std::string>> values;
  std::optional<double> target;

  bool operator==(const RawExample&) const = default;
};

enum class EncodingMode { structured, unstructured };
enum class MissingMode { placeholder, zero };

struct EncodedExample {
  EncodingMode mode = EncodingMode::structured;
  std::size_t dim = 0;
  // Row-major rows() x dim.
  std::vector<double> matrix;
  // Field index of each row; structured mode only.
  std::vector<std::size_t> char_to_field;

  std::size_t rows() const { return dim == 0 ? 0 : matrix.size() / dim; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(matrix).subspan(r * dim, dim);
  }
  std::span<double> row(std::size_t r) { return std::span<double>(matrix).subspan(r * dim, dim); }

  bool operator==(const EncodedExample&) const = default;
};

Vocabulary build_vocabulary(std::span<const RawExample> rows);

EncodedExample encode_structured(const RawExample& row, const FieldSchema& schema,
                                 const Vocabulary& vocab,
                                 MissingMode missing_mode = MissingMode::placeholder);

EncodedExample encode_unstructured(const RawExample& row, const Vocabulary& vocab,
                                   std::optional<std::size_t> pad_to = std::nullopt);

// Number of characters an unstructured encoding of `row` produces before padding.
std::size_t unstructured_length(const RawExample& row);

// Copy of `example` with rows [start, start + window) set to the occluder,
// which is always the last one-hot index.
EncodedExample occlude(const EncodedExample& example, std::size_t start, std::size_t window);

RawExample decode(const EncodedExample& example, const FieldSchema& schema,
                  const Vocabulary& vocab);

// Width of each field = longest value observed in `rows`, clamped to [1, cap].
FieldSchema infer_schema(const std::vector<std::string>& names, std::span<const RawExample> rows,
                         std::size_t cap = 8);

nlohmann::ordered_json to_json(const FieldSchema& schema);
nlohmann::ordered_json to_json(const Vocabulary& vocab);
FieldSchema schema_from_json(const nlohmann::ordered_json& j);
Vocabulary vocabulary_from_json(const nlohmann::ordered_json& j);

// Human-readable schema + vocabulary file.
void write_schema_file(const std::string& path, const FieldSchema& schema,
                       const Vocabulary& vocab);
std::pair<FieldSchema, Vocabulary> read_schema_file(const std::string& path);

}  // namespace chartab::encoding
