#include "chartab/encoding.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "chartab/error.hpp"

namespace chartab::encoding {

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      extra = 1;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      extra = 2;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      extra = 3;
      cp = lead & 0x07;
    } else {
      throw DataError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    for (std::size_t k = 1; k <= extra; ++k) {
      if (i + k >= text.size()) {
        throw DataError("truncated UTF-8 sequence at offset " + std::to_string(i));
      }
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0) != 0x80) {
        throw DataError("invalid UTF-8 continuation byte at offset " + std::to_string(i + k));
      }
      cp = (cp << 6) | (cont & 0x3F);
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

namespace {

std::string describe(char32_t c) {
  if (c >= 0x20 && c < 0x7F) return "'" + encode_utf8(std::u32string(1, c)) + "'";
  std::ostringstream os;
  os << "U+" << std::hex << std::uppercase << static_cast<std::uint32_t>(c);
  return os.str();
}

}  // namespace

Vocabulary::Vocabulary(std::vector<char32_t> characters) : characters_(std::move(characters)) {
  for (std::size_t i = 0; i < characters_.size(); ++i) {
    if (!index_.emplace(characters_[i], i).second) {
      throw DataError("duplicate vocabulary character " + describe(characters_[i]));
    }
  }
}

std::optional<std::size_t> Vocabulary::index_of(char32_t c) const {
  auto it = index_.find(c);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

FieldSchema::FieldSchema(std::vector<Field> fields) : fields_(std::move(fields)) {
  offsets_.reserve(fields_.size());
  for (const auto& f : fields_) {
    if (f.width < 1) throw DataError("field '" + f.name + "' has zero width");
    offsets_.push_back(total_width_);
    total_width_ += f.width;
  }
}

std::size_t FieldSchema::field_of_position(std::size_t position) const {
  if (position >= total_width_) throw DataError("position beyond schema width");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), position);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

Vocabulary build_vocabulary(std::span<const RawExample> rows) {
  std::vector<char32_t> chars;
  std::unordered_set<char32_t> seen;
  for (const auto& row : rows) {
    for (const auto& value : row.values) {
      if (!value) continue;
      for (char32_t c : decode_utf8(*value)) {
        if (seen.insert(c).second) chars.push_back(c);
      }
    }
  }
  if (chars.empty()) throw DataError("no characters observed");
  return Vocabulary(std::move(chars));
}

namespace {

std::size_t lookup(const Vocabulary& vocab, char32_t c, std::size_t field) {
  auto idx = vocab.index_of(c);
  if (!idx) {
    throw DataError("unknown character " + describe(c) + " in field " + std::to_string(field));
  }
  return *idx;
}

}  // namespace

EncodedExample encode_structured(const RawExample& row, const FieldSchema& schema,
                                 const Vocabulary& vocab, MissingMode missing_mode) {
  if (row.values.size() != schema.n_fields()) {
    throw DataError("row has " + std::to_string(row.values.size()) + " values, schema has " +
                    std::to_string(schema.n_fields()) + " fields");
  }
  EncodedExample out;
  out.mode = EncodingMode::structured;
  out.dim = vocab.dimension();
  out.matrix.assign(schema.total_width() * out.dim, 0.0);
  out.char_to_field.resize(schema.total_width());

  const bool zero_missing = missing_mode == MissingMode::zero;
  for (std::size_t f = 0; f < schema.n_fields(); ++f) {
    const std::size_t base = schema.offset(f);
    const std::size_t width = schema.field(f).width;
    std::u32string chars;
    if (row.values[f]) chars = decode_utf8(*row.values[f]);
    for (std::size_t k = 0; k < width; ++k) {
      out.char_to_field[base + k] = f;
      auto r = out.row(base + k);
      if (k < chars.size()) {
        r[lookup(vocab, chars[k], f)] = 1.0;
      } else if (!zero_missing) {
        r[vocab.placeholder_index()] = 1.0;
      }
    }
  }
  return out;
}

std::size_t unstructured_length(const RawExample& row) {
  std::size_t n = 0;
  for (const auto& v : row.values) {
    if (v) n += decode_utf8(*v).size();
  }
  return n;
}

EncodedExample encode_unstructured(const RawExample& row, const Vocabulary& vocab,
                                   std::optional<std::size_t> pad_to) {
  std::vector<std::size_t> indices;
  for (std::size_t f = 0; f < row.values.size(); ++f) {
    if (!row.values[f]) continue;
    for (char32_t c : decode_utf8(*row.values[f])) indices.push_back(lookup(vocab, c, f));
  }
  if (pad_to && *pad_to < indices.size()) {
    throw DataError("pad length " + std::to_string(*pad_to) + " is shorter than the encoding (" +
                    std::to_string(indices.size()) + " characters)");
  }
  const std::size_t n_rows = pad_to.value_or(indices.size());
  EncodedExample out;
  out.mode = EncodingMode::unstructured;
  out.dim = vocab.dimension();
  out.matrix.assign(n_rows * out.dim, 0.0);
  for (std::size_t r = 0; r < n_rows; ++r) {
    out.row(r)[r < indices.size() ? indices[r] : vocab.placeholder_index()] = 1.0;
  }
  return out;
}

EncodedExample occlude(const EncodedExample& example, std::size_t start, std::size_t window) {
  if (example.mode != EncodingMode::structured) {
    throw DataError("occlusion requires a structured encoding");
  }
  if (window < 1 || window > 4) throw DataError("occlusion window must be in [1, 4]");
  if (start + window > example.rows()) throw DataError("occlusion window exceeds example width");
  EncodedExample out = example;
  for (std::size_t r = start; r < start + window; ++r) {
    auto row = out.row(r);
    std::fill(row.begin(), row.end(), 0.0);
    row[out.dim - 1] = 1.0;
  }
  return out;
}

RawExample decode(const EncodedExample& example, const FieldSchema& schema,
                  const Vocabulary& vocab) {
  if (example.mode != EncodingMode::structured || example.rows() != schema.total_width() ||
      example.dim != vocab.dimension()) {
    throw DataError("malformed encoding: dimensions do not match schema and vocabulary");
  }
  RawExample out;
  out.values.resize(schema.n_fields());
  for (std::size_t f = 0; f < schema.n_fields(); ++f) {
    std::u32string chars;
    for (std::size_t k = 0; k < schema.field(f).width; ++k) {
      auto row = example.row(schema.offset(f) + k);
      std::optional<std::size_t> hot;
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] == 0.0) continue;
        if (row[j] != 1.0 || hot) throw DataError("malformed encoding");
        hot = j;
      }
      if (!hot || *hot == vocab.placeholder_index()) continue;
      if (*hot == vocab.occluder_index()) throw DataError("malformed encoding: occluded position");
      chars.push_back(vocab.character(*hot));
    }
    if (!chars.empty()) out.values[f] = encode_utf8(chars);
  }
  return out;
}

FieldSchema infer_schema(const std::vector<std::string>& names, std::span<const RawExample> rows,
                         std::size_t cap) {
  std::vector<std::size_t> widths(names.size(), 1);
  for (const auto& row : rows) {
    if (row.values.size() != names.size()) throw DataError("row length does not match header");
    for (std::size_t f = 0; f < names.size(); ++f) {
      if (row.values[f]) widths[f] = std::max(widths[f], decode_utf8(*row.values[f]).size());
    }
  }
  std::vector<Field> fields;
  for (std::size_t f = 0; f < names.size(); ++f) {
    fields.push_back({names[f], std::min(widths[f], std::max<std::size_t>(cap, 1))});
  }
  return FieldSchema(std::move(fields));
}

nlohmann::ordered_json to_json(const FieldSchema& schema) {
  auto fields = nlohmann::ordered_json::array();
  for (const auto& f : schema.fields()) {
    fields.push_back({{"name", f.name}, {"width", f.width}});
  }
  return fields;
}

nlohmann::ordered_json to_json(const Vocabulary& vocab) {
  auto chars = nlohmann::ordered_json::array();
  for (char32_t c : vocab.characters()) chars.push_back(encode_utf8(std::u32string(1, c)));
  return {{"characters", chars},
          {"placeholder_index", vocab.placeholder_index()},
          {"occluder_index", vocab.occluder_index()}};
}

FieldSchema schema_from_json(const nlohmann::ordered_json& j) {
  std::vector<Field> fields;
  for (const auto& f : j) {
    fields.push_back({f.at("name").get<std::string>(), f.at("width").get<std::size_t>()});
  }
  return FieldSchema(std::move(fields));
}

Vocabulary vocabulary_from_json(const nlohmann::ordered_json& j) {
  std::vector<char32_t> chars;
  for (const auto& c : j.at("characters")) {
    auto cps = decode_utf8(c.get<std::string>());
    if (cps.size() != 1) throw DataError("vocabulary entry is not a single character");
    chars.push_back(cps[0]);
  }
  Vocabulary vocab(std::move(chars));
  if (j.at("placeholder_index").get<std::size_t>() != vocab.placeholder_index() ||
      j.at("occluder_index").get<std::size_t>() != vocab.occluder_index()) {
    throw DataError("vocabulary reserved indices are inconsistent");
  }
  return vocab;
}

void write_schema_file(const std::string& path, const FieldSchema& schema,
                       const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  nlohmann::ordered_json j = {{"fields", to_json(schema)}, {"vocabulary", to_json(vocab)}};
  out << j.dump(2) << '\n';
}

std::pair<FieldSchema, Vocabulary> read_schema_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return {schema_from_json(j.at("fields")), vocabulary_from_json(j.at("vocabulary"))};
}

}  // namespace chartab::encoding
