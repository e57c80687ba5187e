#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "chartab/engine.hpp"
#include "chartab/error.hpp"

namespace chartab::engine {

namespace {

constexpr char kMagic[8] = {'C', 'H', 'T', 'E', 'N', 'S', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("tensor container truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

}  // namespace

void write_tensors(std::ostream& out, const NamedTensors& tensors) {
  out.write(kMagic, sizeof kMagic);
  put_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, 2);
    put_u64(out, t.rows());
    put_u64(out, t.cols());
    for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw DataError("failed writing tensor container");
}

NamedTensors read_tensors(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("not a tensor container (bad magic)");
  }
  const std::uint64_t count = get_u64(in);
  NamedTensors out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t len = get_u64(in);
    if (len > (1u << 20)) throw DataError("tensor name too long");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) {
      throw DataError("tensor container truncated");
    }
    if (get_u64(in) != 2) throw DataError("tensor '" + name + "' is not two-dimensional");
    Shape shape{get_u64(in), get_u64(in)};
    std::vector<double> values(shape.numel());
    for (double& v : values) v = std::bit_cast<double>(get_u64(in));
    out.emplace_back(std::move(name), Tensor::from(shape, std::move(values)));
  }
  return out;
}

}  // namespace chartab::engine
