#include "prlstm/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace prlstm {

namespace {

constexpr char kMagic[4] = {'P', 'R', 'L', '1'};
constexpr uint32_t kVersion = 1;

class CheckpointError : public TensorError {
 public:
  using TensorError::TensorError;
};

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; i++) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw CheckpointError("checkpoint: truncated u32");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw CheckpointError("checkpoint: truncated u64");
  uint64_t v = 0;
  for (int i = 0; i < 8; i++) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f32_le(std::ostream& os, const float* data, size_t count) {
  static_assert(sizeof(float) == 4);
  // x86 is little-endian; a byte-swapping branch would go here for BE hosts.
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  for (const auto& [name, t] : tensors) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); i++) write_u64(os, static_cast<uint64_t>(t.dim(i)));
    write_f32_le(os, t.values().data(), t.values().size());
  }
  if (!os) throw CheckpointError("checkpoint: write failed: " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("checkpoint: bad magic in " + path);
  const uint32_t version = read_u32(is);
  if (version != kVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  NamedTensors out;
  for (;;) {
    int peek = is.peek();
    if (peek == std::char_traits<char>::eof()) break;
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw CheckpointError("checkpoint: truncated name");
    const uint32_t rank = read_u32(is);
    if (rank == 0 || rank > 8) throw CheckpointError("checkpoint: implausible rank");
    Shape shape(rank);
    int64_t count = 1;
    for (uint32_t i = 0; i < rank; i++) {
      shape[i] = static_cast<int64_t>(read_u64(is));
      count *= shape[i];
    }
    std::vector<float> values(static_cast<size_t>(count));
    is.read(reinterpret_cast<char*>(values.data()), count * 4);
    if (!is) throw CheckpointError("checkpoint: truncated values for " + name);
    out.emplace_back(std::move(name), Tensor::from_values(std::move(shape), std::move(values)));
  }
  return out;
}

}  // namespace prlstm
