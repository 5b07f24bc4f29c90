#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prlstm/tensor.hpp"

namespace prlstm {

// Flat binary parameter container.
//
// Layout, all integers little-endian:
//   magic   "PRL1" (4 bytes)
//   version u32 (currently 1)
//   records until EOF, each:
//     name_len u32, name bytes (UTF-8)
//     rank     u32, extents u64[rank]
//     values   f32[prod(extents)]
//
// Round-trips are bit-exact: save(load(f)) reproduces f byte for byte.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

}  // namespace prlstm
