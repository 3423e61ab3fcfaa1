#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kmoco/tensor.hpp"

namespace kmoco {

// Named tensors plus a string metadata block, stored as
//
//   "KMCO" | u32 version | u32 tensor count
//   per tensor: u32 name length | UTF-8 name | u32 rank | u64 dims[rank] | f64 payload
//   u32 metadata count | per entry: u32 key length | key | u32 value length | value
//
// All integers and floats little-endian. See docs/formats.md.
struct TensorTable {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, std::string> metadata;

  void put(std::string name, Tensor t);
  const Tensor& get(const std::string& name) const;  // IoError if absent
  bool contains(const std::string& name) const;
};

void write_tensor_table(const std::string& path, const TensorTable& table);
// IoError if the file cannot be opened, FormatError on bad magic/version.
TensorTable read_tensor_table(const std::string& path);

}  // namespace kmoco
