#include "kmoco/checkpoint.hpp"

#include <fstream>

#include "kmoco/binio.hpp"
#include "kmoco/errors.hpp"

namespace kmoco {

void TensorTable::put(std::string name, Tensor t) {
  for (auto& [n, v] : tensors)
    if (n == name) {
      v = std::move(t);
      return;
    }
  tensors.emplace_back(std::move(name), std::move(t));
}

const Tensor& TensorTable::get(const std::string& name) const {
  for (const auto& [n, v] : tensors)
    if (n == name) return v;
  throw IoError("tensor '" + name + "' not found in checkpoint");
}

bool TensorTable::contains(const std::string& name) const {
  for (const auto& [n, v] : tensors)
    if (n == name) return true;
  return false;
}

void write_tensor_table(const std::string& path, const TensorTable& table) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("KMCO", 4);
  binio::put<std::uint32_t>(os, TensorTable::kVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(table.tensors.size()));
  for (const auto& [name, t] : table.tensors) {
    binio::put_string(os, name);
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) binio::put<std::uint64_t>(os, d);
    for (double v : t.data()) binio::put<double>(os, v);
  }
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(table.metadata.size()));
  for (const auto& [k, v] : table.metadata) {
    binio::put_string(os, k);
    binio::put_string(os, v);
  }
  if (!os) throw IoError("write failed for " + path);
}

TensorTable read_tensor_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  binio::expect_magic(is, "KMCO");
  const auto version = binio::get<std::uint32_t>(is);
  if (version != TensorTable::kVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " not supported (expected " +
                      std::to_string(TensorTable::kVersion) + ")");
  TensorTable table;
  const auto count = binio::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = binio::get_string(is);
    const auto rank = binio::get<std::uint32_t>(is);
    if (rank > 8) throw FormatError("tensor rank out of range in " + name);
    Shape shape(rank);
    for (auto& d : shape) d = binio::get<std::uint64_t>(is);
    Tensor t(shape);
    for (auto& v : t.vec()) v = binio::get<double>(is);
    table.tensors.emplace_back(std::move(name), std::move(t));
  }
  const auto meta = binio::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = binio::get_string(is);
    table.metadata[k] = binio::get_string(is);
  }
  return table;
}

}  // namespace kmoco
