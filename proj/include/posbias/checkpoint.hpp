#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "posbias/common.hpp"
#include "posbias/tensor.hpp"

namespace posbias::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format stores little-endian doubles");

inline constexpr char kCheckpointMagic[8] = {'P', 'B', 'T', 'N', '0', '0', '0', '1'};

/// Writes named tensors: magic, u32 count, then per tensor u32 name length,
/// name bytes, u32 rank, u64 dims, raw 64-bit little-endian values.
inline void save_tensors(const std::string& path,
                         const std::map<std::string, Tensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  auto put_u32 = [&out](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  auto put_u64 = [&out](std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  put_u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(d);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::map<std::string, Tensor> load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ParseError("not a checkpoint file: " + path);
  auto get_u32 = [&in, &path]() {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw ParseError("truncated checkpoint: " + path);
    return v;
  };
  auto get_u64 = [&in, &path]() {
    std::uint64_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw ParseError("truncated checkpoint: " + path);
    return v;
  };
  std::map<std::string, Tensor> tensors;
  const std::uint32_t count = get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_u32(), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const std::uint32_t rank = get_u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_u64());
    Tensor t{shape};
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw ParseError("truncated checkpoint: " + path);
    tensors.emplace(std::move(name), std::move(t));
  }
  return tensors;
}

}  // namespace posbias::nn
