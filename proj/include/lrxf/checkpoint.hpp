#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrxf/tensor.hpp"

namespace lrxf::ad {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary container: magic "LRXF", u16 format version, u32 entry count, then
// per entry: u16 name length, name bytes, u8 dtype (0 = f32), u8 rank,
// u32 dims, raw little-endian f32 payload. Payloads assume a little-endian
// host, which is asserted at load/save.
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {
inline void require_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  if (b != 1) throw CheckpointError("big-endian hosts are unsupported");
}

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("corrupt payload: unexpected end of file");
  return v;
}
}  // namespace detail

inline void save_arrays(const std::string& path,
                        const std::map<std::string, Tensor<float>>& arrays) {
  detail::require_little_endian();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for writing: " + path);
  os.write("LRXF", 4);
  detail::write_pod<std::uint16_t>(os, kCheckpointVersion);
  detail::write_pod<std::uint32_t>(os,
                                   static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    detail::write_pod<std::uint16_t>(os,
                                     static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint8_t>(os, 0);  // dtype f32
    detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (int e : t.shape())
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

inline std::map<std::string, Tensor<float>> load_arrays(
    const std::string& path) {
  detail::require_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "LRXF", 4) != 0)
    throw CheckpointError("bad magic: not a LRXF container");
  const auto version = detail::read_pod<std::uint16_t>(is);
  if (version != kCheckpointVersion)
    throw CheckpointError("format version mismatch: file has v" +
                          std::to_string(version) + ", expected v" +
                          std::to_string(kCheckpointVersion));
  const auto count = detail::read_pod<std::uint32_t>(is);
  std::map<std::string, Tensor<float>> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw CheckpointError("corrupt payload: truncated name");
    const auto dtype = detail::read_pod<std::uint8_t>(is);
    if (dtype != 0) throw CheckpointError("unsupported dtype in " + name);
    const auto rank = detail::read_pod<std::uint8_t>(is);
    std::vector<int> shape(rank);
    for (auto& e : shape)
      e = static_cast<int>(detail::read_pod<std::uint32_t>(is));
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!is)
      throw CheckpointError("corrupt payload: truncated data for " + name);
    arrays.emplace(std::move(name), std::move(t));
  }
  return arrays;
}

}  // namespace lrxf::ad
