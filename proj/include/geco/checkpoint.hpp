// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "geco/common.hpp"
#include "geco/nn.hpp"

namespace geco {

// Named double blobs with a config hash and a free-form tag (e.g. the machine
// type a PAE was trained for). Loading verifies the hash and every name/size.

struct NamedSlice {
  std::string name;
  double* data;
  size_t size;
};

namespace detail {
constexpr char kCkptMagic[4] = {'G', 'C', 'K', 'P'};
constexpr uint32_t kCkptVersion = 1;

inline void write_str(std::ofstream& f, const std::string& s) {
  uint32_t n = static_cast<uint32_t>(s.size());
  f.write(reinterpret_cast<const char*>(&n), 4);
  f.write(s.data(), n);
}

inline std::string read_str(std::ifstream& f) {
  uint32_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 4);
  std::string s(n, '\0');
  f.read(s.data(), n);
  return s;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, uint64_t config_hash,
                            const std::string& tag, const std::vector<NamedSlice>& slices) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(detail::kCkptMagic, 4);
  f.write(reinterpret_cast<const char*>(&detail::kCkptVersion), 4);
  f.write(reinterpret_cast<const char*>(&config_hash), 8);
  detail::write_str(f, tag);
  uint32_t n = static_cast<uint32_t>(slices.size());
  f.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& s : slices) {
    detail::write_str(f, s.name);
    uint64_t sz = s.size;
    f.write(reinterpret_cast<const char*>(&sz), 8);
    f.write(reinterpret_cast<const char*>(s.data), static_cast<std::streamsize>(sz * 8));
  }
  if (!f) throw IoError("short write on checkpoint: " + path);
}

// Fills `slices` in place. Order and sizes must match what was saved; the
// config hash must match `expected_hash`. Returns the stored tag.
inline std::string load_checkpoint(const std::string& path, uint64_t expected_hash,
                                   const std::vector<NamedSlice>& slices) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  uint32_t version = 0;
  uint64_t h = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&h), 8);
  if (!f || std::memcmp(magic, detail::kCkptMagic, 4) != 0 || version != detail::kCkptVersion)
    throw IoError("bad checkpoint header: " + path);
  if (h != expected_hash)
    throw ConfigError(strformat("checkpoint %s was trained with a different config (hash %s, "
                                "expected %s)",
                                path.c_str(), hash_hex(h).c_str(),
                                hash_hex(expected_hash).c_str()));
  std::string tag = detail::read_str(f);
  uint32_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 4);
  if (n != slices.size())
    throw IoError(strformat("checkpoint %s holds %u tensors, expected %zu", path.c_str(), n,
                            slices.size()));
  for (const auto& s : slices) {
    std::string name = detail::read_str(f);
    uint64_t sz = 0;
    f.read(reinterpret_cast<char*>(&sz), 8);
    if (!f || name != s.name || sz != s.size)
      throw IoError(strformat("checkpoint %s tensor mismatch: got %s[%llu], expected %s[%zu]",
                              path.c_str(), name.c_str(),
                              static_cast<unsigned long long>(sz), s.name.c_str(), s.size));
    f.read(reinterpret_cast<char*>(s.data), static_cast<std::streamsize>(sz * 8));
  }
  if (!f) throw IoError("truncated checkpoint: " + path);
  return tag;
}

inline std::vector<NamedSlice> slices_from_params(const nn::Params& params) {
  std::vector<NamedSlice> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.name, p.value, p.size});
  return out;
}

}  // namespace geco
