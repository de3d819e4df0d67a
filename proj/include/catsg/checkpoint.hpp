// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "catsg/errors.hpp"

namespace catsg {

/// Binary model container:
///   "CATSGCKP" | u32 version | u64 header bytes | JSON header |
///   u64 parameter count | float64 parameters (little endian)
/// The header carries `kind`, `ontology_fingerprint` and whatever shapes and
/// settings the model needs to rebuild itself.
struct Checkpoint {
  static constexpr char kMagic[9] = "CATSGCKP";
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json header;
  std::vector<double> params;
};

namespace detail {

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw SchemaError("truncated checkpoint while reading " + what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(Checkpoint::kMagic, 8);
  detail::put<std::uint32_t>(out, Checkpoint::kVersion);
  const std::string header = ckpt.header.dump();
  detail::put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  detail::put<std::uint64_t>(out, ckpt.params.size());
  for (double d : ckpt.params) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    detail::put<std::uint64_t>(out, bits);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

/// Reads a checkpoint and checks its kind and ontology fingerprint.
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const std::string& expected_kind,
                                  const std::string& expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, Checkpoint::kMagic, 8) != 0)
    throw SchemaError(path.string() + " is not a checkpoint");
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != Checkpoint::kVersion)
    throw SchemaError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = detail::get<std::uint64_t>(in, "header length");
  if (header_len > (1ULL << 30)) throw SchemaError("implausible checkpoint header length");
  std::string header(static_cast<std::size_t>(header_len), '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len)))
    throw SchemaError("truncated checkpoint header");
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad checkpoint header: ") + e.what());
  }
  const std::string kind = ckpt.header.value("kind", "");
  if (kind != expected_kind)
    throw SchemaError("checkpoint holds `" + kind + "`, expected `" + expected_kind + "`");
  const std::string fp = ckpt.header.value("ontology_fingerprint", "");
  if (fp != expected_fingerprint)
    throw FingerprintMismatch("checkpoint ontology fingerprint " + fp +
                              " does not match loaded ontology " + expected_fingerprint);
  const auto n = detail::get<std::uint64_t>(in, "parameter count");
  if (n > (1ULL << 32)) throw SchemaError("implausible parameter count");
  ckpt.params.resize(static_cast<std::size_t>(n));
  for (auto& d : ckpt.params) {
    const auto bits = detail::get<std::uint64_t>(in, "parameters");
    std::memcpy(&d, &bits, sizeof d);
  }
  return ckpt;
}

}  // namespace catsg
