#pragma once

// CEB1 embedding files and their JSON manifests.
//
// Layout (little-endian):
//   bytes 0-3   magic "CEB1"
//   bytes 4-7   u32 version (1)
//   bytes 8-11  u32 D
//   bytes 12-19 u64 row count R
//   then R*D float32 values, row-major

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sharedattr/error.hpp"
#include "sharedattr/numerics.hpp"

namespace sharedattr {

namespace fs = std::filesystem;

inline constexpr std::array<char, 4> kCeb1Magic = {'C', 'E', 'B', '1'};
inline constexpr std::uint32_t kCeb1Version = 1;
inline constexpr std::size_t kCeb1HeaderSize = 20;

namespace detail {

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(value >> (8 * i)));
}

template <typename T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

inline std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace detail

// Writes `bytes` to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const fs::path& path, std::span<const unsigned char> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(Errc::io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

inline std::vector<unsigned char> encode_ceb1(const Mat& m) {
  std::vector<unsigned char> out;
  out.reserve(kCeb1HeaderSize + m.size() * 4);
  out.insert(out.end(), kCeb1Magic.begin(), kCeb1Magic.end());
  detail::put_le<std::uint32_t>(out, kCeb1Version);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  for (double v : m.flat()) {
    detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

inline Mat decode_ceb1(std::span<const unsigned char> bytes, const std::string& origin = "<memory>") {
  if (bytes.size() < kCeb1HeaderSize) fail(Errc::format, origin + ": file shorter than CEB1 header");
  if (std::memcmp(bytes.data(), kCeb1Magic.data(), kCeb1Magic.size()) != 0) {
    fail(Errc::format, origin + ": bad magic, expected CEB1");
  }
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCeb1Version) {
    fail(Errc::format, origin + ": unsupported CEB1 version " + std::to_string(version));
  }
  const auto dim = detail::get_le<std::uint32_t>(bytes.data() + 8);
  const auto rows = detail::get_le<std::uint64_t>(bytes.data() + 12);
  if (dim == 0) fail(Errc::format, origin + ": embedding dimension is 0");
  const std::uint64_t payload = bytes.size() - kCeb1HeaderSize;
  if (rows > payload / 4 / dim || rows * dim * 4 != payload) {
    fail(Errc::format, origin + ": payload holds " + std::to_string(payload) + " bytes, header promises " +
                           std::to_string(rows) + "x" + std::to_string(dim) + " floats");
  }
  Mat m(static_cast<std::size_t>(rows), dim);
  const unsigned char* p = bytes.data() + kCeb1HeaderSize;
  for (double& v : m.flat()) {
    const float f = std::bit_cast<float>(detail::get_le<std::uint32_t>(p));
    if (!std::isfinite(f)) fail(Errc::data, origin + ": non-finite value in payload");
    v = f;
    p += 4;
  }
  return m;
}

inline void write_ceb1(const fs::path& path, const Mat& m) {
  const auto bytes = encode_ceb1(m);
  write_file_atomic(path, bytes);
}

inline Mat read_ceb1(const fs::path& path) { return decode_ceb1(detail::read_bytes(path), path.string()); }

// Sidecar manifest. "attributes" manifests need `texts`; "visual" manifests
// need `class_ids` and `task_index`. `labels` carries attribute categories or
// class display names. `splits` optionally tags visual rows as
// train/eval/background; background rows use class id -1.
struct Manifest {
  std::string kind;
  std::vector<std::string> labels;
  std::vector<std::string> texts;
  std::vector<std::int64_t> class_ids;
  std::optional<int> task_index;
  std::vector<std::string> splits;
};

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["kind"] = m.kind;
  if (!m.labels.empty()) j["labels"] = m.labels;
  if (!m.texts.empty() || m.kind == "attributes") j["texts"] = m.texts;
  if (!m.class_ids.empty() || m.kind == "visual") j["class_ids"] = m.class_ids;
  if (m.task_index) j["task_index"] = *m.task_index;
  if (!m.splits.empty()) j["splits"] = m.splits;
  return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j, const std::string& origin = "<manifest>") {
  if (!j.is_object()) fail(Errc::manifest, origin + ": manifest must be a JSON object");
  Manifest m;
  try {
    if (!j.contains("kind")) fail(Errc::manifest, origin + ": missing kind");
    m.kind = j.at("kind").get<std::string>();
    if (m.kind != "attributes" && m.kind != "visual") {
      fail(Errc::manifest, origin + ": unknown kind '" + m.kind + "'");
    }
    if (j.contains("labels")) m.labels = j.at("labels").get<std::vector<std::string>>();
    if (j.contains("texts")) m.texts = j.at("texts").get<std::vector<std::string>>();
    if (j.contains("class_ids")) m.class_ids = j.at("class_ids").get<std::vector<std::int64_t>>();
    if (j.contains("task_index")) m.task_index = j.at("task_index").get<int>();
    if (j.contains("splits")) m.splits = j.at("splits").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::manifest, origin + ": " + e.what());
  }
  if (m.kind == "attributes" && !j.contains("texts")) fail(Errc::manifest, origin + ": attributes manifest needs texts");
  if (m.kind == "visual") {
    if (!j.contains("class_ids")) fail(Errc::manifest, origin + ": visual manifest needs class_ids");
    if (!m.task_index) fail(Errc::manifest, origin + ": visual manifest needs task_index");
  }
  return m;
}

inline Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::manifest, path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.string());
}

inline void write_manifest(const fs::path& path, const Manifest& m) {
  write_text_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

}  // namespace sharedattr
