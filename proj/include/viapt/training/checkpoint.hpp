#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "viapt/numerics/tensor.hpp"

namespace viapt {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct ArchiveEntry {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<std::uint8_t> payload;  // little-endian element bytes

  friend bool operator==(const ArchiveEntry&, const ArchiveEntry&) = default;
};

/// Named-tensor archive: magic, version, JSON metadata, entries, CRC32.
struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<ArchiveEntry> entries;

  const ArchiveEntry* find(const std::string& name) const;
};

template <typename T>
ArchiveEntry make_entry(const std::string& name, const Tensor<T>& t);

/// Throws FormatError when the entry's dtype is not T.
template <typename T>
Tensor<T> entry_tensor(const ArchiveEntry& e);

std::vector<std::uint8_t> serialize_archive(const Archive& a);
/// Validates magic, version, structure and CRC; throws FormatError naming
/// the offending field. Nothing is returned unless the whole buffer parses.
Archive parse_archive(const std::vector<std::uint8_t>& bytes);

void write_archive(const Archive& a, const std::filesystem::path& path);
Archive read_archive(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace viapt
