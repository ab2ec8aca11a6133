#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mactas/matrix.hpp"

namespace mactas {

struct CheckpointRecord {
  std::string name;
  Matrix tensor;
};

// Binary layout (all integers unsigned 64-bit little-endian, values IEEE-754
// binary64 little-endian):
//
//   "MACTASCK"                      8-byte magic
//   version                         currently 1
//   record count
//   per record:
//     name length, name bytes (UTF-8, no terminator)
//     rows, cols
//     rows * cols values, row-major
//
// A JSON manifest next to the binary lists every record with its shape and the
// byte offset of its first value, plus free-form metadata.
inline constexpr std::uint64_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& binary, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& binary);

nlohmann::json checkpoint_manifest(const std::filesystem::path& binary, const std::vector<CheckpointRecord>& records,
                                   const nlohmann::json& meta);

// Writes <stem>.bin and <stem>.json.
void save_checkpoint(const std::filesystem::path& stem, const std::vector<CheckpointRecord>& records,
                     const nlohmann::json& meta = nlohmann::json::object());

}  // namespace mactas
