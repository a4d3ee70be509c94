#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cape/fieldgen.hpp"
#include "cape/model.hpp"

namespace cape {

// Dataset file layout, all integers little-endian:
//
//   magic      8 bytes  "CAPESEG1"
//   version    u32
//   n_samples  u32
//   C, H, W    u32 x 3
//   flags      u32      bit 0: true_p present
//   per sample:
//     inputs    C*H*W float32 LE
//     outcomes  H*W uint8, 0 or 1
//     true_p    H*W float32 LE (only if flagged)
//
// Values are float64 in memory and float32 on disk.
inline constexpr char kDatasetMagic[8] = {'C', 'A', 'P', 'E', 'S', 'E', 'G', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kFlagTrueP = 1u;
inline constexpr std::size_t kDatasetHeaderBytes = 8 + 6 * 4;

struct DatasetHeader {
  std::uint32_t version = kDatasetVersion;
  std::uint32_t n_samples = 0;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t flags = 0;

  /// Exact file size implied by the header.
  std::uint64_t file_bytes() const;
};

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
/// Throws FormatError on bad magic, unsupported version, truncated or
/// oversized payload, or non-binary outcomes.
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);
DatasetHeader decode_dataset_header(const std::vector<std::uint8_t>& bytes);

void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

// Checkpoint layout, little-endian:
//
//   magic        8 bytes "CAPECKP1"
//   version      u32
//   block_count  u32
//   per block:   name_len u32, name bytes, rank u32, extents u32 x rank,
//                values float64 LE
//
// Weights are stored at full precision so a reloaded model reproduces the
// in-memory evaluation exactly.
inline constexpr char kCheckpointMagic[8] = {'C', 'A', 'P', 'E', 'C', 'K', 'P', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams read_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace cape
