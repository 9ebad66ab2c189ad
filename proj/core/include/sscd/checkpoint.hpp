#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <torch/types.h>

namespace sscd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named tensors plus string metadata, stored as raw little-endian bytes so
/// that a save/load round trip is bit-exact.
struct TensorArchive {
  std::map<std::string, std::string> meta;
  std::map<std::string, torch::Tensor> tensors;
};

/// Layout: "SSCDCKPT", u32 version, u64 meta count, (key, value)*,
/// u64 tensor count, (name, dtype, rank, dims*, byte count, bytes)*.
/// Strings are u64 length + bytes.
void write_archive(const std::filesystem::path& path, const TensorArchive& archive);

/// Throws IoError if the file is missing or truncated and CheckpointError on
/// a version mismatch.
TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace sscd
