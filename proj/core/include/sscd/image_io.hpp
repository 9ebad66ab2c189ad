#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/types.h>

namespace sscd {

/// 8-bit interleaved raster as stored on disk.
struct RasterU8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;
};

struct ImageSize {
  int width = 0;
  int height = 0;
};

RasterU8 read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const RasterU8& raster);

/// Reads only the header; cheap enough to enumerate a corpus.
ImageSize read_png_size(const std::filesystem::path& path);

/// RGB image -> float tensor [3, H, W] scaled to [0, 1].
torch::Tensor read_rgb_tensor(const std::filesystem::path& path);
/// Single-channel label -> uint8 tensor [H, W] with any nonzero value mapped to 1.
torch::Tensor read_mask_tensor(const std::filesystem::path& path);

/// [3, H, W] or [H, W] float in [0, 1] -> 8-bit PNG (values clamped).
void write_tensor_png(const std::filesystem::path& path, const torch::Tensor& image);

}  // namespace sscd
