#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <torch/types.h>

#include "sscd/datasets.hpp"
#include "sscd/image_io.hpp"
#include "sscd/types.hpp"

namespace sscd {

enum class DensityDomain { Image, Feature };

/// Local-density map: each cell holds the average distance between its
/// vector and those of its (up to eight) grid neighbours. High values mark
/// places where the representation changes quickly.
struct DensityMap {
  torch::Tensor values;  // float64 [h, w], non-negative
  DensityDomain domain = DensityDomain::Image;
  int64_t cell_size = 1;  // input pixels per cell along each axis
};

inline constexpr int64_t kImagePatchSize = 15;

/// Six-channel composite (image_a ++ image_b) tiled into 15x15 patches;
/// mean unsquared L2 distance to neighbouring patches. Needs >= 45 px per side.
DensityMap image_domain_density(const BiTemporalSample& sample);

/// Mean squared L2 distance between each channel vector of a single
/// feature-difference map ([C, h, w] or [1, C, h, w]) and its neighbours.
DensityMap feature_domain_density(const torch::Tensor& feature_difference);
DensityMap feature_domain_density(const FeatureDifferenceMap& fd);

/// Neighbour-distance density over an arbitrary [D, h, w] vector field.
/// `squared` selects squared or plain L2 distances.
torch::Tensor neighbour_density(const torch::Tensor& vectors, bool squared);

/// Pixels of a binary [H, W] mask that are set and have a 4-neighbour that is
/// unset or outside the image.
torch::Tensor mask_boundary(const torch::Tensor& mask);

/// Min-max normalised blue-to-red rendering, upsampled by cell_size, with the
/// ground-truth boundary drawn in black when a mask is given.
RasterU8 render_density(const DensityMap& density,
                        const std::optional<torch::Tensor>& gt = std::nullopt);
void write_density(const std::filesystem::path& path, const DensityMap& density,
                   const std::optional<torch::Tensor>& gt = std::nullopt);

}  // namespace sscd
