#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/types.h>

#include "sscd/rng.hpp"

namespace sscd {

/// Co-registered pre/post image pair, optionally with a change mask.
struct BiTemporalSample {
  torch::Tensor image_a;              // float [3, H, W] in [0, 1]
  torch::Tensor image_b;              // float [3, H, W] in [0, 1]
  std::optional<torch::Tensor> mask;  // uint8 [H, W] in {0, 1}, 1 = change
  std::string id;

  int64_t height() const { return image_a.size(1); }
  int64_t width() const { return image_a.size(2); }

  /// Throws ValidationError if the invariants above do not hold.
  void validate() const;
};

struct SplitManifest {
  std::vector<std::string> labeled_ids;
  std::vector<std::string> unlabeled_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  double labeled_fraction = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const SplitManifest&) const = default;
};

struct AugmentationConfig {
  double flip_prob = 0.5;
  double rescale_min = 0.8;
  double rescale_max = 1.2;
  int64_t crop_size = 256;
  double blur_prob = 0.5;
  double jitter_strength = 0.1;

  void validate() const;
  /// Identity policy for a given crop size (used for evaluation-shaped data).
  static AugmentationConfig identity(int64_t crop_size);
};

// -- Loading ---------------------------------------------------------------

BiTemporalSample load_pair(const std::filesystem::path& path_a,
                           const std::filesystem::path& path_b,
                           const std::optional<std::filesystem::path>& path_mask,
                           std::string id = {});

/// Directory that holds A/, B/ and optionally label/ sub-folders.
class PairDirectory {
 public:
  explicit PairDirectory(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  bool has_labels() const;
  /// Sorted ids (file stems) present in A/.
  std::vector<std::string> ids() const;
  BiTemporalSample load(const std::string& id, bool with_mask) const;

  /// Lists directories missing from the expected layout (empty when valid).
  std::vector<std::string> missing_directories() const;

 private:
  std::filesystem::path root_;
};

// -- Patching ----------------------------------------------------------------

/// Non-overlapping grid anchored at (0,0); trailing partial tiles are dropped.
std::vector<BiTemporalSample> extract_patches(const BiTemporalSample& sample,
                                              int64_t patch_size);

/// Patch id for grid cell (row, col) of a parent image.
std::string patch_id(const std::string& parent, int64_t row, int64_t col);

/// Patch ids a pair of the given size would produce, without loading pixels.
std::vector<std::string> patch_ids_for(const std::string& parent, int64_t height,
                                       int64_t width, int64_t patch_size);

/// Loads every pair in `dir` (optionally patching) and keeps those whose id is
/// listed in `ids`, preserving the order of `ids`. patch_size == 0 disables patching.
std::vector<BiTemporalSample> load_samples(const PairDirectory& dir,
                                           const std::vector<std::string>& ids,
                                           int64_t patch_size, bool with_mask);

// -- Splits ----------------------------------------------------------------

SplitManifest make_split(std::vector<std::string> train_ids, double labeled_fraction,
                         std::uint64_t seed);

/// Writes labeled.txt, unlabeled.txt, val.txt, test.txt and split.json.
void write_manifest(const SplitManifest& manifest, const std::filesystem::path& dir);
SplitManifest read_manifest(const std::filesystem::path& dir);

// -- Augmentation ------------------------------------------------------------

BiTemporalSample augment(const BiTemporalSample& sample, const AugmentationConfig& config,
                         Rng& rng);

/// Gaussian blur of a [C, H, W] image with reflective borders.
torch::Tensor gaussian_blur(const torch::Tensor& image, double sigma);

/// Reflect-pads a [C, H, W] tensor up to at least (height, width), splitting the
/// padding evenly between both sides. Repeats reflection when the pad exceeds the size.
torch::Tensor reflect_pad_to(const torch::Tensor& image, int64_t height, int64_t width);

// -- Batching ----------------------------------------------------------------

struct Batch {
  torch::Tensor image_a;  // [N, 3, H, W]
  torch::Tensor image_b;  // [N, 3, H, W]
  torch::Tensor mask;     // [N, H, W] int64, undefined when any sample lacks a mask
  std::vector<std::string> ids;

  int64_t size() const { return image_a.defined() ? image_a.size(0) : 0; }
};

Batch collate(const std::vector<BiTemporalSample>& samples);

}  // namespace sscd
