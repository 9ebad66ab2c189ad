#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sscd/datasets.hpp"
#include "sscd/model.hpp"
#include "sscd/perturb.hpp"

namespace sscd {

struct DataConfig {
  std::string root;       // contains train/, val/, test/ pair directories (or A/, B/, label/)
  std::string split_dir;  // manifest directory written by `sscd split`
  int64_t patch_size = 0; // 0 = use whole images
};

/// Everything a training run depends on. Serialised as a JSON document whose
/// nesting mirrors the struct; `apply_override` addresses fields by dotted path.
struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  int64_t epochs = 80;
  int64_t batch_labeled = 8;
  int64_t batch_unlabeled = 8;
  double ramp_fraction = 0.3;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  std::vector<PerturbationSpec> perturbations = default_perturbation_specs();

  Backbone backbone = Backbone::Full;
  int64_t encoder_channels = 0;  // 0 = profile default
  int64_t diff_channels = 0;
  int64_t decoder_channels = 0;
  std::string pretrained;  // optional encoder weights (tensor archive)

  bool augment = true;
  AugmentationConfig augmentation;

  DataConfig data;
  std::string output_dir = "runs/default";

  void validate() const;
  /// Model topology implied by the backbone profile, channel overrides and
  /// the perturbation list (one auxiliary decoder per perturbation).
  ModelConfig model_config() const;
  std::string to_json() const;
};

/// Parses a full or partial config document over the defaults. Unknown keys
/// and wrongly typed values raise ConfigError naming the field.
TrainConfig parse_config(const std::string& json_text);
TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides = {});

/// Applies "dotted.key=value" overrides to a config document (JSON text).
/// The value is parsed as JSON when possible and taken as a string otherwise.
std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides);

}  // namespace sscd
