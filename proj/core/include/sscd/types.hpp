#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

namespace sscd {

/// Encoder output, [N, C_e, H/4, W/4].
struct FeatureMap {
  torch::Tensor data;
};

/// Pyramid-pooled absolute feature difference, [N, C_d, H/4, W/4].
/// This is the domain where the consistency perturbations act.
struct FeatureDifferenceMap {
  torch::Tensor data;

  int64_t height() const { return data.size(2); }
  int64_t width() const { return data.size(3); }
};

/// Two-class decoder output. Channel 1 is the change class.
struct ChangeProbabilityMap {
  torch::Tensor logits;  // [N, 2, H, W]
  torch::Tensor probs;   // softmax over dim 1

  static ChangeProbabilityMap from_logits(torch::Tensor logits);
  /// Copy with both tensors cut from the autograd graph.
  ChangeProbabilityMap detached() const;
  /// Change-class probability, [N, H, W].
  torch::Tensor change_probability() const { return probs.select(1, 1); }
};

enum class PerturbationKind {
  FeatureNoise,
  FeatureDrop,
  GuidedCutout,
  ContentMask,
  ObjectMask,
  FeatureVat,
};

/// Canonical config name, e.g. "feature_noise".
std::string_view to_string(PerturbationKind kind);
/// Short label used in ablation tables, e.g. "FN".
std::string_view short_name(PerturbationKind kind);
/// Accepts the canonical name; throws ConfigError otherwise.
PerturbationKind parse_perturbation_kind(std::string_view name);

/// The full perturbation set in auxiliary-decoder order.
const std::vector<PerturbationKind>& all_perturbation_kinds();

}  // namespace sscd
