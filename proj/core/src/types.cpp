#include "sscd/types.hpp"

#include <array>

#include <torch/torch.h>

#include "sscd/error.hpp"

namespace sscd {
namespace {

struct KindNames {
  PerturbationKind kind;
  std::string_view name;
  std::string_view short_name;
};

constexpr std::array<KindNames, 6> kKinds{{
    {PerturbationKind::FeatureNoise, "feature_noise", "FN"},
    {PerturbationKind::FeatureDrop, "feature_drop", "FD"},
    {PerturbationKind::GuidedCutout, "guided_cutout", "GFC"},
    {PerturbationKind::ContentMask, "content_mask", "CM"},
    {PerturbationKind::ObjectMask, "object_mask", "OM"},
    {PerturbationKind::FeatureVat, "feature_vat", "VAT"},
}};

const KindNames& lookup(PerturbationKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  throw ValidationError("unknown perturbation kind");
}

}  // namespace

ChangeProbabilityMap ChangeProbabilityMap::from_logits(torch::Tensor logits) {
  auto probs = torch::softmax(logits, 1);
  return {std::move(logits), std::move(probs)};
}

ChangeProbabilityMap ChangeProbabilityMap::detached() const {
  return {logits.detach(), probs.detach()};
}

std::string_view to_string(PerturbationKind kind) { return lookup(kind).name; }

std::string_view short_name(PerturbationKind kind) { return lookup(kind).short_name; }

PerturbationKind parse_perturbation_kind(std::string_view name) {
  for (const auto& k : kKinds) {
    if (k.name == name) return k.kind;
  }
  throw ConfigError("unknown perturbation kind '" + std::string(name) + "'");
}

const std::vector<PerturbationKind>& all_perturbation_kinds() {
  static const std::vector<PerturbationKind> kinds = [] {
    std::vector<PerturbationKind> v;
    for (const auto& k : kKinds) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

}  // namespace sscd
