#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <torch/types.h>

#include "sscd/rng.hpp"
#include "sscd/types.hpp"

namespace sscd {

/// Parameters for every perturbation family. Only the fields relevant to a
/// spec's kind are read.
struct PerturbationParams {
  double noise_bound = 0.3;  // N ~ U(-b, b)
  double drop_min = 0.6;     // gamma ~ U(drop_min, drop_max)
  double drop_max = 0.9;
  double cutout_min = 0.25;  // side fraction per axis ~ U(cutout_min, cutout_max)
  double cutout_max = 0.5;
  double vat_xi = 1e-6;
  double vat_eps = 2.0;
  int vat_iterations = 1;
  double threshold = 0.5;  // change-probability cut for prediction-derived masks

  void validate() const;
  bool operator==(const PerturbationParams&) const = default;
};

struct PerturbationSpec {
  PerturbationKind kind;
  PerturbationParams params;

  bool operator==(const PerturbationSpec&) const = default;
};

/// FN, FD, GFC, CM, OM, VAT with default parameters.
std::vector<PerturbationSpec> default_perturbation_specs();
std::vector<PerturbationSpec> specs_for(const std::vector<PerturbationKind>& kinds);

// All operations below work on batches: [N, C, h, w] feature differences and
// [N, 2, 4h, 4w] predictions. Per-sample quantities (thresholds, boxes, norms)
// are drawn independently for each item in the batch.

/// out = f + U(-bound, bound) * f, elementwise.
FeatureDifferenceMap feature_noise(const FeatureDifferenceMap& fd, Rng& rng,
                                   double bound = 0.3);

struct FeatureDropResult {
  FeatureDifferenceMap features;
  torch::Tensor keep_mask;        // float [N, 1, h, w] in {0, 1}
  std::vector<double> gamma;      // threshold drawn per sample
  std::vector<bool> degenerate;   // sample was spatially constant; left unchanged
};

/// Drops cells whose min-max normalised channel-mean magnitude is >= gamma.
FeatureDropResult feature_drop(const FeatureDifferenceMap& fd, Rng& rng,
                               double gamma_min = 0.6, double gamma_max = 0.9);

/// Binarised change prediction (prob >= threshold) pooled onto the feature grid:
/// a cell counts as change when at least half of its pixels are change.
/// Returns float [N, h, w] in {0, 1}.
torch::Tensor change_cells(const ChangeProbabilityMap& y_hat, int64_t height,
                           int64_t width, double threshold = 0.5);

/// Cutout rectangle in feature-grid coordinates before clipping.
struct CutoutBox {
  int64_t center_row = 0, center_col = 0;
  int64_t top = 0, left = 0;
  int64_t height = 0, width = 0;
  bool guided = false;  // centre drawn from predicted-change cells
};

struct GuidedCutoutResult {
  FeatureDifferenceMap features;
  std::vector<CutoutBox> boxes;
};

/// Zeroes one axis-aligned rectangle per sample, centred on a random predicted
/// change cell (or any cell when nothing is predicted as change).
GuidedCutoutResult guided_cutout(const FeatureDifferenceMap& fd,
                                 const ChangeProbabilityMap& y_hat, Rng& rng,
                                 double side_min = 0.25, double side_max = 0.5,
                                 double threshold = 0.5);

struct MaskedViews {
  FeatureDifferenceMap object_view;   // change cells zeroed: f * (1 - M_c)
  FeatureDifferenceMap content_view;  // no-change cells zeroed: f * M_c
};

MaskedViews content_object_masks(const FeatureDifferenceMap& fd,
                                 const ChangeProbabilityMap& y_hat,
                                 double threshold = 0.5);

/// Maps a feature difference tensor to the decoder's probability output.
using ProbabilityFn = std::function<torch::Tensor(const torch::Tensor&)>;

struct VatParams {
  double xi = 1e-6;
  double eps = 2.0;
  int iterations = 1;
};

struct FeatureVatResult {
  FeatureDifferenceMap features;
  torch::Tensor perturbation;  // p_adv, detached
  std::vector<bool> fallback;  // zero gradient; random direction kept
};

/// Virtual adversarial perturbation found by power iteration on the decoder's
/// sensitivity. `reference` is the decoder output at fd (the unperturbed
/// prediction). Each sample's perturbation has L2 norm eps. The perturbation
/// is a constant: no gradient flows through its construction and decoder
/// parameter gradients are left untouched.
FeatureVatResult feature_vat(const FeatureDifferenceMap& fd, const ProbabilityFn& decoder,
                             const torch::Tensor& reference, Rng& rng,
                             const VatParams& params = {});

/// One perturbed map per spec, in spec order. `decoder_count` is the number of
/// auxiliary decoders that will consume the outputs and must equal specs.size().
std::vector<FeatureDifferenceMap> apply_all(const FeatureDifferenceMap& fd,
                                            const ChangeProbabilityMap& y_hat,
                                            const std::vector<PerturbationSpec>& specs,
                                            Rng& rng, const ProbabilityFn& main_decoder,
                                            std::size_t decoder_count);

}  // namespace sscd
