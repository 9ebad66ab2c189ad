#include "sscd/perturb.hpp"

#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>

#include <torch/torch.h>

#include "sscd/error.hpp"

namespace F = torch::nn::functional;

namespace sscd {
namespace {

void require_batch(const FeatureDifferenceMap& fd, const char* op) {
  if (!fd.data.defined() || fd.data.dim() != 4) {
    throw ValidationError(std::string(op) + ": expected a [N, C, h, w] feature difference map");
  }
}

void require_prediction_grid(const FeatureDifferenceMap& fd, const ChangeProbabilityMap& y_hat,
                             const char* op) {
  const auto& p = y_hat.probs;
  if (!p.defined() || p.dim() != 4 || p.size(1) != 2 || p.size(0) != fd.data.size(0) ||
      p.size(2) != 4 * fd.height() || p.size(3) != 4 * fd.width()) {
    std::ostringstream os;
    os << op << ": prediction " << (p.defined() ? p.sizes() : at::IntArrayRef{})
       << " does not map onto feature grid " << fd.data.sizes() << " by a factor of 4";
    throw ValidationError(os.str());
  }
}

// Per-sample L2 normalisation over all non-batch dims.
torch::Tensor unit_per_sample(const torch::Tensor& d) {
  auto norms = d.flatten(1).norm(2, 1).clamp_min(1e-30);
  return d / norms.view({-1, 1, 1, 1});
}

}  // namespace

void PerturbationParams::validate() const {
  if (noise_bound < 0) throw ValidationError("noise_bound must be >= 0");
  if (!(0 <= drop_min && drop_min <= drop_max && drop_max <= 1)) {
    throw ValidationError("feature drop range must satisfy 0 <= min <= max <= 1");
  }
  if (!(0 < cutout_min && cutout_min <= cutout_max && cutout_max <= 1)) {
    throw ValidationError("cutout range must satisfy 0 < min <= max <= 1");
  }
  if (!(vat_xi > 0) || !(vat_eps > 0) || vat_iterations < 1) {
    throw ValidationError("VAT needs xi > 0, eps > 0 and at least one iteration");
  }
  if (!(threshold > 0 && threshold < 1)) throw ValidationError("threshold must lie in (0, 1)");
}

std::vector<PerturbationSpec> default_perturbation_specs() {
  return specs_for(all_perturbation_kinds());
}

std::vector<PerturbationSpec> specs_for(const std::vector<PerturbationKind>& kinds) {
  std::vector<PerturbationSpec> specs;
  for (auto k : kinds) specs.push_back({k, {}});
  return specs;
}

FeatureDifferenceMap feature_noise(const FeatureDifferenceMap& fd, Rng& rng, double bound) {
  require_batch(fd, "feature_noise");
  auto noise = rng.uniform_tensor(fd.data.sizes(), -bound, bound, fd.data.scalar_type());
  return {fd.data + noise * fd.data};
}

FeatureDropResult feature_drop(const FeatureDifferenceMap& fd, Rng& rng, double gamma_min,
                               double gamma_max) {
  require_batch(fd, "feature_drop");
  const int64_t n = fd.data.size(0);
  FeatureDropResult out;
  torch::Tensor keep;
  {
    torch::NoGradGuard no_grad;
    auto magnitude = fd.data.detach().abs().mean(1, /*keepdim=*/true);  // [N,1,h,w]
    auto flat = magnitude.flatten(1);
    auto lo = std::get<0>(flat.min(1)).view({-1, 1, 1, 1});
    auto hi = std::get<0>(flat.max(1)).view({-1, 1, 1, 1});
    auto normalized = (magnitude - lo) / (hi - lo);
    keep = torch::ones_like(magnitude);
    for (int64_t i = 0; i < n; ++i) {
      const double gamma = rng.uniform(gamma_min, gamma_max);
      out.gamma.push_back(gamma);
      const bool degenerate = (hi[i] - lo[i]).item<double>() <= 0.0;
      out.degenerate.push_back(degenerate);
      if (degenerate) {
        std::cerr << "[sscd] warning: feature_drop on a spatially constant map; "
                     "sample left unchanged\n";
        continue;
      }
      keep[i] = normalized[i].lt(gamma).to(keep.scalar_type());
    }
  }
  out.keep_mask = keep;
  out.features = {fd.data * keep};
  return out;
}

torch::Tensor change_cells(const ChangeProbabilityMap& y_hat, int64_t height, int64_t width,
                           double threshold) {
  torch::NoGradGuard no_grad;
  auto binary = y_hat.change_probability().detach().ge(threshold).to(torch::kFloat32);
  const int64_t fy = binary.size(1) / height, fx = binary.size(2) / width;
  auto pooled = F::avg_pool2d(binary.unsqueeze(1),
                              F::AvgPool2dFuncOptions({fy, fx}).stride({fy, fx}));
  return pooled.squeeze(1).ge(0.5).to(torch::kFloat32);
}

GuidedCutoutResult guided_cutout(const FeatureDifferenceMap& fd,
                                 const ChangeProbabilityMap& y_hat, Rng& rng,
                                 double side_min, double side_max, double threshold) {
  require_batch(fd, "guided_cutout");
  require_prediction_grid(fd, y_hat, "guided_cutout");
  const int64_t n = fd.data.size(0), h = fd.height(), w = fd.width();
  auto cells = change_cells(y_hat, h, w, threshold);
  auto keep = torch::ones({n, 1, h, w}, fd.data.options().requires_grad(false));

  GuidedCutoutResult out;
  for (int64_t i = 0; i < n; ++i) {
    auto candidates = cells[i].flatten().nonzero().flatten();
    CutoutBox box;
    int64_t flat_index;
    if (candidates.numel() > 0) {
      box.guided = true;
      flat_index = candidates[static_cast<int64_t>(rng.below(candidates.numel()))]
                       .item<int64_t>();
    } else {
      flat_index = static_cast<int64_t>(rng.below(h * w));
    }
    box.center_row = flat_index / w;
    box.center_col = flat_index % w;
    box.height = std::max<int64_t>(1, std::llround(rng.uniform(side_min, side_max) * h));
    box.width = std::max<int64_t>(1, std::llround(rng.uniform(side_min, side_max) * w));
    box.top = box.center_row - box.height / 2;
    box.left = box.center_col - box.width / 2;
    const int64_t r0 = std::max<int64_t>(0, box.top);
    const int64_t r1 = std::min(h, box.top + box.height);
    const int64_t c0 = std::max<int64_t>(0, box.left);
    const int64_t c1 = std::min(w, box.left + box.width);
    using torch::indexing::Slice;
    keep.index_put_({i, Slice(), Slice(r0, r1), Slice(c0, c1)}, 0.0);
    out.boxes.push_back(box);
  }
  out.features = {fd.data * keep};
  return out;
}

MaskedViews content_object_masks(const FeatureDifferenceMap& fd,
                                 const ChangeProbabilityMap& y_hat, double threshold) {
  require_batch(fd, "content_object_masks");
  require_prediction_grid(fd, y_hat, "content_object_masks");
  auto change = change_cells(y_hat, fd.height(), fd.width(), threshold)
                    .unsqueeze(1)
                    .to(fd.data.scalar_type());
  return {{fd.data * (1.0 - change)}, {fd.data * change}};
}

FeatureVatResult feature_vat(const FeatureDifferenceMap& fd, const ProbabilityFn& decoder,
                             const torch::Tensor& reference, Rng& rng,
                             const VatParams& params) {
  require_batch(fd, "feature_vat");
  const int64_t n = fd.data.size(0);
  torch::AutoGradMode enable_grad(true);

  const auto base = fd.data.detach();
  const auto target = reference.detach();
  auto random_dir = unit_per_sample(rng.normal_tensor(base.sizes(), base.scalar_type()));
  auto d = random_dir;
  torch::Tensor raw;
  for (int k = 0; k < params.iterations; ++k) {
    auto probe = d.detach().clone().requires_grad_(true);
    auto distance = (decoder(base + params.xi * probe) - target).pow(2).mean();
    torch::Tensor grad;
    if (distance.requires_grad()) {
      grad = torch::autograd::grad({distance}, {probe}, {}, /*retain_graph=*/false,
                                   /*create_graph=*/false, /*allow_unused=*/true)[0];
    }
    if (!grad.defined()) grad = torch::zeros_like(probe);
    raw = grad.detach();
    d = unit_per_sample(raw);
  }

  FeatureVatResult out;
  auto norms = raw.flatten(1).norm(2, 1);
  std::vector<torch::Tensor> directions;
  for (int64_t i = 0; i < n; ++i) {
    const double norm = norms[i].item<double>();
    const bool fallback = !(norm > 0.0) || !std::isfinite(norm);
    out.fallback.push_back(fallback);
    if (fallback) {
      std::cerr << "[sscd] warning: feature_vat gradient vanished; using random direction\n";
      directions.push_back(random_dir[i]);
    } else {
      directions.push_back(raw[i] / norm);
    }
  }
  out.perturbation = (params.eps * torch::stack(directions)).detach();
  out.features = {fd.data + out.perturbation};
  return out;
}

std::vector<FeatureDifferenceMap> apply_all(const FeatureDifferenceMap& fd,
                                            const ChangeProbabilityMap& y_hat,
                                            const std::vector<PerturbationSpec>& specs,
                                            Rng& rng, const ProbabilityFn& main_decoder,
                                            std::size_t decoder_count) {
  if (specs.empty()) throw ValidationError("apply_all: no perturbations enabled");
  if (specs.size() != decoder_count) {
    throw ValidationError("apply_all: " + std::to_string(specs.size()) +
                          " perturbations but " + std::to_string(decoder_count) +
                          " auxiliary decoders");
  }
  const auto target = y_hat.detached();
  std::optional<MaskedViews> views;
  auto masked = [&](double threshold) -> const MaskedViews& {
    if (!views) views = content_object_masks(fd, target, threshold);
    return *views;
  };

  std::vector<FeatureDifferenceMap> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) {
    const auto& p = spec.params;
    switch (spec.kind) {
      case PerturbationKind::FeatureNoise:
        out.push_back(feature_noise(fd, rng, p.noise_bound));
        break;
      case PerturbationKind::FeatureDrop:
        out.push_back(feature_drop(fd, rng, p.drop_min, p.drop_max).features);
        break;
      case PerturbationKind::GuidedCutout:
        out.push_back(
            guided_cutout(fd, target, rng, p.cutout_min, p.cutout_max, p.threshold).features);
        break;
      case PerturbationKind::ContentMask:
        out.push_back(masked(p.threshold).content_view);
        break;
      case PerturbationKind::ObjectMask:
        out.push_back(masked(p.threshold).object_view);
        break;
      case PerturbationKind::FeatureVat:
        out.push_back(feature_vat(fd, main_decoder, target.probs, rng,
                                  {p.vat_xi, p.vat_eps, p.vat_iterations})
                          .features);
        break;
    }
  }
  return out;
}

}  // namespace sscd
