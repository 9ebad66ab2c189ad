#include <algorithm>
#include <cmath>

#include <torch/torch.h>

#include "sscd/datasets.hpp"
#include "sscd/error.hpp"

namespace F = torch::nn::functional;

namespace sscd {
namespace {

// Brightness, contrast and saturation, each scaled by 1 + U(-s, s).
torch::Tensor color_jitter(torch::Tensor image, double strength, Rng& rng) {
  const double brightness = 1.0 + rng.uniform(-strength, strength);
  const double contrast = 1.0 + rng.uniform(-strength, strength);
  const double saturation = 1.0 + rng.uniform(-strength, strength);
  image = image * brightness;
  const auto mean = image.mean();
  image = (image - mean) * contrast + mean;
  const auto gray = (image * torch::tensor({0.299, 0.587, 0.114}, image.options())
                                 .view({3, 1, 1}))
                        .sum(0, /*keepdim=*/true);
  image = (image - gray) * saturation + gray;
  return image.clamp(0.0, 1.0);
}

torch::Tensor crop(const torch::Tensor& t, int64_t y, int64_t x, int64_t size) {
  using torch::indexing::Slice;
  return t.index({Slice(), Slice(y, y + size), Slice(x, x + size)});
}

}  // namespace

namespace {

// Source index for each output position of a reflect-padded axis; repeats the
// reflection as often as needed, so the pad may exceed the axis length.
torch::Tensor reflect_index(int64_t size, int64_t before, int64_t total) {
  std::vector<int64_t> idx(static_cast<std::size_t>(total));
  const int64_t period = 2 * (size - 1);
  for (int64_t i = 0; i < total; ++i) {
    int64_t j = i - before;
    if (period > 0) {
      j = ((j % period) + period) % period;
      if (j >= size) j = period - j;
    } else {
      j = 0;
    }
    idx[static_cast<std::size_t>(i)] = j;
  }
  return torch::tensor(idx, torch::kInt64);
}

}  // namespace

torch::Tensor reflect_pad_to(const torch::Tensor& image, int64_t height, int64_t width) {
  const int64_t h = image.size(-2), w = image.size(-1);
  const int64_t th = std::max(height, h), tw = std::max(width, w);
  if (th == h && tw == w) return image;
  return image.index_select(-2, reflect_index(h, (th - h) / 2, th))
      .index_select(-1, reflect_index(w, (tw - w) / 2, tw));
}

torch::Tensor gaussian_blur(const torch::Tensor& image, double sigma) {
  if (sigma <= 0) return image.clone();
  const int64_t channels = image.size(0);
  const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3.0 * sigma)));
  auto xs = torch::arange(-radius, radius + 1, image.options());
  auto kernel = torch::exp(-(xs * xs) / (2.0 * sigma * sigma));
  kernel = kernel / kernel.sum();
  auto kh = kernel.view({1, 1, -1, 1}).expand({channels, 1, 2 * radius + 1, 1}).contiguous();
  auto kw = kernel.view({1, 1, 1, -1}).expand({channels, 1, 1, 2 * radius + 1}).contiguous();
  auto x = image.unsqueeze(0);
  const bool can_reflect = radius < image.size(1) && radius < image.size(2);
  x = F::pad(x, F::PadFuncOptions({radius, radius, radius, radius})
                    .mode(can_reflect ? F::PadFuncOptions::mode_t(torch::kReflect)
                                      : F::PadFuncOptions::mode_t(torch::kReplicate)));
  x = F::conv2d(x, kh, F::Conv2dFuncOptions().groups(channels));
  x = F::conv2d(x, kw, F::Conv2dFuncOptions().groups(channels));
  return x.squeeze(0);
}

BiTemporalSample augment(const BiTemporalSample& sample, const AugmentationConfig& config,
                         Rng& rng) {
  config.validate();
  sample.validate();
  torch::NoGradGuard no_grad;

  auto a = sample.image_a;
  auto b = sample.image_b;
  std::optional<torch::Tensor> mask;
  if (sample.mask) mask = sample.mask->unsqueeze(0);  // [1, H, W]

  // Geometric transforms: one draw, applied to all three tensors.
  auto geometric = [&](auto&& fn) {
    a = fn(a, false);
    b = fn(b, false);
    if (mask) *mask = fn(*mask, true);
  };
  if (rng.bernoulli(config.flip_prob)) {
    geometric([](const torch::Tensor& t, bool) { return t.flip({2}); });
  }
  if (rng.bernoulli(config.flip_prob)) {
    geometric([](const torch::Tensor& t, bool) { return t.flip({1}); });
  }

  const double scale = rng.uniform(config.rescale_min, config.rescale_max);
  const auto new_h = std::max<int64_t>(1, std::llround(sample.height() * scale));
  const auto new_w = std::max<int64_t>(1, std::llround(sample.width() * scale));
  if (new_h != sample.height() || new_w != sample.width()) {
    geometric([&](const torch::Tensor& t, bool is_mask) {
      auto x = t.unsqueeze(0).to(torch::kFloat32);
      if (is_mask) {
        x = F::interpolate(x, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{new_h, new_w})
                                  .mode(torch::kNearest));
        return x.squeeze(0).to(torch::kUInt8);
      }
      x = F::interpolate(x, F::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{new_h, new_w})
                                .mode(torch::kBilinear)
                                .align_corners(false));
      return x.squeeze(0).clamp(0.0, 1.0);
    });
  }

  const int64_t crop_size = config.crop_size;
  if (a.size(1) < crop_size || a.size(2) < crop_size) {
    geometric([&](const torch::Tensor& t, bool) {
      return reflect_pad_to(t, crop_size, crop_size);
    });
  }
  const auto y0 = static_cast<int64_t>(rng.below(a.size(1) - crop_size + 1));
  const auto x0 = static_cast<int64_t>(rng.below(a.size(2) - crop_size + 1));
  geometric([&](const torch::Tensor& t, bool) { return crop(t, y0, x0, crop_size); });

  // Photometric transforms: independent per image.
  auto photometric = [&](torch::Tensor img) {
    if (rng.bernoulli(config.blur_prob)) img = gaussian_blur(img, rng.uniform(0.1, 2.0));
    if (config.jitter_strength > 0) img = color_jitter(img, config.jitter_strength, rng);
    return img;
  };
  a = photometric(a);
  b = photometric(b);

  BiTemporalSample out;
  out.image_a = a.contiguous();
  out.image_b = b.contiguous();
  if (mask) out.mask = mask->squeeze(0).contiguous();
  out.id = sample.id;
  return out;
}

}  // namespace sscd
