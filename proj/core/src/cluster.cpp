#include "sscd/cluster.hpp"

#include <sstream>

#include <torch/torch.h>

#include "sscd/error.hpp"

namespace sscd {

torch::Tensor neighbour_density(const torch::Tensor& vectors, bool squared) {
  using torch::indexing::Slice;
  if (vectors.dim() != 3) throw ValidationError("neighbour_density: expected [D, h, w]");
  const auto v = vectors.detach().to(torch::kFloat64);
  const int64_t h = v.size(1), w = v.size(2);
  auto sum = torch::zeros({h, w}, torch::kFloat64);
  auto count = torch::zeros({h, w}, torch::kFloat64);
  for (int64_t dy = -1; dy <= 1; ++dy) {
    for (int64_t dx = -1; dx <= 1; ++dx) {
      if (dy == 0 && dx == 0) continue;
      const int64_t y0 = std::max<int64_t>(0, -dy), y1 = h - std::max<int64_t>(0, dy);
      const int64_t x0 = std::max<int64_t>(0, -dx), x1 = w - std::max<int64_t>(0, dx);
      if (y1 <= y0 || x1 <= x0) continue;
      auto here = v.index({Slice(), Slice(y0, y1), Slice(x0, x1)});
      auto there = v.index({Slice(), Slice(y0 + dy, y1 + dy), Slice(x0 + dx, x1 + dx)});
      auto dist = (here - there).pow(2).sum(0);
      if (!squared) dist = dist.sqrt();
      sum.index({Slice(y0, y1), Slice(x0, x1)}) += dist;
      count.index({Slice(y0, y1), Slice(x0, x1)}) += 1.0;
    }
  }
  return sum / count.clamp_min(1.0);
}

DensityMap image_domain_density(const BiTemporalSample& sample) {
  sample.validate();
  constexpr int64_t p = kImagePatchSize;
  if (sample.height() < 3 * p || sample.width() < 3 * p) {
    throw ValidationError("image_domain_density: image must be at least 45x45, got " +
                          std::to_string(sample.height()) + "x" + std::to_string(sample.width()));
  }
  using torch::indexing::Slice;
  const int64_t gh = sample.height() / p, gw = sample.width() / p;
  auto composite = torch::cat({sample.image_a, sample.image_b}, 0).to(torch::kFloat64);
  composite = composite.index({Slice(), Slice(0, gh * p), Slice(0, gw * p)});
  // [6, gh, p, gw, p] -> [6, p, p, gh, gw] -> [6 * p * p, gh, gw]
  auto vectors = composite.reshape({6, gh, p, gw, p}).permute({0, 2, 4, 1, 3}).reshape({6 * p * p, gh, gw});
  return {neighbour_density(vectors, /*squared=*/false), DensityDomain::Image, p};
}

DensityMap feature_domain_density(const torch::Tensor& fd) {
  auto v = fd;
  if (v.dim() == 4) {
    if (v.size(0) != 1) throw ValidationError("feature_domain_density: expected a single map");
    v = v.squeeze(0);
  }
  if (v.dim() != 3 || v.size(1) < 3 || v.size(2) < 3) {
    std::ostringstream os;
    os << "feature_domain_density: need a [C, h, w] map with h, w >= 3, got " << fd.sizes();
    throw ValidationError(os.str());
  }
  return {neighbour_density(v, /*squared=*/true), DensityDomain::Feature, 4};
}

DensityMap feature_domain_density(const FeatureDifferenceMap& fd) {
  return feature_domain_density(fd.data);
}

torch::Tensor mask_boundary(const torch::Tensor& mask) {
  using torch::indexing::Slice;
  if (mask.dim() != 2) throw ValidationError("mask_boundary: expected [H, W]");
  auto m = mask.detach().ne(0);
  // Pad with "unset" so pixels on the image border count as boundary.
  auto padded = torch::constant_pad_nd(m.to(torch::kUInt8), {1, 1, 1, 1}, 0).ne(0);
  const int64_t h = m.size(0), w = m.size(1);
  auto up = padded.index({Slice(0, h), Slice(1, w + 1)});
  auto down = padded.index({Slice(2, h + 2), Slice(1, w + 1)});
  auto left = padded.index({Slice(1, h + 1), Slice(0, w)});
  auto right = padded.index({Slice(1, h + 1), Slice(2, w + 2)});
  auto interior = up.logical_and(down).logical_and(left).logical_and(right);
  return m.logical_and(interior.logical_not());
}

RasterU8 render_density(const DensityMap& density, const std::optional<torch::Tensor>& gt) {
  const auto values = density.values.to(torch::kFloat64);
  const int64_t gh = values.size(0), gw = values.size(1), cs = density.cell_size;
  const double lo = values.min().item<double>(), hi = values.max().item<double>();
  auto norm = hi > lo ? (values - lo) / (hi - lo) : torch::zeros_like(values);
  auto up = norm.repeat_interleave(cs, 0).repeat_interleave(cs, 1);  // [gh*cs, gw*cs]

  auto red = (up * 255.0).round().to(torch::kUInt8);
  auto blue = ((1.0 - up) * 255.0).round().to(torch::kUInt8);
  auto green = torch::zeros_like(red);
  if (gt) {
    using torch::indexing::Slice;
    auto boundary = mask_boundary(*gt);
    const int64_t h = std::min(boundary.size(0), gh * cs);
    const int64_t w = std::min(boundary.size(1), gw * cs);
    auto b = torch::zeros({gh * cs, gw * cs}, torch::kBool);
    b.index_put_({Slice(0, h), Slice(0, w)}, boundary.index({Slice(0, h), Slice(0, w)}));
    red.masked_fill_(b, 0);
    blue.masked_fill_(b, 0);
  }
  auto hwc = torch::stack({red, green, blue}, 2).contiguous();
  RasterU8 raster;
  raster.width = static_cast<int>(gw * cs);
  raster.height = static_cast<int>(gh * cs);
  raster.channels = 3;
  raster.pixels.assign(hwc.data_ptr<std::uint8_t>(), hwc.data_ptr<std::uint8_t>() + hwc.numel());
  return raster;
}

void write_density(const std::filesystem::path& path, const DensityMap& density,
                   const std::optional<torch::Tensor>& gt) {
  write_png(path, render_density(density, gt));
}

}  // namespace sscd
