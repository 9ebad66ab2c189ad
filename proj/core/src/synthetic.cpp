#include "sscd/synthetic.hpp"

#include <torch/torch.h>

#include "sscd/error.hpp"
#include "sscd/image_io.hpp"

namespace F = torch::nn::functional;

namespace sscd {
namespace {

torch::Tensor texture(int64_t size, Rng& rng) {
  const int64_t coarse = std::max<int64_t>(2, size / 8);
  auto base = rng.uniform_tensor({1, 3, coarse, coarse}, 0.15, 0.65);
  base = F::interpolate(base, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{size, size})
                                  .mode(torch::kBilinear)
                                  .align_corners(false))
             .squeeze(0);
  return (base + rng.uniform_tensor({3, size, size}, -0.05, 0.05)).clamp(0.0, 1.0);
}

void insert_square(BiTemporalSample& s, int64_t top, int64_t left, int64_t h, int64_t w,
                   Rng& rng) {
  using torch::indexing::Slice;
  auto color = rng.uniform_tensor({3, 1, 1}, 0.8, 1.0);
  auto patch = color.expand({3, h, w}) + rng.uniform_tensor({3, h, w}, -0.02, 0.02);
  s.image_b.index_put_({Slice(), Slice(top, top + h), Slice(left, left + w)},
                       patch.clamp(0.0, 1.0));
  s.mask->index_put_({Slice(top, top + h), Slice(left, left + w)}, 1);
}

}  // namespace

BiTemporalSample make_toy_pair(const ToyCorpusOptions& o, Rng& rng, std::string id) {
  if (o.size < 1 || o.min_side < 1 || o.max_side < o.min_side || o.max_side > o.size ||
      o.min_changes < 0 || o.max_changes < o.min_changes) {
    throw ValidationError("make_toy_pair: inconsistent options");
  }
  BiTemporalSample s;
  s.id = std::move(id);
  s.image_a = texture(o.size, rng);
  const double gain = 1.0 + rng.uniform(-o.brightness_jitter, o.brightness_jitter);
  s.image_b = s.image_a * gain;
  s.image_a = (s.image_a + rng.uniform_tensor({3, o.size, o.size}, -o.sensor_noise, o.sensor_noise))
                  .clamp(0.0, 1.0);
  s.image_b = (s.image_b + rng.uniform_tensor({3, o.size, o.size}, -o.sensor_noise, o.sensor_noise))
                  .clamp(0.0, 1.0);
  s.mask = torch::zeros({o.size, o.size}, torch::kUInt8);
  const auto changes = o.min_changes + static_cast<int>(rng.below(o.max_changes - o.min_changes + 1));
  for (int c = 0; c < changes; ++c) {
    const auto h = o.min_side + static_cast<int64_t>(rng.below(o.max_side - o.min_side + 1));
    const auto w = o.min_side + static_cast<int64_t>(rng.below(o.max_side - o.min_side + 1));
    const auto top = static_cast<int64_t>(rng.below(o.size - h + 1));
    const auto left = static_cast<int64_t>(rng.below(o.size - w + 1));
    insert_square(s, top, left, h, w, rng);
  }
  return s;
}

std::vector<BiTemporalSample> make_toy_corpus(const ToyCorpusOptions& options) {
  std::vector<BiTemporalSample> out;
  out.reserve(static_cast<std::size_t>(options.count));
  for (int64_t i = 0; i < options.count; ++i) {
    Rng rng(derive_seed(options.seed, {stream_tag("toy-pair"), static_cast<std::uint64_t>(i)}));
    char id[32];
    std::snprintf(id, sizeof(id), "toy_%04lld", static_cast<long long>(i));
    out.push_back(make_toy_pair(options, rng, id));
  }
  return out;
}

BiTemporalSample make_square_pair(int64_t size, int64_t top, int64_t left, int64_t side,
                                  std::uint64_t seed, double brightness_jitter) {
  if (top < 0 || left < 0 || top + side > size || left + side > size) {
    throw ValidationError("make_square_pair: square outside the image");
  }
  Rng rng(derive_seed(seed, {stream_tag("square-pair")}));
  BiTemporalSample s;
  s.id = "square";
  s.image_a = texture(size, rng);
  s.image_b = (s.image_a * (1.0 + rng.uniform(-brightness_jitter, brightness_jitter)))
                  .clamp(0.0, 1.0);
  s.mask = torch::zeros({size, size}, torch::kUInt8);
  insert_square(s, top, left, side, side, rng);
  return s;
}

void write_pairs(const std::vector<BiTemporalSample>& samples, const std::filesystem::path& dir) {
  for (const auto& s : samples) {
    const auto name = s.id + ".png";
    write_tensor_png(dir / "A" / name, s.image_a);
    write_tensor_png(dir / "B" / name, s.image_b);
    if (s.mask) write_tensor_png(dir / "label" / name, s.mask->to(torch::kFloat32));
  }
}

}  // namespace sscd
