#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <torch/nn.h>

#include "sscd/types.hpp"

namespace sscd {

enum class Backbone { Full, Tiny };

std::string_view to_string(Backbone backbone);
Backbone parse_backbone(std::string_view name);

/// Topology of the change-detection network. Two models with equal
/// `hash()` have interchangeable parameter sets.
struct ModelConfig {
  Backbone backbone = Backbone::Full;
  int64_t encoder_channels = 2048;  // fixed at 2048 for Backbone::Full
  int64_t diff_channels = 512;
  int64_t decoder_channels = 128;
  std::vector<PerturbationKind> auxiliaries = all_perturbation_kinds();

  /// 4 conv stages, output stride 4, 64 encoder channels.
  static ModelConfig tiny();

  void validate() const;
  std::string canonical() const;
  std::uint64_t hash() const;
};

/// Output of the full Siamese pass. The difference map is kept so that the
/// unsupervised phase can perturb it without re-encoding.
struct CdOutput {
  ChangeProbabilityMap prediction;
  FeatureDifferenceMap difference;
};

/// Pyramid pooling over |F_A - F_B|: pooled branches at scales {1, 2, 3, 6},
/// upsampled, concatenated with the input and fused by a 3x3 convolution.
class PyramidPoolingImpl : public torch::nn::Module {
 public:
  PyramidPoolingImpl(int64_t in_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  static constexpr std::array<int64_t, 4> kScales{1, 2, 3, 6};

 private:
  std::vector<torch::nn::Conv2d> branches_;
  torch::nn::Conv2d fuse_{nullptr};
};
TORCH_MODULE(PyramidPooling);

/// Two sub-pixel x2 upsampling stages followed by a 1x1 projection to 2 logits.
class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl(int64_t in_channels, int64_t hidden_channels);
  /// Returns logits [N, 2, 4h, 4w].
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d up1_{nullptr}, up2_{nullptr}, classifier_{nullptr};
};
TORCH_MODULE(Decoder);

/// f_CD = decoder . PPM . |encoder(a) - encoder(b)| with a shared-weight encoder,
/// plus one auxiliary decoder per enabled perturbation.
class ChangeDetectorImpl : public torch::nn::Module {
 public:
  explicit ChangeDetectorImpl(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// image: [N, 3, H, W] with H, W divisible by 32.
  FeatureMap encode(const torch::Tensor& image);
  /// Elementwise |a - b|; exposed for inspection.
  static torch::Tensor absolute_difference(const FeatureMap& a, const FeatureMap& b);
  FeatureDifferenceMap feature_difference(const FeatureMap& a, const FeatureMap& b);

  ChangeProbabilityMap decode(const FeatureDifferenceMap& fd);
  ChangeProbabilityMap decode_auxiliary(const FeatureDifferenceMap& fd, std::size_t index);

  CdOutput forward(const torch::Tensor& image_a, const torch::Tensor& image_b);

  Decoder main_decoder() const { return main_decoder_; }
  Decoder auxiliary_decoder(std::size_t index) const;
  std::size_t auxiliary_count() const { return auxiliaries_.size(); }
  PerturbationKind auxiliary_kind(std::size_t index) const;

  /// Parameters grouped by role; used to check gradient isolation.
  std::vector<torch::Tensor> encoder_parameters() const;
  std::vector<torch::Tensor> auxiliary_parameters() const;

 private:
  ModelConfig config_;
  torch::nn::Sequential encoder_{nullptr};
  PyramidPooling ppm_{nullptr};
  Decoder main_decoder_{nullptr};
  std::vector<Decoder> auxiliaries_;
};
TORCH_MODULE(ChangeDetector);

/// Pads a [N, C, H, W] batch reflectively so H and W become multiples of
/// `multiple`; returns the padded tensor. Crop back with [..., :H, :W].
torch::Tensor pad_to_multiple(const torch::Tensor& images, int64_t multiple);

}  // namespace sscd
