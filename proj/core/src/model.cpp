#include "sscd/model.hpp"

#include <sstream>

#include <torch/torch.h>

#include "sscd/error.hpp"
#include "sscd/rng.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace sscd {
namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1,
                int64_t dilation = 1, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel)
                        .stride(stride)
                        .padding(dilation * (kernel / 2))
                        .dilation(dilation)
                        .bias(bias));
}

// Sequential with a concrete forward so it can be nested in another Sequential.
class StageImpl : public nn::SequentialImpl {
 public:
  using nn::SequentialImpl::SequentialImpl;
  torch::Tensor forward(torch::Tensor x) { return nn::SequentialImpl::forward(std::move(x)); }
};
TORCH_MODULE(Stage);

Stage conv_bn_relu(int64_t in, int64_t out, int64_t stride) {
  return Stage(conv(in, out, 3, stride), nn::BatchNorm2d(out),
               nn::ReLU(nn::ReLUOptions(true)));
}

class BottleneckImpl : public nn::Module {
 public:
  BottleneckImpl(int64_t in, int64_t width, int64_t dilation) {
    const int64_t out = width * 4;
    body_ = register_module(
        "body", nn::Sequential(conv(in, width, 1), nn::BatchNorm2d(width),
                               nn::ReLU(nn::ReLUOptions(true)),
                               conv(width, width, 3, 1, dilation), nn::BatchNorm2d(width),
                               nn::ReLU(nn::ReLUOptions(true)), conv(width, out, 1),
                               nn::BatchNorm2d(out)));
    if (in != out) {
      shortcut_ = register_module("shortcut",
                                  nn::Sequential(conv(in, out, 1), nn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto identity = shortcut_ ? shortcut_->forward(x) : x;
    return torch::relu(body_->forward(x) + identity);
  }

 private:
  nn::Sequential body_{nullptr};
  nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(Bottleneck);

// ResNet-50 layout with the stride of layers 2-4 replaced by dilation, so the
// 2048-channel output stays at 1/4 of the input resolution.
nn::Sequential make_resnet50_encoder() {
  nn::Sequential seq;
  seq->push_back("stem", Stage(conv(3, 64, 7, 2), nn::BatchNorm2d(64),
                               nn::ReLU(nn::ReLUOptions(true))));
  seq->push_back("pool", nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
  struct LayerSpec {
    int64_t blocks, width, dilation;
  };
  int64_t in = 64;
  int index = 1;
  for (const LayerSpec& s : {LayerSpec{3, 64, 1}, LayerSpec{4, 128, 1},
                             LayerSpec{6, 256, 2}, LayerSpec{3, 512, 4}}) {
    Stage layer;
    for (int64_t b = 0; b < s.blocks; ++b) {
      layer->push_back(Bottleneck(in, s.width, s.dilation));
      in = s.width * 4;
    }
    seq->push_back("layer" + std::to_string(index++), layer);
  }
  return seq;
}

nn::Sequential make_tiny_encoder(int64_t channels) {
  nn::Sequential seq;
  seq->push_back("stage1", conv_bn_relu(3, 16, 2));
  seq->push_back("stage2", conv_bn_relu(16, 32, 2));
  seq->push_back("stage3", conv_bn_relu(32, channels, 1));
  seq->push_back("stage4", conv_bn_relu(channels, channels, 1));
  return seq;
}

std::string shape_string(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

}  // namespace

std::string_view to_string(Backbone backbone) {
  return backbone == Backbone::Full ? "full" : "tiny";
}

Backbone parse_backbone(std::string_view name) {
  if (name == "full") return Backbone::Full;
  if (name == "tiny") return Backbone::Tiny;
  throw ValidationError("unknown backbone '" + std::string(name) +
                        "' (expected full or tiny)");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.backbone = Backbone::Tiny;
  c.encoder_channels = 64;
  c.diff_channels = 32;
  c.decoder_channels = 16;
  return c;
}

void ModelConfig::validate() const {
  if (backbone == Backbone::Full && encoder_channels != 2048) {
    throw ValidationError("the full backbone produces 2048 channels; got encoder_channels=" +
                          std::to_string(encoder_channels));
  }
  if (encoder_channels < 1 || diff_channels < 1 || decoder_channels < 1) {
    throw ValidationError("model channel counts must be positive");
  }
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os << "backbone=" << to_string(backbone) << ";encoder=" << encoder_channels
     << ";diff=" << diff_channels << ";decoder=" << decoder_channels << ";aux=";
  for (std::size_t i = 0; i < auxiliaries.size(); ++i) {
    os << (i ? "," : "") << to_string(auxiliaries[i]);
  }
  return os.str();
}

std::uint64_t ModelConfig::hash() const { return stream_tag(canonical()); }

PyramidPoolingImpl::PyramidPoolingImpl(int64_t in_channels, int64_t out_channels) {
  const int64_t reduced = std::max<int64_t>(1, in_channels / 4);
  for (std::size_t i = 0; i < kScales.size(); ++i) {
    branches_.push_back(register_module("branch" + std::to_string(kScales[i]),
                                        conv(in_channels, reduced, 1, 1, 1, true)));
  }
  fuse_ = register_module(
      "fuse", conv(in_channels + reduced * static_cast<int64_t>(kScales.size()),
                   out_channels, 3, 1, 1, true));
}

torch::Tensor PyramidPoolingImpl::forward(const torch::Tensor& x) {
  const auto size = std::vector<int64_t>{x.size(2), x.size(3)};
  std::vector<torch::Tensor> parts{x};
  for (std::size_t i = 0; i < kScales.size(); ++i) {
    auto pooled = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(kScales[i]));
    auto y = torch::relu(branches_[i]->forward(pooled));
    parts.push_back(F::interpolate(y, F::InterpolateFuncOptions()
                                          .size(size)
                                          .mode(torch::kBilinear)
                                          .align_corners(false)));
  }
  return torch::relu(fuse_->forward(torch::cat(parts, 1)));
}

DecoderImpl::DecoderImpl(int64_t in_channels, int64_t hidden_channels) {
  up1_ = register_module("up1", conv(in_channels, hidden_channels * 4, 3, 1, 1, true));
  up2_ = register_module("up2", conv(hidden_channels, hidden_channels * 4, 3, 1, 1, true));
  classifier_ = register_module("classifier", conv(hidden_channels, 2, 1, 1, 1, true));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(torch::pixel_shuffle(up1_->forward(x), 2));
  y = torch::relu(torch::pixel_shuffle(up2_->forward(y), 2));
  return classifier_->forward(y);
}

ChangeDetectorImpl::ChangeDetectorImpl(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  encoder_ = register_module("encoder", config_.backbone == Backbone::Full
                                            ? make_resnet50_encoder()
                                            : make_tiny_encoder(config_.encoder_channels));
  ppm_ = register_module("ppm", PyramidPooling(config_.encoder_channels,
                                               config_.diff_channels));
  main_decoder_ = register_module("decoder",
                                  Decoder(config_.diff_channels, config_.decoder_channels));
  for (std::size_t i = 0; i < config_.auxiliaries.size(); ++i) {
    auxiliaries_.push_back(register_module(
        "aux" + std::to_string(i) + "_" + std::string(to_string(config_.auxiliaries[i])),
        Decoder(config_.diff_channels, config_.decoder_channels)));
  }
}

FeatureMap ChangeDetectorImpl::encode(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) {
    throw ValidationError("encode: expected [N, 3, H, W], got " + shape_string(image));
  }
  if (image.size(2) % 32 != 0 || image.size(3) % 32 != 0) {
    throw ValidationError("encode: spatial size " + std::to_string(image.size(2)) + "x" +
                          std::to_string(image.size(3)) +
                          " is not divisible by 32; pad to a multiple of 32 first");
  }
  return {encoder_->forward(image)};
}

torch::Tensor ChangeDetectorImpl::absolute_difference(const FeatureMap& a,
                                                      const FeatureMap& b) {
  if (a.data.sizes() != b.data.sizes()) {
    throw ValidationError("feature_difference: shape mismatch " + shape_string(a.data) +
                          " vs " + shape_string(b.data));
  }
  return torch::abs(a.data - b.data);
}

FeatureDifferenceMap ChangeDetectorImpl::feature_difference(const FeatureMap& a,
                                                            const FeatureMap& b) {
  return {ppm_->forward(absolute_difference(a, b))};
}

ChangeProbabilityMap ChangeDetectorImpl::decode(const FeatureDifferenceMap& fd) {
  return ChangeProbabilityMap::from_logits(main_decoder_->forward(fd.data));
}

ChangeProbabilityMap ChangeDetectorImpl::decode_auxiliary(const FeatureDifferenceMap& fd,
                                                          std::size_t index) {
  return ChangeProbabilityMap::from_logits(auxiliary_decoder(index)->forward(fd.data));
}

CdOutput ChangeDetectorImpl::forward(const torch::Tensor& image_a,
                                     const torch::Tensor& image_b) {
  if (image_a.sizes() != image_b.sizes()) {
    throw ValidationError("forward: image shapes differ " + shape_string(image_a) + " vs " +
                          shape_string(image_b));
  }
  // Both streams go through one encoder call so they share normalization statistics.
  auto features = encode(torch::cat({image_a, image_b}, 0)).data.chunk(2, 0);
  auto fd = feature_difference({features[0]}, {features[1]});
  return {decode(fd), fd};
}

Decoder ChangeDetectorImpl::auxiliary_decoder(std::size_t index) const {
  if (index >= auxiliaries_.size()) {
    throw ValidationError("auxiliary decoder index " + std::to_string(index) +
                          " out of range (have " + std::to_string(auxiliaries_.size()) +
                          ")");
  }
  return auxiliaries_[index];
}

PerturbationKind ChangeDetectorImpl::auxiliary_kind(std::size_t index) const {
  auxiliary_decoder(index);
  return config_.auxiliaries[index];
}

std::vector<torch::Tensor> ChangeDetectorImpl::encoder_parameters() const {
  return encoder_->parameters();
}

std::vector<torch::Tensor> ChangeDetectorImpl::auxiliary_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& d : auxiliaries_) {
    for (auto& p : d->parameters()) out.push_back(p);
  }
  return out;
}

torch::Tensor pad_to_multiple(const torch::Tensor& images, int64_t multiple) {
  const int64_t h = images.size(2), w = images.size(3);
  const int64_t ph = (multiple - h % multiple) % multiple;
  const int64_t pw = (multiple - w % multiple) % multiple;
  if (ph == 0 && pw == 0) return images;
  // Reflection requires the pad to be smaller than the dimension.
  const auto mode = (ph < h && pw < w) ? F::PadFuncOptions::mode_t(torch::kReflect)
                                       : F::PadFuncOptions::mode_t(torch::kReplicate);
  return F::pad(images, F::PadFuncOptions({0, pw, 0, ph}).mode(mode));
}

}  // namespace sscd
