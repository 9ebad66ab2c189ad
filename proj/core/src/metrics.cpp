#include "sscd/metrics.hpp"

#include <fstream>
#include <sstream>

#include <torch/torch.h>

#include <json.hpp>

#include "sscd/error.hpp"

namespace sscd {

torch::Tensor binarize(const ChangeProbabilityMap& y_hat, double threshold) {
  return y_hat.change_probability().detach().ge(threshold).to(torch::kUInt8);
}

ConfusionCounts accumulate(std::span<const std::uint8_t> pred,
                           std::span<const std::uint8_t> gt, ConfusionCounts counts) {
  if (pred.size() != gt.size()) {
    throw ValidationError("accumulate: prediction has " + std::to_string(pred.size()) +
                          " pixels but ground truth has " + std::to_string(gt.size()));
  }
  // Indexed by 2 * gt + pred.
  std::uint64_t bins[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] > 1 || gt[i] > 1) throw ValidationError("accumulate: masks must be binary");
    ++bins[2 * gt[i] + pred[i]];
  }
  counts.tn += bins[0];
  counts.fp += bins[1];
  counts.fn += bins[2];
  counts.tp += bins[3];
  return counts;
}

ConfusionCounts accumulate(const torch::Tensor& pred, const torch::Tensor& gt,
                           ConfusionCounts counts) {
  if (pred.sizes() != gt.sizes()) {
    std::ostringstream os;
    os << "accumulate: shape mismatch " << pred.sizes() << " vs " << gt.sizes();
    throw ValidationError(os.str());
  }
  if (pred.is_floating_point() || gt.is_floating_point()) {
    throw ValidationError("accumulate: masks must be integer or bool tensors");
  }
  auto widen = [](const torch::Tensor& t) { return t.detach().to(torch::kCPU).to(torch::kInt64); };
  auto p = widen(pred), g = widen(gt);
  // Out-of-range values must not be silently narrowed.
  if (p.gt(1).any().item<bool>() || p.lt(0).any().item<bool>() || g.gt(1).any().item<bool>() ||
      g.lt(0).any().item<bool>()) {
    throw ValidationError("accumulate: masks must be binary");
  }
  p = p.to(torch::kUInt8).contiguous();
  g = g.to(torch::kUInt8).contiguous();
  const auto n = static_cast<std::size_t>(p.numel());
  return accumulate(std::span<const std::uint8_t>(p.data_ptr<std::uint8_t>(), n),
                    std::span<const std::uint8_t>(g.data_ptr<std::uint8_t>(), n), counts);
}

double iou_change(const ConfusionCounts& c) {
  const auto denom = c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

double overall_accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValidationError("overall_accuracy: no pixels accumulated");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

MetricsReport MetricsReport::from_counts(const ConfusionCounts& counts, double threshold) {
  return {counts, threshold, sscd::iou_change(counts), sscd::overall_accuracy(counts)};
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["iou_change"] = iou_change;
  j["overall_accuracy"] = overall_accuracy;
  j["tp"] = counts.tp;
  j["fp"] = counts.fp;
  j["fn"] = counts.fn;
  j["tn"] = counts.tn;
  j["threshold"] = threshold;
  return j.dump(2);
}

void MetricsReport::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json() << '\n';
}

}  // namespace sscd
