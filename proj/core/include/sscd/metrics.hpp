#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <torch/types.h>

#include "sscd/types.hpp"

namespace sscd {

/// Pixel counts with change as the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    tn += other.tn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) {
    return a += b;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// uint8 mask [N, H, W]: 1 where the change probability is >= threshold.
torch::Tensor binarize(const ChangeProbabilityMap& y_hat, double threshold = 0.5);

ConfusionCounts accumulate(std::span<const std::uint8_t> pred,
                           std::span<const std::uint8_t> gt, ConfusionCounts counts = {});
/// Tensor overload; any integer or bool dtype, identical shapes.
ConfusionCounts accumulate(const torch::Tensor& pred, const torch::Tensor& gt,
                           ConfusionCounts counts = {});

/// tp / (tp + fp + fn); 1.0 when there are no positives in either mask.
double iou_change(const ConfusionCounts& counts);
/// (tp + tn) / total; throws on empty counts.
double overall_accuracy(const ConfusionCounts& counts);

struct MetricsReport {
  ConfusionCounts counts;
  double threshold = 0.5;
  double iou_change = 0.0;
  double overall_accuracy = 0.0;

  static MetricsReport from_counts(const ConfusionCounts& counts, double threshold);
  std::string to_json() const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace sscd
