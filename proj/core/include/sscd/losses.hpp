#pragma once

#include <cstdint>
#include <vector>

#include <torch/types.h>

#include "sscd/types.hpp"

namespace sscd {

/// Mean two-class cross-entropy, computed from logits with log-sum-exp.
/// logits: [N, 2, H, W]; target: [N, H, W] with values in {0, 1}.
torch::Tensor supervised_loss(const torch::Tensor& logits, const torch::Tensor& target);
torch::Tensor supervised_loss(const ChangeProbabilityMap& y_hat, const torch::Tensor& target);

/// Sum over auxiliary predictions of the mean squared error between their
/// probability maps and the main prediction. The main prediction is a
/// constant target: no gradient reaches it.
torch::Tensor consistency_loss(const std::vector<ChangeProbabilityMap>& aux_preds,
                               const ChangeProbabilityMap& y_hat);

struct RampUpSchedule {
  int64_t ramp_iters = 1;   // T
  int64_t total_iters = 1;

  /// T = max(1, round(fraction * total)), clamped to total.
  static RampUpSchedule from_fraction(int64_t total_iters, double fraction);
  void validate() const;
};

/// Gaussian ramp-up exp(-5 (1 - min(t, T) / T)^2); equals 1 for t >= T.
double ramp_up(int64_t t, const RampUpSchedule& schedule);

struct LossReport {
  double sup = 0.0;
  double unsup = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

LossReport total_loss(double sup, double unsup, double lambda);

}  // namespace sscd
