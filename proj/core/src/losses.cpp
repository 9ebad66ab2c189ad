#include "sscd/losses.hpp"

#include <cmath>
#include <sstream>

#include <torch/torch.h>

#include "sscd/error.hpp"

namespace sscd {

torch::Tensor supervised_loss(const torch::Tensor& logits, const torch::Tensor& target) {
  if (logits.dim() != 4 || logits.size(1) != 2 || target.dim() != 3 ||
      target.size(0) != logits.size(0) || target.size(1) != logits.size(2) ||
      target.size(2) != logits.size(3)) {
    std::ostringstream os;
    os << "supervised_loss: logits " << logits.sizes() << " incompatible with target "
       << target.sizes();
    throw ValidationError(os.str());
  }
  auto labels = target.to(torch::kInt64);
  if (labels.lt(0).any().item<bool>() || labels.gt(1).any().item<bool>()) {
    throw ValidationError("supervised_loss: target must be binary");
  }
  auto lse = torch::logsumexp(logits, 1);
  auto picked = logits.gather(1, labels.unsqueeze(1)).squeeze(1);
  return (lse - picked).mean();
}

torch::Tensor supervised_loss(const ChangeProbabilityMap& y_hat, const torch::Tensor& target) {
  return supervised_loss(y_hat.logits, target);
}

torch::Tensor consistency_loss(const std::vector<ChangeProbabilityMap>& aux_preds,
                               const ChangeProbabilityMap& y_hat) {
  if (aux_preds.empty()) throw ValidationError("consistency_loss: no auxiliary predictions");
  const auto target = y_hat.probs.detach();
  torch::Tensor total;
  for (const auto& aux : aux_preds) {
    if (aux.probs.sizes() != target.sizes()) {
      std::ostringstream os;
      os << "consistency_loss: auxiliary prediction " << aux.probs.sizes()
         << " does not match main prediction " << target.sizes();
      throw ValidationError(os.str());
    }
    auto term = (aux.probs - target).pow(2).mean();
    total = total.defined() ? total + term : term;
  }
  return total;
}

RampUpSchedule RampUpSchedule::from_fraction(int64_t total_iters, double fraction) {
  RampUpSchedule s;
  s.total_iters = std::max<int64_t>(1, total_iters);
  s.ramp_iters = std::clamp<int64_t>(
      std::llround(fraction * static_cast<double>(s.total_iters)), 1, s.total_iters);
  return s;
}

void RampUpSchedule::validate() const {
  if (ramp_iters < 1 || total_iters < 1 || ramp_iters > total_iters) {
    throw ValidationError("ramp-up schedule needs 1 <= ramp_iters <= total_iters");
  }
}

double ramp_up(int64_t t, const RampUpSchedule& schedule) {
  const auto T = static_cast<double>(schedule.ramp_iters);
  const double phase = 1.0 - static_cast<double>(std::clamp<int64_t>(t, 0, schedule.ramp_iters)) / T;
  return std::exp(-5.0 * phase * phase);
}

LossReport total_loss(double sup, double unsup, double lambda) {
  return {sup, unsup, lambda, sup + lambda * unsup};
}

}  // namespace sscd
