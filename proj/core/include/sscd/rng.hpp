#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

namespace sscd {

/// Mixes a seed with a sequence of stream coordinates (splitmix64 chain).
/// Used to give every (seed, purpose, epoch, sample) its own stream.
std::uint64_t derive_seed(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> coords);

/// Stable 64-bit hash of a label, for naming streams.
std::uint64_t stream_tag(std::string_view label);

/// Portable random stream. All draws are defined on top of the raw 64-bit
/// engine output, so sequences do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  bool bernoulli(double p) { return uniform01() < p; }

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Float tensor with i.i.d. U(lo, hi) entries.
  torch::Tensor uniform_tensor(at::IntArrayRef shape, double lo, double hi,
                               torch::Dtype dtype = torch::kFloat32);
  /// Float tensor with i.i.d. standard normal entries (Box-Muller).
  torch::Tensor normal_tensor(at::IntArrayRef shape,
                              torch::Dtype dtype = torch::kFloat32);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace sscd
