#include "sscd/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "sscd/error.hpp"

namespace sscd {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(seed);
  for (auto c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

std::uint64_t stream_tag(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ValidationError("Rng::below: n must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

torch::Tensor Rng::uniform_tensor(at::IntArrayRef shape, double lo, double hi,
                                  torch::Dtype dtype) {
  auto out = torch::empty(shape, torch::kFloat64);
  auto* p = out.data_ptr<double>();
  const auto n = out.numel();
  for (int64_t i = 0; i < n; ++i) p[i] = uniform(lo, hi);
  return out.to(dtype);
}

torch::Tensor Rng::normal_tensor(at::IntArrayRef shape, torch::Dtype dtype) {
  auto out = torch::empty(shape, torch::kFloat64);
  auto* p = out.data_ptr<double>();
  const auto n = out.numel();
  for (int64_t i = 0; i < n; i += 2) {
    // 1 - u keeps the log argument in (0, 1].
    const double r = std::sqrt(-2.0 * std::log(1.0 - uniform01()));
    const double theta = 2.0 * std::numbers::pi * uniform01();
    p[i] = r * std::cos(theta);
    if (i + 1 < n) p[i + 1] = r * std::sin(theta);
  }
  return out.to(dtype);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw ValidationError("Rng::set_state: malformed engine state");
}

}  // namespace sscd
