#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <torch/torch.h>

#include "sscd/config.hpp"
#include "sscd/rng.hpp"

namespace sscd::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

 private:
  std::filesystem::path path_;
};

/// Random {0,1} uint8 tensor drawn from an Rng (independent of torch's RNG).
torch::Tensor random_mask(Rng& rng, int64_t h, int64_t w, double p = 0.5);

/// Tiny-backbone config with small batches for fast unit tests.
TrainConfig tiny_config(std::uint64_t seed = 0);

}  // namespace sscd::testing
