#include "support.hpp"

#include <atomic>
#include <unistd.h>

namespace fs = std::filesystem;

namespace sscd::testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("sscd_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

torch::Tensor random_mask(Rng& rng, int64_t h, int64_t w, double p) {
  auto m = torch::zeros({h, w}, torch::kUInt8);
  auto* data = m.data_ptr<std::uint8_t>();
  for (int64_t i = 0; i < h * w; ++i) data[i] = rng.bernoulli(p) ? 1 : 0;
  return m;
}

TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.backbone = Backbone::Tiny;
  c.epochs = 2;
  c.batch_labeled = 2;
  c.batch_unlabeled = 2;
  c.lr = 0.01;
  c.augmentation.crop_size = 32;
  c.output_dir.clear();
  return c;
}

}  // namespace sscd::testing
