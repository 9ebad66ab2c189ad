#include <fstream>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "sscd/checkpoint.hpp"
#include "sscd/config.hpp"
#include "sscd/error.hpp"
#include "sscd/rng.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace sscd {
namespace {

TEST(Config, DefaultsFollowTrainingRecipe) {
  TrainConfig c;
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.epochs, 80);
  EXPECT_EQ(c.batch_labeled, 8);
  EXPECT_EQ(c.batch_unlabeled, 8);
  EXPECT_EQ(c.perturbations.size(), 6u);
  EXPECT_EQ(c.model_config().encoder_channels, 2048);
  EXPECT_EQ(c.model_config().diff_channels, 512);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, JsonRoundTrip) {
  auto c = testing::tiny_config(42);
  c.perturbations = specs_for({PerturbationKind::FeatureDrop, PerturbationKind::FeatureVat});
  c.perturbations[1].params.vat_eps = 1.5;
  c.data.root = "data";
  auto back = parse_config(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.perturbations, c.perturbations);
  EXPECT_EQ(back.seed, 42u);
}

TEST(Config, PartialDocumentMergesOverDefaults) {
  auto c = parse_config(R"({"epochs": 3, "model": {"backbone": "tiny"}})");
  EXPECT_EQ(c.epochs, 3);
  EXPECT_EQ(c.backbone, Backbone::Tiny);
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.model_config().encoder_channels, 64);
}

TEST(Config, UnknownKeysRejected) {
  try {
    parse_config(R"({"lr_rate": 0.1})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lr_rate"), std::string::npos);
  }
  EXPECT_THROW(parse_config(R"({"model": {"depth": 3}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"perturbations": [{"kind": "feature_noise", "sigma": 1}]})"),
               ConfigError);
  EXPECT_THROW(parse_config(R"({"perturbations": ["gaussian_blur"]})"), ConfigError);
}

TEST(Config, TypeAndRangeErrorsNameField) {
  try {
    parse_config(R"({"epochs": "many"})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("epochs"), std::string::npos);
  }
  EXPECT_THROW(parse_config(R"({"lr": 0})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"batch_labeled": 0})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"ramp_fraction": 1.5})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"backbone": "vgg"}})"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
}

TEST(Config, OverridesUseDottedPaths) {
  auto text = apply_overrides("{}", {"epochs=1", "model.backbone=tiny", "perturbations=[]",
                                     "augmentation.crop_size=32", "output_dir=runs/x"});
  auto c = parse_config(text);
  EXPECT_EQ(c.epochs, 1);
  EXPECT_EQ(c.backbone, Backbone::Tiny);
  EXPECT_TRUE(c.perturbations.empty());
  EXPECT_EQ(c.augmentation.crop_size, 32);
  EXPECT_EQ(c.output_dir, "runs/x");
  EXPECT_THROW(apply_overrides("{}", {"lr_rate=0.1"}), ConfigError);
  EXPECT_THROW(apply_overrides("{}", {"model.depth=3"}), ConfigError);
  EXPECT_THROW(apply_overrides("{}", {"epochs"}), ConfigError);
}

TEST(Config, OverridesApplyAfterFile) {
  testing::TempDir dir("config");
  std::ofstream(dir / "c.json") << R"({"epochs": 5, "lr": 0.02})";
  auto c = load_config(dir / "c.json", {"epochs=1"});
  EXPECT_EQ(c.epochs, 1);
  EXPECT_EQ(c.lr, 0.02);
  EXPECT_THROW(load_config(dir / "missing.json"), IoError);
}

TEST(Rng, DeriveSeedSeparatesStreams) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
  EXPECT_NE(stream_tag("a"), stream_tag("b"));
}

TEST(Rng, DrawsAreInRangeAndRestorable) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(7), 7u);
  }
  const auto state = rng.state();
  const auto x = rng.next();
  rng.set_state(state);
  EXPECT_EQ(rng.next(), x);
}

TEST(Checkpoint, BitExactRoundTrip) {
  testing::TempDir dir("ckpt");
  Rng rng(1);
  TensorArchive a;
  a.meta["config"] = "{\"x\": 1}";
  a.tensors["f32"] = rng.normal_tensor({3, 4});
  a.tensors["f64"] = rng.normal_tensor({2}, torch::kFloat64);
  a.tensors["i64"] = torch::arange(5, torch::kInt64);
  a.tensors["scalar"] = torch::tensor(3.5);
  a.tensors["strided"] = rng.normal_tensor({4, 4}).t();
  write_archive(dir / "a.bin", a);
  auto b = read_archive(dir / "a.bin");
  EXPECT_EQ(b.meta, a.meta);
  ASSERT_EQ(b.tensors.size(), a.tensors.size());
  for (const auto& [k, v] : a.tensors) {
    EXPECT_EQ(b.tensors[k].scalar_type(), v.scalar_type()) << k;
    EXPECT_TRUE(b.tensors[k].equal(v)) << k;
  }
  EXPECT_FALSE(fs::exists(dir / "a.bin.tmp"));
}

TEST(Checkpoint, MissingAndTruncatedFilesAreIoErrors) {
  testing::TempDir dir("ckpt_bad");
  EXPECT_THROW(read_archive(dir / "none.bin"), IoError);
  TensorArchive a;
  a.tensors["w"] = torch::ones({64});
  write_archive(dir / "a.bin", a);
  fs::resize_file(dir / "a.bin", fs::file_size(dir / "a.bin") - 10);
  EXPECT_THROW(read_archive(dir / "a.bin"), IoError);
}

TEST(Checkpoint, VersionMismatchNamesBothVersions) {
  testing::TempDir dir("ckpt_version");
  write_archive(dir / "a.bin", TensorArchive{});
  {
    std::fstream f(dir / "a.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t future = 7;
    f.write(reinterpret_cast<const char*>(&future), sizeof(future));
  }
  try {
    read_archive(dir / "a.bin");
    FAIL();
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('7'), std::string::npos) << msg;
    EXPECT_NE(msg.find(std::to_string(kCheckpointVersion)), std::string::npos) << msg;
  }
}

}  // namespace
}  // namespace sscd
