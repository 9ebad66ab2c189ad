#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "sscd/image_io.hpp"
#include "sscd/synthetic.hpp"
#include "sscd_cli/cli.hpp"
#include "support.hpp"

namespace sscd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream f(p);
  std::size_t n = 0;
  for (std::string line; std::getline(f, line);) n += !line.empty();
  return n;
}

std::vector<BiTemporalSample> corpus(int64_t count, int64_t size, std::uint64_t seed) {
  ToyCorpusOptions o;
  o.count = count;
  o.size = size;
  o.min_side = 6;
  o.max_side = 12;
  o.seed = seed;
  return make_toy_corpus(o);
}

TEST(CliSplit, HundredPatchesTenPercent) {
  testing::TempDir dir("cli_split");
  write_pairs(corpus(25, 32, 1), dir / "train");
  auto r = run({"split", "--root", dir.path().string(), "--fraction", "0.1", "--patch-size",
                "16", "--out", (dir / "s1").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(dir / "s1" / "labeled.txt"), 10u);
  EXPECT_EQ(line_count(dir / "s1" / "unlabeled.txt"), 90u);
  auto again = run({"split", "--root", dir.path().string(), "--fraction", "0.1",
                    "--patch-size", "16", "--out", (dir / "s2").string()});
  ASSERT_EQ(again.code, 0);
  for (const char* name : {"labeled.txt", "unlabeled.txt"}) {
    EXPECT_EQ(slurp(dir / "s1" / name), slurp(dir / "s2" / name)) << name;
  }
}

TEST(CliSplit, ExitCodes) {
  testing::TempDir dir("cli_split_codes");
  write_pairs(corpus(4, 32, 2), dir.path());
  EXPECT_EQ(run({"split", "--root", dir.path().string(), "--fraction", "0"}).code,
            cli::kConfigError);
  EXPECT_EQ(run({"split", "--root", dir.path().string(), "--fraction", "1.5"}).code,
            cli::kConfigError);
  auto missing = run({"split", "--root", (dir / "nowhere").string(), "--fraction", "0.5"});
  EXPECT_EQ(missing.code, cli::kDataError);
  EXPECT_NE(missing.err.find("label"), std::string::npos);
  EXPECT_EQ(run({"split", "--root", dir.path().string(), "--fraction", "0.5"}).code, cli::kOk);
  EXPECT_TRUE(fs::exists(dir / "splits" / "labeled.txt"));
  EXPECT_EQ(run({"nonsense"}).code, cli::kConfigError);
  EXPECT_EQ(run({}).code, cli::kConfigError);
}

// One trained checkpoint shared by the train/eval/infer/analyze tests.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("cli_pipeline");
    write_pairs(corpus(12, 32, 3), *dir_ / "data" / "train");
    write_pairs(corpus(4, 32, 4), *dir_ / "data" / "test");
    ASSERT_EQ(run({"split", "--root", (*dir_ / "data").string(), "--fraction", "1"}).code, 0);
    auto config = testing::tiny_config(5);
    config.epochs = 8;
    config.lr = 0.05;
    config.perturbations.clear();
    config.augment = false;
    config.data.root = (*dir_ / "data").string();
    config.data.split_dir = (*dir_ / "data" / "splits").string();
    config.output_dir = (*dir_ / "run").string();
    std::ofstream(*dir_ / "config.json") << config.to_json();
    auto r = run({"train", "--config", (*dir_ / "config.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path path(const std::string& child) { return *dir_ / child; }
  static std::string config_path() { return path("config.json").string(); }
  static std::string checkpoint() { return (path("run") / "ckpt_last.bin").string(); }

  static testing::TempDir* dir_;
};
testing::TempDir* CliPipeline::dir_ = nullptr;

TEST_F(CliPipeline, TrainWritesArtifacts) {
  EXPECT_TRUE(fs::exists(path("run") / "ckpt_best.bin"));
  EXPECT_TRUE(fs::exists(checkpoint()));
  auto metrics = json::parse(slurp(path("run") / "metrics.json"));
  EXPECT_EQ(metrics["iterations"].get<int64_t>(), 8 * 6);
  EXPECT_TRUE(metrics.contains("test"));
}

TEST_F(CliPipeline, TrainOverridesAndUnknownKey) {
  auto r = run({"train", "--config", config_path(), "--override", "epochs=1", "--override",
                "perturbations=[]", "--out", path("run1").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto metrics = json::parse(slurp(path("run1") / "metrics.json"));
  EXPECT_EQ(metrics["iterations"].get<int64_t>(), 6);
  auto bad = run({"train", "--config", config_path(), "--override", "lr_rate=0.1", "--out",
                  path("run2").string()});
  EXPECT_EQ(bad.code, cli::kConfigError);
  EXPECT_NE(bad.err.find("lr_rate"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("run2") / "ckpt_last.bin"));
  EXPECT_EQ(run({"train", "--config", path("missing.json").string()}).code, cli::kConfigError);
}

TEST_F(CliPipeline, EvalWritesReport) {
  auto r = run({"eval", "--checkpoint", checkpoint(), "--out", path("eval").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = json::parse(slurp(path("eval") / "metrics_test.json"));
  EXPECT_GE(report["iou_change"].get<double>(), 0.0);
  EXPECT_LE(report["overall_accuracy"].get<double>(), 1.0);
  EXPECT_EQ(run({"eval", "--checkpoint", checkpoint(), "--split", "bogus"}).code,
            cli::kConfigError);
  EXPECT_EQ(run({"eval", "--checkpoint", path("none.pt").string()}).code, cli::kDataError);
}

TEST_F(CliPipeline, InferKeepsInputSize) {
  auto pair = make_square_pair(48, 10, 12, 14, 7);
  write_tensor_png(path("a48.png"), pair.image_a);
  write_tensor_png(path("b48.png"), pair.image_b);
  auto r = run({"infer", "--checkpoint", checkpoint(), "--a", path("a48.png").string(), "--b",
                path("b48.png").string(), "--id", "p", "--out", path("infer").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("padded"), std::string::npos);
  for (const char* name : {"p_mask.png", "p_prob.png"}) {
    auto size = read_png_size(path("infer") / name);
    EXPECT_EQ(size.width, 48);
    EXPECT_EQ(size.height, 48);
  }
}

TEST_F(CliPipeline, InferIdenticalPairIsMostlyUnchanged) {
  auto pair = make_square_pair(32, 0, 0, 1, 8);
  write_tensor_png(path("same.png"), pair.image_a);
  auto r = run({"infer", "--checkpoint", checkpoint(), "--a", path("same.png").string(), "--b",
                path("same.png").string(), "--out", path("same").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto mask = read_mask_tensor(path("same") / "same_mask.png");
  EXPECT_LT(mask.to(torch::kFloat64).mean().item<double>(), 0.05);
}

TEST_F(CliPipeline, InferErrors) {
  EXPECT_EQ(run({"infer", "--checkpoint", path("none.pt").string(), "--a", "x.png", "--b",
                 "y.png", "--out", path("o").string()})
                .code,
            cli::kDataError);
  EXPECT_EQ(run({"infer", "--checkpoint", checkpoint(), "--a", path("x.png").string(), "--b",
                 path("y.png").string(), "--out", path("o").string()})
                .code,
            cli::kDataError);
}

TEST_F(CliPipeline, AnalyzeWritesDensityMaps) {
  auto pair = make_square_pair(64, 20, 24, 16, 9);
  write_pairs({pair}, path("analyze_in"));
  auto r = run({"analyze", "--checkpoint", checkpoint(), "--pairs",
                path("analyze_in").string(), "--out", path("analysis").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  // Image grid: 4 cells of 15 px. Feature grid: 16 cells of 4 px.
  EXPECT_EQ(read_png_size(path("analysis") / "square_img_density.png").width, 60);
  EXPECT_EQ(read_png_size(path("analysis") / "square_feat_density.png").width, 64);
}

TEST_F(CliPipeline, AnalyzeErrors) {
  EXPECT_EQ(run({"analyze", "--checkpoint", checkpoint(), "--out", path("x").string()}).code,
            cli::kConfigError);
  // 32x32 pairs are too small for 15-pixel image patches.
  EXPECT_EQ(run({"analyze", "--checkpoint", checkpoint(), "--pairs",
                 (path("data") / "test").string(), "--out", path("x").string()})
                .code,
            cli::kDataError);
}

}  // namespace
}  // namespace sscd
