#include "sscd_cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <torch/torch.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "sscd/cluster.hpp"
#include "sscd/config.hpp"
#include "sscd/datasets.hpp"
#include "sscd/error.hpp"
#include "sscd/image_io.hpp"
#include "sscd/model.hpp"
#include "sscd/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace sscd::cli {
namespace {

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;

  // split
  std::string root;
  double fraction = 0.0;
  int64_t patch_size = 0;

  // train
  std::string resume;

  // eval / infer / analyze
  std::string checkpoint;
  std::string split = "test";
  std::string image_a, image_b, mask, id, pairs;
  std::optional<double> threshold;
};

fs::path subset_root(const fs::path& root, const std::string& subset) {
  return fs::is_directory(root / subset / "A") ? root / subset : root;
}

bool has_subsets(const fs::path& root) { return fs::is_directory(root / "train" / "A"); }

std::vector<std::string> corpus_ids(const PairDirectory& dir, int64_t patch_size) {
  auto ids = dir.ids();
  if (patch_size <= 0) return ids;
  std::vector<std::string> out;
  for (const auto& id : ids) {
    const auto size = read_png_size(dir.root() / "A" / (id + ".png"));
    auto patches = patch_ids_for(id, size.height, size.width, patch_size);
    out.insert(out.end(), patches.begin(), patches.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

TrainConfig resolve_config(const Options& o) {
  TrainConfig config = o.config.empty() ? parse_config(apply_overrides("{}", o.overrides))
                                        : load_config(o.config, o.overrides);
  if (!o.out.empty()) config.output_dir = o.out;
  if (o.seed) config.seed = *o.seed;
  config.validate();
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text)) throw IoError("cannot write " + path.string());
}

torch::Tensor batch_of(const torch::Tensor& image) { return image.unsqueeze(0); }

// Runs the main branch on one pair of arbitrary size. Inputs are padded
// reflectively to a multiple of 32; outputs are cropped back.
CdOutput predict(ChangeDetector& model, const BiTemporalSample& s, std::ostream& err) {
  using torch::indexing::Slice;
  const int64_t h = s.height(), w = s.width();
  auto a = batch_of(s.image_a), b = batch_of(s.image_b);
  if (h % 32 != 0 || w % 32 != 0) {
    a = pad_to_multiple(a, 32);
    b = pad_to_multiple(b, 32);
    err << "[sscd] note: " << s.id << " is " << h << "x" << w << ", padded to " << a.size(2)
        << "x" << a.size(3) << " and cropped back\n";
  }
  torch::NoGradGuard no_grad;
  model->eval();
  auto out = model->forward(a, b);
  auto logits = out.prediction.logits.index({Slice(), Slice(), Slice(0, h), Slice(0, w)});
  out.prediction = ChangeProbabilityMap::from_logits(logits.contiguous());
  return out;
}

BiTemporalSample load_single_pair(const Options& o) {
  std::optional<fs::path> mask;
  if (!o.mask.empty()) mask = fs::path(o.mask);
  auto id = o.id.empty() ? fs::path(o.image_a).stem().string() : o.id;
  return load_pair(o.image_a, o.image_b, mask, id);
}

// -- subcommands ---------------------------------------------------------------

int run_split(const Options& o, std::ostream& out) {
  if (!(o.fraction > 0.0) || o.fraction > 1.0) {
    throw ConfigError("--fraction must lie in (0, 1], got " + std::to_string(o.fraction));
  }
  if (o.patch_size < 0) throw ConfigError("--patch-size must be non-negative");
  const fs::path root(o.root);
  const PairDirectory train(subset_root(root, "train"));
  auto missing = train.missing_directories();
  if (!train.has_labels()) missing.push_back((train.root() / "label").string());
  if (!missing.empty()) {
    std::string msg = "malformed dataset layout; missing:";
    for (const auto& m : missing) msg += " " + m;
    throw IoError(msg);
  }

  auto manifest = make_split(corpus_ids(train, o.patch_size), o.fraction, o.seed.value_or(0));
  if (has_subsets(root)) {
    for (auto [subset, ids] : {std::pair{"val", &manifest.val_ids},
                               std::pair{"test", &manifest.test_ids}}) {
      if (fs::is_directory(root / subset / "A")) {
        *ids = corpus_ids(PairDirectory(root / subset), o.patch_size);
      }
    }
  }
  const fs::path dir = o.out.empty() ? root / "splits" : fs::path(o.out);
  write_manifest(manifest, dir);
  out << "labeled " << manifest.labeled_ids.size() << "\nunlabeled "
      << manifest.unlabeled_ids.size() << "\nval " << manifest.val_ids.size() << "\ntest "
      << manifest.test_ids.size() << "\nwrote " << dir.string() << "\n";
  return kOk;
}

int run_train(const Options& o, std::ostream& out) {
  auto config = resolve_config(o);
  if (config.output_dir.empty()) throw ConfigError("output_dir must be set for training");
  auto data = load_train_data(config);
  Trainer trainer(config, std::move(data));
  if (!o.resume.empty()) trainer.load_checkpoint(o.resume);
  auto fit = trainer.fit();

  json metrics{{"iterations", trainer.iteration()}};
  if (!fit.epochs.empty() && fit.epochs.back().val) {
    metrics["val"] = json::parse(fit.epochs.back().val->to_json());
  }
  const fs::path split_dir(config.data.split_dir);
  if (fs::exists(split_dir / "test.txt")) {
    auto test = load_split(config, "test");
    if (!test.empty()) metrics["test"] = json::parse(trainer.evaluate(test).to_json());
  }
  const fs::path out_dir(config.output_dir);
  write_text(out_dir / "metrics.json", metrics.dump(2) + "\n");
  out << metrics.dump(2) << "\n";
  out << "checkpoints: " << fit.best_checkpoint.string() << ", "
      << fit.last_checkpoint.string() << "\n";
  return kOk;
}

int run_eval(const Options& o, std::ostream& out) {
  static const std::vector<std::string> kSplits{"labeled", "unlabeled", "val", "test"};
  if (std::find(kSplits.begin(), kSplits.end(), o.split) == kSplits.end()) {
    throw ConfigError("--split must be one of labeled, unlabeled, val, test");
  }
  if (o.split == "unlabeled") throw ConfigError("the unlabeled split has no masks");
  // Fail on bad keys before touching the checkpoint.
  std::optional<TrainConfig> file_config;
  if (!o.config.empty()) {
    file_config = load_config(o.config, o.overrides);
  } else {
    apply_overrides("{}", o.overrides);
  }
  auto loaded = load_model(o.checkpoint);
  TrainConfig config = file_config ? *file_config
                                   : parse_config(apply_overrides(loaded.config.to_json(),
                                                                  o.overrides));
  const double threshold = o.threshold.value_or(config.threshold);
  auto samples = load_split(config, o.split);
  if (samples.empty()) throw ValidationError("split '" + o.split + "' is empty");
  auto report = evaluate_model(loaded.model, samples, threshold);
  if (!o.out.empty()) report.write(fs::path(o.out) / ("metrics_" + o.split + ".json"));
  out << report.to_json() << "\n";
  return kOk;
}

int run_infer(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw ConfigError("--out is required");
  auto loaded = load_model(o.checkpoint);
  auto sample = load_single_pair(o);
  auto pred = predict(loaded.model, sample, err).prediction;
  const double threshold = o.threshold.value_or(loaded.config.threshold);
  auto prob = pred.change_probability()[0];
  auto mask = binarize(pred, threshold)[0].to(torch::kFloat32);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  write_tensor_png(dir / (sample.id + "_mask.png"), mask);
  write_tensor_png(dir / (sample.id + "_prob.png"), prob);
  out << "wrote " << (dir / (sample.id + "_mask.png")).string() << " ("
      << mask.sum().item<double>() << " change pixels)\n";
  return kOk;
}

int run_analyze(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw ConfigError("--out is required");
  if (o.pairs.empty() && (o.image_a.empty() || o.image_b.empty())) {
    throw ConfigError("analyze needs --pairs or both --a and --b");
  }
  auto loaded = load_model(o.checkpoint);
  std::vector<BiTemporalSample> samples;
  if (!o.pairs.empty()) {
    const PairDirectory dir(o.pairs);
    auto missing = dir.missing_directories();
    if (!missing.empty()) throw IoError("malformed dataset layout; missing: " + missing.front());
    auto ids = dir.ids();
    if (!o.id.empty()) ids = {o.id};
    for (const auto& id : ids) samples.push_back(dir.load(id, dir.has_labels()));
  } else {
    samples.push_back(load_single_pair(o));
  }
  const fs::path dir(o.out);
  fs::create_directories(dir);
  for (const auto& s : samples) {
    write_density(dir / (s.id + "_img_density.png"), image_domain_density(s), s.mask);
    auto fd = predict(loaded.model, s, err).difference;
    write_density(dir / (s.id + "_feat_density.png"), feature_domain_density(fd.data[0]),
                  s.mask);
    out << "analyzed " << s.id << "\n";
  }
  return kOk;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "config file (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--override", o.overrides, "dotted.key=value, applied after the file");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "random seed");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised change detection"};
  app.name("sscd");
  app.require_subcommand(1, 1);
  Options o;

  auto* split = app.add_subcommand("split", "write labeled/unlabeled/val/test manifests");
  add_common(split, o);
  split->add_option("--root", o.root, "dataset root")->required();
  split->add_option("--fraction", o.fraction, "labeled fraction in (0, 1]")->required();
  split->add_option("--patch-size", o.patch_size, "tile pairs into patches of this size");

  auto* train = app.add_subcommand("train", "train a change detector");
  add_common(train, o);
  train->add_option("--resume", o.resume, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval->add_option("--split", o.split, "labeled, val or test");
  eval->add_option("--threshold", o.threshold, "change-probability threshold");

  auto* infer = app.add_subcommand("infer", "predict a change mask for one pair");
  add_common(infer, o);
  infer->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  infer->add_option("--a", o.image_a, "pre-change image")->required();
  infer->add_option("--b", o.image_b, "post-change image")->required();
  infer->add_option("--id", o.id, "output file prefix (default: stem of --a)");
  infer->add_option("--threshold", o.threshold, "change-probability threshold");

  auto* analyze = app.add_subcommand("analyze", "render image- and feature-domain density maps");
  add_common(analyze, o);
  analyze->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  analyze->add_option("--pairs", o.pairs, "directory with A/, B/ and optional label/");
  analyze->add_option("--a", o.image_a, "pre-change image");
  analyze->add_option("--b", o.image_b, "post-change image");
  analyze->add_option("--mask", o.mask, "ground-truth mask for the contour overlay");
  analyze->add_option("--id", o.id, "single pair id");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "sscd: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (*split) return run_split(o, out);
    if (*train) return run_train(o, out);
    if (*eval) return run_eval(o, out);
    if (*infer) return run_infer(o, out, err);
    return run_analyze(o, out, err);
  } catch (const ConfigError& e) {
    err << "sscd: config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    err << "sscd: data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ValidationError& e) {
    err << "sscd: data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "sscd: error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace sscd::cli
