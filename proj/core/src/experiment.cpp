#include "sscd/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include <torch/torch.h>

#include "sscd/error.hpp"

namespace sscd {

ToyExperiment ToyExperiment::standard(std::uint64_t seed) {
  ToyExperiment e;
  e.corpus.count = 200;
  e.corpus.size = 64;
  e.corpus.seed = seed;
  TrainConfig& c = e.train;
  c.seed = seed;
  c.backbone = Backbone::Tiny;
  c.epochs = 30;
  c.batch_labeled = 2;
  c.batch_unlabeled = 8;
  c.lr = 0.05;
  c.augmentation.crop_size = 64;
  c.augmentation.blur_prob = 0.2;
  c.augmentation.jitter_strength = 0.1;
  c.output_dir.clear();
  return e;
}

ToyData make_toy_data(const ToyExperiment& e) {
  if (e.labeled + e.unlabeled + e.test != e.corpus.count) {
    throw ValidationError("toy experiment split sizes must add up to the corpus size");
  }
  auto corpus = make_toy_corpus(e.corpus);
  ToyData data;
  std::vector<std::string> train_ids;
  std::map<std::string, const BiTemporalSample*> by_id;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    by_id[corpus[i].id] = &corpus[i];
    if (static_cast<int64_t>(i) < e.labeled + e.unlabeled) {
      train_ids.push_back(corpus[i].id);
    } else {
      data.test.push_back(corpus[i]);
      data.manifest.test_ids.push_back(corpus[i].id);
    }
  }
  const double fraction =
      static_cast<double>(e.labeled) / static_cast<double>(e.labeled + e.unlabeled);
  auto split = make_split(train_ids, fraction, e.corpus.seed);
  split.test_ids = data.manifest.test_ids;
  data.manifest = split;
  for (const auto& id : split.labeled_ids) data.train.labeled.push_back(*by_id.at(id));
  for (const auto& id : split.unlabeled_ids) {
    auto s = *by_id.at(id);
    s.mask.reset();  // labels of the unlabeled pool are discarded
    data.train.unlabeled.push_back(std::move(s));
  }
  return data;
}

ToyRun run_toy(const ToyExperiment& e, const ToyData& data,
               const std::vector<PerturbationKind>& kinds) {
  auto config = e.train;
  config.perturbations = specs_for(kinds);
  const auto start = std::chrono::steady_clock::now();
  Trainer trainer(config, data.train);
  auto fit = trainer.fit();
  ToyRun run;
  run.kinds = kinds;
  run.steps = std::move(fit.steps);
  run.test = trainer.evaluate(data.test);
  run.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.model = trainer.model();
  return run;
}

std::vector<std::vector<PerturbationKind>> ablation_sets() {
  using K = PerturbationKind;
  return {{},
          {K::FeatureNoise},
          {K::FeatureNoise, K::FeatureDrop},
          {K::FeatureNoise, K::FeatureDrop, K::GuidedCutout},
          {K::FeatureNoise, K::FeatureDrop, K::GuidedCutout, K::ContentMask, K::ObjectMask},
          all_perturbation_kinds()};
}

std::string describe(const std::vector<PerturbationKind>& kinds) {
  if (kinds.empty()) return "Sup. only";
  std::string out = "Sup.";
  for (auto k : kinds) {
    out += "+";
    out += short_name(k);
  }
  return out;
}

std::string ablation_table(const std::vector<ToyRun>& runs) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-30s %10s %10s %10s\n", "perturbations", "IoU^c", "OA",
                "seconds");
  os << line;
  for (const auto& r : runs) {
    std::snprintf(line, sizeof(line), "%-30s %10.4f %10.4f %10.1f\n", describe(r.kinds).c_str(),
                  r.test.iou_change, r.test.overall_accuracy, r.seconds);
    os << line;
  }
  return os.str();
}

}  // namespace sscd
