#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sscd/config.hpp"
#include "sscd/metrics.hpp"
#include "sscd/synthetic.hpp"
#include "sscd/trainer.hpp"

namespace sscd {

/// Desk-scale semi-supervised experiment on the synthetic corpus.
struct ToyExperiment {
  ToyCorpusOptions corpus;
  int64_t labeled = 10;
  int64_t unlabeled = 150;
  int64_t test = 40;
  TrainConfig train;  // perturbations are replaced per run

  /// Tiny backbone, 30 epochs at lr 0.05, 200 pairs of 64x64 split 10/150/40.
  static ToyExperiment standard(std::uint64_t seed);
};

struct ToyData {
  TrainData train;
  std::vector<BiTemporalSample> test;
  SplitManifest manifest;
};

ToyData make_toy_data(const ToyExperiment& experiment);

struct ToyRun {
  std::vector<PerturbationKind> kinds;
  MetricsReport test;
  std::vector<LossReport> steps;
  double seconds = 0.0;
  ChangeDetector model{nullptr};
};

ToyRun run_toy(const ToyExperiment& experiment, const ToyData& data,
               const std::vector<PerturbationKind>& kinds);

/// Progressive perturbation sets: {}, {FN}, {FN,FD}, {FN,FD,GFC},
/// {FN,FD,GFC,CM,OM}, full.
std::vector<std::vector<PerturbationKind>> ablation_sets();

std::string describe(const std::vector<PerturbationKind>& kinds);
/// Plain-text comparison table, one row per run.
std::string ablation_table(const std::vector<ToyRun>& runs);

}  // namespace sscd
