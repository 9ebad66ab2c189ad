#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/types.h>

#include "sscd/config.hpp"
#include "sscd/datasets.hpp"
#include "sscd/losses.hpp"
#include "sscd/metrics.hpp"
#include "sscd/model.hpp"

namespace sscd {

/// SGD with heavy-ball momentum and L2 weight decay. Buffers are keyed by
/// parameter name so they can be checkpointed. Parameters without a gradient
/// are skipped entirely (no decay, no momentum update).
class SgdMomentum {
 public:
  SgdMomentum(std::vector<std::pair<std::string, torch::Tensor>> params, double momentum,
              double weight_decay);

  void zero_grad();
  void step(double lr);

  const std::map<std::string, torch::Tensor>& buffers() const { return buffers_; }
  void load_buffers(const std::map<std::string, torch::Tensor>& buffers);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> params_;
  std::map<std::string, torch::Tensor> buffers_;
  double momentum_;
  double weight_decay_;
};

struct TrainData {
  std::vector<BiTemporalSample> labeled;
  std::vector<BiTemporalSample> unlabeled;
  std::vector<BiTemporalSample> val;
};

/// Resolves data.root / data.split_dir of a config into in-memory samples.
TrainData load_train_data(const TrainConfig& config);
/// Samples of one split ("labeled", "unlabeled", "val", "test") with masks.
std::vector<BiTemporalSample> load_split(const TrainConfig& config, const std::string& split);

struct StepLosses {
  torch::Tensor sup;
  torch::Tensor unsup;  // zero tensor when the unsupervised phase is inactive
  bool unsupervised_active = false;
};

struct EpochRecord {
  int64_t epoch = 0;
  std::optional<MetricsReport> val;
};

struct FitResult {
  std::vector<LossReport> steps;
  std::vector<EpochRecord> epochs;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::vector<std::string> warnings;
};

/// Owns the model, optimizer and iteration counter of one training run.
///
/// Every random draw of a step (batch order, augmentation, perturbations) is
/// derived from (seed, iteration), so the iteration counter is the whole
/// random-stream state and a checkpoint restores it exactly.
class Trainer {
 public:
  Trainer(TrainConfig config, TrainData data);

  const TrainConfig& config() const { return config_; }
  ChangeDetector& model() { return model_; }
  const TrainData& data() const { return data_; }

  int64_t iteration() const { return iteration_; }
  int64_t steps_per_epoch() const;
  int64_t total_iterations() const { return config_.epochs * steps_per_epoch(); }
  /// Perturbations configured and unlabeled data available.
  bool semi_supervised() const;

  double learning_rate(int64_t t) const;
  double lambda(int64_t t) const;

  /// Augmented labeled and unlabeled batches for iteration t.
  std::pair<Batch, Batch> batches_for(int64_t t) const;

  /// Forward pass and both loss terms for one iteration, without updating.
  StepLosses compute_losses(const Batch& labeled, const Batch& unlabeled, int64_t t);

  /// One optimizer step on L = L_sup + lambda(t) L_unsup; advances the iteration.
  LossReport train_step(const Batch& labeled, const Batch& unlabeled);
  LossReport train_step();
  std::vector<LossReport> train_steps(int64_t n);

  /// Runs the remaining epochs, validating and checkpointing after each.
  FitResult fit();

  MetricsReport evaluate(const std::vector<BiTemporalSample>& samples);

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

 private:
  const std::vector<std::size_t>& labeled_order(int64_t epoch) const;
  const std::vector<std::size_t>& unlabeled_order(int64_t cycle) const;

  TrainConfig config_;
  TrainData data_;
  ChangeDetector model_{nullptr};
  std::unique_ptr<SgdMomentum> optimizer_;
  int64_t iteration_ = 0;
  double best_val_iou_ = -1.0;
  mutable std::map<int64_t, std::vector<std::size_t>> labeled_orders_;
  mutable std::map<int64_t, std::vector<std::size_t>> unlabeled_orders_;
};

/// Eval-mode forward through the main decoder; counts accumulated globally.
MetricsReport evaluate_model(ChangeDetector& model,
                             const std::vector<BiTemporalSample>& samples, double threshold,
                             int64_t batch_size = 8);

struct LoadedModel {
  ChangeDetector model{nullptr};
  TrainConfig config;
  int64_t iteration = 0;
};

/// Rebuilds the model stored in a checkpoint. When `expected` is given its
/// hash must match the checkpoint's, otherwise CheckpointError names both.
LoadedModel load_model(const std::filesystem::path& checkpoint,
                       const std::optional<ModelConfig>& expected = std::nullopt);

/// Copies named tensors from an archive into a module; missing or mis-shaped
/// entries raise CheckpointError. `prefix` selects a key namespace.
void load_module_tensors(torch::nn::Module& module,
                         const std::map<std::string, torch::Tensor>& tensors,
                         const std::string& prefix);

}  // namespace sscd
