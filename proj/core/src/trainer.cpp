#include "sscd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <torch/torch.h>

#include <json.hpp>

#include "sscd/checkpoint.hpp"
#include "sscd/error.hpp"
#include "sscd/perturb.hpp"
#include "sscd/rng.hpp"

namespace fs = std::filesystem;

namespace sscd {
namespace {

const std::uint64_t kLabeledStream = stream_tag("labeled-order");
const std::uint64_t kUnlabeledStream = stream_tag("unlabeled-order");
const std::uint64_t kAugmentLabeled = stream_tag("augment-labeled");
const std::uint64_t kAugmentUnlabeled = stream_tag("augment-unlabeled");
const std::uint64_t kPerturbStream = stream_tag("perturb");

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

void warn(std::vector<std::string>* sink, const std::string& message) {
  std::cerr << "[sscd] warning: " << message << '\n';
  if (sink) sink->push_back(message);
}

fs::path subset_dir(const fs::path& root, const std::string& subset) {
  return fs::is_directory(root / subset / "A") ? root / subset : root;
}

std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  return order;
}

torch::Tensor scalar_zero() { return torch::zeros({}, torch::kFloat32); }

}  // namespace

// -- SgdMomentum -------------------------------------------------------------

SgdMomentum::SgdMomentum(std::vector<std::pair<std::string, torch::Tensor>> params,
                         double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& [name, p] : params_) buffers_[name] = torch::zeros_like(p);
}

void SgdMomentum::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p.mutable_grad().defined()) p.mutable_grad() = torch::Tensor();
  }
}

void SgdMomentum::step(double lr) {
  torch::NoGradGuard no_grad;
  for (auto& [name, p] : params_) {
    if (!p.grad().defined()) continue;
    auto g = p.grad();
    if (weight_decay_ != 0.0) g = g + weight_decay_ * p;
    auto& buf = buffers_.at(name);
    buf.mul_(momentum_).add_(g);
    p.sub_(lr * buf);
  }
}

void SgdMomentum::load_buffers(const std::map<std::string, torch::Tensor>& buffers) {
  for (auto& [name, buf] : buffers_) {
    auto it = buffers.find(name);
    if (it == buffers.end()) throw CheckpointError("missing optimizer state for '" + name + "'");
    if (it->second.sizes() != buf.sizes()) {
      throw CheckpointError("optimizer state for '" + name + "' has the wrong shape");
    }
    buf.copy_(it->second);
  }
}

// -- Data --------------------------------------------------------------------

std::vector<BiTemporalSample> load_split(const TrainConfig& config, const std::string& split) {
  if (config.data.root.empty() || config.data.split_dir.empty()) {
    throw ConfigError("data.root and data.split_dir must be set");
  }
  const fs::path root(config.data.root);
  const fs::path manifest(config.data.split_dir);
  const std::string subset = split == "labeled" || split == "unlabeled" ? "train" : split;
  const auto ids = read_id_list(manifest / (split + ".txt"));
  if (ids.empty()) return {};
  const bool with_mask = split != "unlabeled";
  return load_samples(PairDirectory(subset_dir(root, subset)), ids, config.data.patch_size,
                      with_mask);
}

TrainData load_train_data(const TrainConfig& config) {
  TrainData d;
  d.labeled = load_split(config, "labeled");
  d.unlabeled = load_split(config, "unlabeled");
  d.val = load_split(config, "val");
  return d;
}

// -- Trainer -----------------------------------------------------------------

Trainer::Trainer(TrainConfig config, TrainData data)
    : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
  torch::manual_seed(derive_seed(config_.seed, {stream_tag("init")}) >> 1);
  model_ = ChangeDetector(config_.model_config());
  if (!config_.pretrained.empty()) {
    // Only the encoder is initialised from external weights.
    auto archive = read_archive(config_.pretrained);
    std::map<std::string, torch::Tensor> encoder;
    for (auto& [k, v] : archive.tensors) {
      std::string key = k.rfind("model/", 0) == 0 ? k.substr(6) : k;
      if (key.rfind("encoder.", 0) == 0) encoder[key] = v;
    }
    torch::NoGradGuard no_grad;
    for (auto& item : model_->named_parameters()) {
      if (item.key().rfind("encoder.", 0) != 0) continue;
      auto it = encoder.find(item.key());
      if (it == encoder.end() || it->second.sizes() != item.value().sizes()) {
        throw CheckpointError("pretrained weights lack a matching '" + item.key() + "'");
      }
      item.value().copy_(it->second);
    }
  }
  std::vector<std::pair<std::string, torch::Tensor>> params;
  for (auto& item : model_->named_parameters()) params.emplace_back(item.key(), item.value());
  optimizer_ = std::make_unique<SgdMomentum>(std::move(params), config_.momentum,
                                             config_.weight_decay);
}

int64_t Trainer::steps_per_epoch() const {
  const auto n = static_cast<int64_t>(data_.labeled.size());
  return std::max<int64_t>(1, (n + config_.batch_labeled - 1) / config_.batch_labeled);
}

bool Trainer::semi_supervised() const {
  return !config_.perturbations.empty() && !data_.unlabeled.empty();
}

double Trainer::learning_rate(int64_t t) const {
  const auto total = static_cast<double>(std::max<int64_t>(1, total_iterations()));
  const double progress = std::clamp(static_cast<double>(t) / total, 0.0, 1.0);
  return config_.lr * std::pow(1.0 - progress, config_.poly_power);
}

double Trainer::lambda(int64_t t) const {
  return ramp_up(t, RampUpSchedule::from_fraction(total_iterations(), config_.ramp_fraction));
}

const std::vector<std::size_t>& Trainer::labeled_order(int64_t epoch) const {
  auto it = labeled_orders_.find(epoch);
  if (it == labeled_orders_.end()) {
    if (labeled_orders_.size() > 4) labeled_orders_.clear();
    it = labeled_orders_
             .emplace(epoch, permutation(data_.labeled.size(),
                                         derive_seed(config_.seed,
                                                     {kLabeledStream,
                                                      static_cast<std::uint64_t>(epoch)})))
             .first;
  }
  return it->second;
}

const std::vector<std::size_t>& Trainer::unlabeled_order(int64_t cycle) const {
  auto it = unlabeled_orders_.find(cycle);
  if (it == unlabeled_orders_.end()) {
    if (unlabeled_orders_.size() > 4) unlabeled_orders_.clear();
    it = unlabeled_orders_
             .emplace(cycle, permutation(data_.unlabeled.size(),
                                         derive_seed(config_.seed,
                                                     {kUnlabeledStream,
                                                      static_cast<std::uint64_t>(cycle)})))
             .first;
  }
  return it->second;
}

std::pair<Batch, Batch> Trainer::batches_for(int64_t t) const {
  if (data_.labeled.empty()) throw ValidationError("labeled split is empty");
  const int64_t spe = steps_per_epoch();
  const int64_t epoch = t / spe, step = t % spe;
  const auto& order = labeled_order(epoch);
  const auto ut = static_cast<std::uint64_t>(t);

  auto prepare = [&](const BiTemporalSample& s, std::uint64_t stream, std::uint64_t slot) {
    if (!config_.augment) return s;
    Rng rng(derive_seed(config_.seed, {stream, ut, slot}));
    return augment(s, config_.augmentation, rng);
  };

  std::vector<BiTemporalSample> labeled;
  const auto begin = static_cast<std::size_t>(step * config_.batch_labeled);
  const auto end = std::min(order.size(), begin + static_cast<std::size_t>(config_.batch_labeled));
  for (std::size_t i = begin; i < end; ++i) {
    labeled.push_back(prepare(data_.labeled[order[i]], kAugmentLabeled, i - begin));
  }

  std::vector<BiTemporalSample> unlabeled;
  if (semi_supervised()) {
    const auto n = static_cast<int64_t>(data_.unlabeled.size());
    for (int64_t k = 0; k < config_.batch_unlabeled; ++k) {
      // The unlabeled stream cycles independently of labeled epochs.
      const int64_t global = t * config_.batch_unlabeled + k;
      const auto& uorder = unlabeled_order(global / n);
      unlabeled.push_back(prepare(data_.unlabeled[uorder[global % n]], kAugmentUnlabeled,
                                  static_cast<std::uint64_t>(k)));
    }
  }
  return {collate(labeled), collate(unlabeled)};
}

StepLosses Trainer::compute_losses(const Batch& labeled, const Batch& unlabeled, int64_t t) {
  if (labeled.size() == 0) throw ValidationError("train_step: labeled batch is empty");
  if (!labeled.mask.defined()) throw ValidationError("train_step: labeled batch lacks masks");
  model_->train();

  StepLosses out;
  auto sup_out = model_->forward(labeled.image_a, labeled.image_b);
  out.sup = supervised_loss(sup_out.prediction, labeled.mask);

  if (config_.perturbations.empty() || unlabeled.size() == 0) {
    out.unsup = scalar_zero();
    return out;
  }

  out.unsupervised_active = true;
  auto unsup_out = model_->forward(unlabeled.image_a, unlabeled.image_b);
  const auto target = unsup_out.prediction.detached();
  Rng rng(derive_seed(config_.seed, {kPerturbStream, static_cast<std::uint64_t>(t)}));
  auto main_decoder = model_->main_decoder();
  ProbabilityFn decode_probs = [&](const torch::Tensor& x) {
    return torch::softmax(main_decoder->forward(x), 1);
  };
  auto perturbed = apply_all(unsup_out.difference, target, config_.perturbations, rng,
                             decode_probs, model_->auxiliary_count());
  std::vector<ChangeProbabilityMap> aux;
  aux.reserve(perturbed.size());
  for (std::size_t p = 0; p < perturbed.size(); ++p) {
    aux.push_back(model_->decode_auxiliary(perturbed[p], p));
  }
  out.unsup = consistency_loss(aux, target);
  return out;
}

LossReport Trainer::train_step(const Batch& labeled, const Batch& unlabeled) {
  const int64_t t = iteration_;
  auto losses = compute_losses(labeled, unlabeled, t);
  const double lam = lambda(t);
  auto objective = losses.unsupervised_active ? losses.sup + lam * losses.unsup : losses.sup;
  optimizer_->zero_grad();
  objective.backward();
  optimizer_->step(learning_rate(t));
  ++iteration_;
  return total_loss(losses.sup.item<double>(), losses.unsup.item<double>(), lam);
}

LossReport Trainer::train_step() {
  auto [labeled, unlabeled] = batches_for(iteration_);
  return train_step(labeled, unlabeled);
}

std::vector<LossReport> Trainer::train_steps(int64_t n) {
  std::vector<LossReport> out;
  for (int64_t i = 0; i < n; ++i) out.push_back(train_step());
  return out;
}

MetricsReport Trainer::evaluate(const std::vector<BiTemporalSample>& samples) {
  auto report = evaluate_model(model_, samples, config_.threshold);
  model_->train();
  return report;
}

FitResult Trainer::fit() {
  if (data_.labeled.empty()) throw ValidationError("fit: labeled split is empty");
  FitResult result;
  if (!config_.perturbations.empty() && data_.unlabeled.empty()) {
    warn(&result.warnings,
         "perturbations enabled but the unlabeled split is empty; training supervised only");
  }

  const bool write = !config_.output_dir.empty();
  const fs::path out_dir(config_.output_dir);
  std::ofstream log;
  if (write) {
    fs::create_directories(out_dir);
    const auto mode = iteration_ == 0 ? std::ios::trunc : std::ios::app;
    log.open(out_dir / "train_log.jsonl", std::ios::out | mode);
    if (!log) throw IoError("cannot write " + (out_dir / "train_log.jsonl").string());
    result.best_checkpoint = out_dir / "ckpt_best.bin";
    result.last_checkpoint = out_dir / "ckpt_last.bin";
  }
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const int64_t spe = steps_per_epoch();
  while (iteration_ < total_iterations()) {
    const int64_t epoch = iteration_ / spe;
    do {
      const int64_t t = iteration_;
      const double lr = learning_rate(t);
      auto report = train_step();
      result.steps.push_back(report);
      if (write) {
        nlohmann::ordered_json j{{"type", "step"},     {"iteration", t},
                                 {"epoch", epoch},     {"lr", lr},
                                 {"sup", report.sup},  {"unsup", report.unsup},
                                 {"lambda", report.lambda}, {"total", report.total},
                                 {"elapsed_s", elapsed()}};
        log << j.dump() << '\n';
      }
    } while (iteration_ % spe != 0);

    EpochRecord record{epoch, std::nullopt};
    nlohmann::ordered_json j{{"type", "epoch"}, {"epoch", epoch}, {"iteration", iteration_}};
    if (!data_.val.empty()) {
      record.val = evaluate(data_.val);
      j["val_iou_change"] = record.val->iou_change;
      j["val_overall_accuracy"] = record.val->overall_accuracy;
      if (record.val->iou_change > best_val_iou_) {
        best_val_iou_ = record.val->iou_change;
        if (write) save_checkpoint(result.best_checkpoint);
      }
    }
    result.epochs.push_back(record);
    if (write) {
      log << j.dump() << '\n';
      log.flush();
      save_checkpoint(result.last_checkpoint);
    }
  }

  if (write) {
    save_checkpoint(result.last_checkpoint);
    // Without validation data the most recent state is the best we know.
    if (data_.val.empty() || !fs::exists(result.best_checkpoint)) {
      fs::copy_file(result.last_checkpoint, result.best_checkpoint,
                    fs::copy_options::overwrite_existing);
    }
  }
  return result;
}

void Trainer::save_checkpoint(const fs::path& path) const {
  TensorArchive archive;
  const auto model_config = config_.model_config();
  archive.meta["format"] = "sscd-train-state";
  archive.meta["config"] = config_.to_json();
  archive.meta["model"] = model_config.canonical();
  archive.meta["config_hash"] = hex(model_config.hash());
  archive.meta["iteration"] = std::to_string(iteration_);
  for (const auto& item : model_->named_parameters()) {
    archive.tensors["model/" + item.key()] = item.value();
  }
  for (const auto& item : model_->named_buffers()) {
    archive.tensors["buffer/" + item.key()] = item.value();
  }
  for (const auto& [name, buf] : optimizer_->buffers()) archive.tensors["optim/" + name] = buf;
  archive.tensors["state/best_val_iou"] = torch::tensor({best_val_iou_}, torch::kFloat64);
  write_archive(path, archive);
}

void Trainer::load_checkpoint(const fs::path& path) {
  auto archive = read_archive(path);
  const auto expected = config_.model_config();
  const auto stored = archive.meta.count("config_hash") ? archive.meta["config_hash"] : "";
  if (stored != hex(expected.hash())) {
    throw CheckpointError("config hash mismatch: checkpoint " + path.string() + " has " +
                          stored + " (" + archive.meta["model"] + "), model expects " +
                          hex(expected.hash()) + " (" + expected.canonical() + ")");
  }
  load_module_tensors(*model_, archive.tensors, "");
  std::map<std::string, torch::Tensor> optim;
  for (const auto& [k, v] : archive.tensors) {
    if (k.rfind("optim/", 0) == 0) optim[k.substr(6)] = v;
  }
  optimizer_->load_buffers(optim);
  iteration_ = std::stoll(archive.meta.at("iteration"));
  best_val_iou_ = archive.tensors.at("state/best_val_iou").item<double>();
}

void load_module_tensors(torch::nn::Module& module,
                         const std::map<std::string, torch::Tensor>& tensors,
                         const std::string& prefix) {
  torch::NoGradGuard no_grad;
  auto copy = [&](const std::string& key, torch::Tensor target) {
    auto it = tensors.find(prefix + key);
    if (it == tensors.end()) throw CheckpointError("checkpoint lacks tensor '" + key + "'");
    if (it->second.sizes() != target.sizes() ||
        it->second.scalar_type() != target.scalar_type()) {
      throw CheckpointError("checkpoint tensor '" + key + "' has an incompatible shape");
    }
    target.copy_(it->second);
  };
  for (auto& item : module.named_parameters()) copy("model/" + item.key(), item.value());
  for (auto& item : module.named_buffers()) copy("buffer/" + item.key(), item.value());
}

MetricsReport evaluate_model(ChangeDetector& model, const std::vector<BiTemporalSample>& samples,
                             double threshold, int64_t batch_size) {
  if (samples.empty()) throw ValidationError("evaluate: split is empty");
  torch::NoGradGuard no_grad;
  model->eval();
  ConfusionCounts counts;
  for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<BiTemporalSample> chunk(
        samples.begin() + static_cast<std::ptrdiff_t>(i),
        samples.begin() + static_cast<std::ptrdiff_t>(
                              std::min(samples.size(), i + static_cast<std::size_t>(batch_size))));
    auto batch = collate(chunk);
    if (!batch.mask.defined()) throw ValidationError("evaluate: every sample needs a mask");
    auto out = model->forward(batch.image_a, batch.image_b);
    counts = accumulate(binarize(out.prediction, threshold), batch.mask, counts);
  }
  return MetricsReport::from_counts(counts, threshold);
}

LoadedModel load_model(const fs::path& checkpoint, const std::optional<ModelConfig>& expected) {
  auto archive = read_archive(checkpoint);
  if (!archive.meta.count("config")) {
    throw CheckpointError(checkpoint.string() + " does not contain a training config");
  }
  LoadedModel loaded;
  loaded.config = parse_config(archive.meta.at("config"));
  const auto stored = loaded.config.model_config();
  if (expected && expected->hash() != stored.hash()) {
    throw CheckpointError("config hash mismatch: checkpoint has " + hex(stored.hash()) + " (" +
                          stored.canonical() + "), requested " + hex(expected->hash()) + " (" +
                          expected->canonical() + ")");
  }
  loaded.model = ChangeDetector(stored);
  load_module_tensors(*loaded.model, archive.tensors, "");
  loaded.iteration = std::stoll(archive.meta.at("iteration"));
  loaded.model->eval();
  return loaded;
}

}  // namespace sscd
