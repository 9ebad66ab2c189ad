// Acceptance harness: prints one PASS/FAIL line per criterion.
// Usage: sscd_acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sscd/cluster.hpp"
#include "sscd/experiment.hpp"
#include "sscd/losses.hpp"
#include "sscd/metrics.hpp"
#include "sscd/model.hpp"
#include "sscd/perturb.hpp"
#include "sscd/synthetic.hpp"
#include "sscd/trainer.hpp"
#include "support.hpp"

namespace {

using namespace sscd;
using torch::indexing::Slice;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// -- 1: metrics against a nested-loop tally ---------------------------------

Outcome metric_oracle() {
  const auto start = Clock::now();
  int mismatches = 0;
  for (int pair = 0; pair < 100; ++pair) {
    Rng rng(derive_seed(1, {static_cast<std::uint64_t>(pair)}));
    auto pred = testing::random_mask(rng, 32, 32, rng.uniform(0.05, 0.95));
    auto gt = testing::random_mask(rng, 32, 32, rng.uniform(0.05, 0.95));
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    auto p = pred.accessor<std::uint8_t, 2>();
    auto g = gt.accessor<std::uint8_t, 2>();
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        if (p[y][x] && g[y][x]) ++tp;
        else if (p[y][x]) ++fp;
        else if (g[y][x]) ++fn;
        else ++tn;
      }
    }
    const double iou = tp + fp + fn == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp + fn);
    const double oa = static_cast<double>(tp + tn) / (tp + fp + fn + tn);
    auto counts = accumulate(pred, gt);
    if (counts.tp != tp || counts.fp != fp || counts.fn != fn || counts.tn != tn ||
        iou_change(counts) != iou || overall_accuracy(counts) != oa) {
      ++mismatches;
    }
  }
  const double secs = seconds_since(start);
  std::ostringstream os;
  os << mismatches << " mismatches in 100 pairs, " << secs << " s";
  return {mismatches == 0 && secs < 5.0, os.str()};
}

// -- 2: loss gradients against central differences --------------------------

double relative_error(const torch::Tensor& a, const torch::Tensor& b) {
  const double scale = std::max(a.norm().item<double>(), b.norm().item<double>());
  return scale == 0.0 ? 0.0 : (a - b).norm().item<double>() / scale;
}

torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f,
                               const torch::Tensor& x, double h = 1e-6) {
  auto grad = torch::zeros_like(x);
  auto flat = x.view(-1);
  auto g = grad.view(-1);
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double up = f(x);
    flat[i] = orig - h;
    const double down = f(x);
    flat[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Outcome loss_gradients() {
  const auto start = Clock::now();
  torch::NoGradGuard outer;
  double worst_sup = 0.0, worst_cons = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(2, {seed}));
    auto target = testing::random_mask(rng, 2 * 8, 8).view({2, 8, 8});
    auto logits = rng.normal_tensor({2, 2, 8, 8}, torch::kFloat64) * 2.0;

    torch::Tensor analytic;
    {
      torch::AutoGradMode on(true);
      auto x = logits.clone().requires_grad_(true);
      analytic = torch::autograd::grad({supervised_loss(x, target)}, {x})[0];
    }
    auto numeric = numeric_gradient(
        [&](const torch::Tensor& x) { return supervised_loss(x, target).item<double>(); },
        logits.clone());
    worst_sup = std::max(worst_sup, relative_error(analytic, numeric));

    auto main_logits = rng.normal_tensor({2, 2, 8, 8}, torch::kFloat64);
    auto y_hat = ChangeProbabilityMap::from_logits(main_logits);
    std::vector<torch::Tensor> aux_logits{rng.normal_tensor({2, 2, 8, 8}, torch::kFloat64),
                                          rng.normal_tensor({2, 2, 8, 8}, torch::kFloat64)};
    auto cons = [&](const std::vector<torch::Tensor>& ls) {
      std::vector<ChangeProbabilityMap> aux;
      for (const auto& l : ls) aux.push_back(ChangeProbabilityMap::from_logits(l));
      return consistency_loss(aux, y_hat);
    };
    for (std::size_t k = 0; k < aux_logits.size(); ++k) {
      torch::Tensor grad;
      {
        torch::AutoGradMode on(true);
        auto ls = aux_logits;
        ls[k] = ls[k].clone().requires_grad_(true);
        grad = torch::autograd::grad({cons(ls)}, {ls[k]})[0];
      }
      auto probe = aux_logits[k].clone();
      auto num = numeric_gradient(
          [&](const torch::Tensor& x) {
            auto ls = aux_logits;
            ls[k] = x;
            return cons(ls).item<double>();
          },
          probe);
      worst_cons = std::max(worst_cons, relative_error(grad, num));
    }
  }
  const double secs = seconds_since(start);
  std::ostringstream os;
  os << "max relative error sup " << worst_sup << ", consistency " << worst_cons << ", " << secs
     << " s";
  return {worst_sup < 1e-4 && worst_cons < 1e-4 && secs < 30.0, os.str()};
}

// -- 3: perturbation properties ----------------------------------------------

Outcome perturbation_properties() {
  const auto start = Clock::now();
  torch::manual_seed(3);
  Decoder decoder(32, 16);
  decoder->eval();
  ProbabilityFn decode = [&](const torch::Tensor& x) {
    return torch::softmax(decoder->forward(x), 1);
  };
  std::map<std::string, int> failures;
  double worst_norm = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(derive_seed(3, {seed}));
    FeatureDifferenceMap fd{rng.uniform_tensor({2, 32, 8, 8}, 0.0, 3.0)};
    ChangeProbabilityMap y_hat;
    {
      torch::NoGradGuard no_grad;
      y_hat = ChangeProbabilityMap::from_logits(decoder->forward(fd.data));
    }

    auto noisy = feature_noise(fd, rng).data;
    if (noisy.sizes() != fd.data.sizes() ||
        !(noisy - fd.data).abs().le(0.3 * fd.data.abs() * (1 + 1e-6)).all().item<bool>()) {
      ++failures["noise"];
    }

    auto drop = feature_drop(fd, rng);
    const auto& m = drop.keep_mask;
    const bool binary = (m.eq(0) | m.eq(1)).all().item<bool>();
    if (drop.features.data.sizes() != fd.data.sizes() || m.size(1) != 1 || !binary ||
        !drop.features.data.equal(m.expand_as(fd.data) * fd.data)) {
      ++failures["drop"];
    }

    auto cut = guided_cutout(fd, y_hat, rng);
    if (cut.features.data.sizes() != fd.data.sizes()) ++failures["cutout"];

    auto views = content_object_masks(fd, y_hat);
    if (views.content_view.data.sizes() != fd.data.sizes() ||
        !torch::allclose(views.content_view.data + views.object_view.data, fd.data, 0, 0)) {
      ++failures["masks"];
    }

    auto vat = feature_vat(fd, decode, y_hat.probs, rng);
    auto norms = vat.perturbation.flatten(1).norm(2, 1).to(torch::kFloat64);
    const double err = (norms - 2.0).abs().max().item<double>();
    worst_norm = std::max(worst_norm, err);
    if (vat.features.data.sizes() != fd.data.sizes() || err > 1e-5) ++failures["vat"];
  }
  const double secs = seconds_since(start);
  std::ostringstream os;
  int total = 0;
  for (const auto& [name, n] : failures) {
    os << name << " failed " << n << "x; ";
    total += n;
  }
  os << "max | |p_adv| - eps | " << worst_norm << ", " << secs << " s";
  return {total == 0 && secs < 30.0, os.str()};
}

// -- 4: ramp-up schedule -------------------------------------------------------

Outcome schedule() {
  const RampUpSchedule s{300, 1000};
  const double at0 = ramp_up(0, s);
  bool ok = std::abs(at0 - std::exp(-5.0)) <= 1e-9 && ramp_up(300, s) == 1.0;
  double previous = -1.0;
  int non_monotone = 0, after_t = 0;
  for (int i = 0; i < 1000; ++i) {
    const int64_t t = std::llround(i * 1000.0 / 999.0);  // spans [0, total]
    const double v = ramp_up(t, s);
    if (v < previous) ++non_monotone;
    if (t > s.ramp_iters && v != 1.0) ++after_t;
    previous = v;
  }
  // Beyond the nominal end of training as well.
  for (int64_t t : {301, 999, 1000, 5000}) after_t += ramp_up(t, s) != 1.0;
  ok = ok && non_monotone == 0 && after_t == 0;
  std::ostringstream os;
  os << "lambda(0)=" << at0 << ", lambda(T)=" << ramp_up(300, s) << ", " << non_monotone
     << " decreases, " << after_t << " values != 1 after T";
  return {ok, os.str()};
}

// -- 5/6/7: toy experiment -----------------------------------------------------

struct ToyResults {
  std::vector<std::vector<ToyRun>> runs;  // [seed][ablation set]
  std::vector<std::string> errors;
  ChangeDetector trained{nullptr};
};

ToyResults run_toy_suite(bool full_ablation) {
  ToyResults results;
  auto sets = ablation_sets();
  if (!full_ablation) sets = {sets.front(), sets.back()};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto experiment = ToyExperiment::standard(seed);
    auto data = make_toy_data(experiment);
    std::vector<ToyRun> runs;
    for (const auto& kinds : sets) {
      try {
        runs.push_back(run_toy(experiment, data, kinds));
      } catch (const std::exception& e) {
        results.errors.push_back("seed " + std::to_string(seed) + " " + describe(kinds) + ": " +
                                 e.what());
      }
    }
    std::cout << "seed " << seed << "\n" << ablation_table(runs) << std::flush;
    if (seed == 0 && !runs.empty() && runs.back().kinds.size() == sets.back().size()) {
      results.trained = runs.back().model;
    }
    results.runs.push_back(std::move(runs));
  }
  return results;
}

const ToyRun* find_run(const std::vector<ToyRun>& runs, std::size_t kinds) {
  for (const auto& r : runs) {
    if (r.kinds.size() == kinds) return &r;
  }
  return nullptr;
}

Outcome semi_supervised_gain(const ToyResults& toy) {
  int wins = 0;
  double slowest = 0.0;
  std::ostringstream os;
  for (std::size_t seed = 0; seed < toy.runs.size(); ++seed) {
    const auto* sup = find_run(toy.runs[seed], 0);
    const auto* semi = find_run(toy.runs[seed], all_perturbation_kinds().size());
    if (!sup || !semi) continue;
    wins += semi->test.iou_change > sup->test.iou_change;
    slowest = std::max({slowest, sup->seconds, semi->seconds});
    os << "seed " << seed << ": " << sup->test.iou_change << " -> " << semi->test.iou_change
       << "; ";
  }
  os << "semi wins " << wins << "/5, slowest run " << slowest << " s";
  return {wins >= 3 && slowest < 900.0, os.str()};
}

Outcome ablation_harness(const ToyResults& toy) {
  std::size_t completed = 0;
  for (const auto& runs : toy.runs) completed += runs.size();
  const std::size_t expected = 5 * ablation_sets().size();
  auto gain = semi_supervised_gain(toy);
  std::ostringstream os;
  os << completed << "/" << expected << " runs completed";
  for (const auto& e : toy.errors) os << "; " << e;
  os << "; full vs {}: " << (gain.pass ? "beats" : "does not beat") << " in >= 3 of 5 seeds";
  return {completed == expected && gain.pass, os.str()};
}

Outcome cluster_sanity(ChangeDetector model) {
  if (!model) return {false, "no trained model"};
  auto pair = make_square_pair(64, 20, 24, 16, 1234);
  torch::Tensor fd;
  {
    torch::NoGradGuard no_grad;
    model->eval();
    fd = model->forward(pair.image_a.unsqueeze(0), pair.image_b.unsqueeze(0)).difference.data;
  }
  auto density = feature_domain_density(fd).values;
  const int64_t h = density.size(0), w = density.size(1);
  const int64_t cell = 64 / h;

  // Cell-level change region and its boundary cells.
  auto change = pair.mask->view({h, cell, w, cell}).amax({1, 3});
  auto boundary = mask_boundary(change);
  auto chebyshev_to = [&](const torch::Tensor& set, int64_t y, int64_t x) {
    int64_t best = std::numeric_limits<int64_t>::max();
    for (int64_t yy = 0; yy < h; ++yy) {
      for (int64_t xx = 0; xx < w; ++xx) {
        if (set[yy][xx].item<bool>()) {
          best = std::min(best, std::max(std::abs(yy - y), std::abs(xx - x)));
        }
      }
    }
    return best;
  };
  double band_sum = 0.0, far_sum = 0.0;
  int band_n = 0, far_n = 0;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double v = density[y][x].item<double>();
      if (chebyshev_to(boundary, y, x) <= 1) {
        band_sum += v;
        ++band_n;
      } else if (chebyshev_to(change, y, x) >= 3) {
        far_sum += v;
        ++far_n;
      }
    }
  }
  const double band = band_sum / band_n, far = far_sum / far_n;

  BiTemporalSample constant;
  constant.image_a = torch::full({3, 64, 64}, 0.4f);
  constant.image_b = constant.image_a.clone();
  const bool image_zero = image_domain_density(constant).values.eq(0).all().item<bool>();

  std::ostringstream os;
  os << "band mean " << band << " (" << band_n << " cells), far mean " << far << " (" << far_n
     << " cells), ratio " << band / far << "; constant-pair image density all zero: "
     << (image_zero ? "yes" : "no");
  return {band >= 2.0 * far && image_zero, os.str()};
}

// -- 8: determinism and resume ----------------------------------------------

bool reports_close(const LossReport& a, const LossReport& b, double tol) {
  return std::abs(a.sup - b.sup) <= tol && std::abs(a.unsup - b.unsup) <= tol &&
         std::abs(a.lambda - b.lambda) <= tol && std::abs(a.total - b.total) <= tol;
}

Outcome determinism_and_resume() {
  ToyCorpusOptions o;
  o.count = 12;
  o.size = 32;
  o.min_side = 6;
  o.max_side = 12;
  o.seed = 8;
  auto corpus = make_toy_corpus(o);
  TrainData data;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (i < 6) {
      data.labeled.push_back(corpus[i]);
    } else {
      corpus[i].mask.reset();
      data.unlabeled.push_back(corpus[i]);
    }
  }
  auto config = testing::tiny_config(8);
  config.epochs = 8;  // 3 steps per epoch, 24 total

  Trainer first(config, data), second(config, data);
  const bool first_step = reports_close(first.train_step(), second.train_step(), 1e-6);

  Trainer straight(config, data);
  auto reference = straight.train_steps(20);
  Trainer before(config, data);
  auto resumed = before.train_steps(10);
  testing::TempDir dir("acceptance_resume");
  before.save_checkpoint(dir / "ckpt.bin");
  Trainer after(config, data);
  after.load_checkpoint(dir / "ckpt.bin");
  auto tail = after.train_steps(10);
  resumed.insert(resumed.end(), tail.begin(), tail.end());
  int diverged = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    diverged += !reports_close(reference[i], resumed[i], 1e-6);
    worst = std::max({worst, std::abs(reference[i].total - resumed[i].total),
                      std::abs(reference[i].sup - resumed[i].sup),
                      std::abs(reference[i].unsup - resumed[i].unsup)});
  }
  std::ostringstream os;
  os << "first step " << (first_step ? "identical" : "differs") << "; resume: " << diverged
     << "/20 steps off, max deviation " << worst;
  return {first_step && diverged == 0, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };
  torch::set_num_threads(1);

  int failed = 0;
  auto report = [&](int criterion, const std::string& name, const Outcome& o, double secs) {
    std::printf("criterion %d %-28s %s  (%s; %.1f s)\n", criterion, name.c_str(),
                o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  };
  auto timed = [&](int criterion, const std::string& name, const std::function<Outcome()>& f) {
    if (!wanted(criterion)) return;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(criterion, name, o, seconds_since(start));
  };

  timed(1, "metric oracle", metric_oracle);
  timed(2, "loss gradients", loss_gradients);
  timed(3, "perturbation properties", perturbation_properties);
  timed(4, "ramp-up schedule", schedule);

  if (wanted(5) || wanted(6) || wanted(7)) {
    const auto start = Clock::now();
    ToyResults toy;
    try {
      toy = run_toy_suite(wanted(6));
    } catch (const std::exception& e) {
      toy.errors.push_back(e.what());
    }
    const double secs = seconds_since(start);
    if (wanted(5)) report(5, "semi-supervised gain", semi_supervised_gain(toy), secs);
    if (wanted(6)) report(6, "ablation harness", ablation_harness(toy), secs);
    timed(7, "cluster diagnostic", [&] { return cluster_sanity(toy.trained); });
  }

  timed(8, "determinism and resume", determinism_and_resume);
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
