#include "sscd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <torch/torch.h>

#include <json.hpp>

#include "sscd/error.hpp"
#include "sscd/image_io.hpp"

namespace fs = std::filesystem;

namespace sscd {
namespace {

std::string shape_string(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& line : lines) out << line << '\n';
}

}  // namespace

void BiTemporalSample::validate() const {
  if (!image_a.defined() || !image_b.defined()) {
    throw ValidationError("sample '" + id + "': missing image tensor");
  }
  if (image_a.dim() != 3 || image_a.size(0) != 3 || image_b.dim() != 3 ||
      image_b.size(0) != 3) {
    throw ValidationError("sample '" + id + "': images must be [3, H, W], got " +
                          shape_string(image_a) + " and " + shape_string(image_b));
  }
  if (image_a.sizes() != image_b.sizes()) {
    throw ValidationError("sample '" + id + "': image dimension mismatch " +
                          shape_string(image_a) + " vs " + shape_string(image_b));
  }
  if (mask) {
    if (mask->dim() != 2 || mask->size(0) != height() || mask->size(1) != width()) {
      throw ValidationError("sample '" + id + "': mask shape " + shape_string(*mask) +
                            " does not match image " + shape_string(image_a));
    }
    if (mask->gt(1).any().item<bool>() || mask->lt(0).any().item<bool>()) {
      throw ValidationError("sample '" + id + "': mask must be binary");
    }
  }
}

void AugmentationConfig::validate() const {
  if (flip_prob < 0 || flip_prob > 1 || blur_prob < 0 || blur_prob > 1) {
    throw ValidationError("augmentation probabilities must lie in [0, 1]");
  }
  if (!(rescale_min > 0) || rescale_max < rescale_min) {
    throw ValidationError("rescale range must satisfy 0 < min <= max");
  }
  if (crop_size < 1) throw ValidationError("crop_size must be positive");
  if (jitter_strength < 0) throw ValidationError("jitter_strength must be >= 0");
}

AugmentationConfig AugmentationConfig::identity(int64_t crop_size) {
  return {0.0, 1.0, 1.0, crop_size, 0.0, 0.0};
}

BiTemporalSample load_pair(const fs::path& path_a, const fs::path& path_b,
                           const std::optional<fs::path>& path_mask, std::string id) {
  BiTemporalSample s;
  s.image_a = read_rgb_tensor(path_a);
  s.image_b = read_rgb_tensor(path_b);
  if (path_mask) s.mask = read_mask_tensor(*path_mask);
  s.id = id.empty() ? path_a.stem().string() : std::move(id);
  if (s.image_a.sizes() != s.image_b.sizes()) {
    throw ValidationError("dimension mismatch: " + path_a.string() + " is " +
                          shape_string(s.image_a) + " but " + path_b.string() + " is " +
                          shape_string(s.image_b));
  }
  s.validate();
  return s;
}

PairDirectory::PairDirectory(fs::path root) : root_(std::move(root)) {}

bool PairDirectory::has_labels() const { return fs::is_directory(root_ / "label"); }

std::vector<std::string> PairDirectory::missing_directories() const {
  std::vector<std::string> missing;
  for (const char* sub : {"A", "B"}) {
    if (!fs::is_directory(root_ / sub)) missing.push_back((root_ / sub).string());
  }
  return missing;
}

std::vector<std::string> PairDirectory::ids() const {
  const auto dir = root_ / "A";
  if (!fs::is_directory(dir)) throw IoError("missing directory " + dir.string());
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      out.push_back(entry.path().stem().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

BiTemporalSample PairDirectory::load(const std::string& id, bool with_mask) const {
  const auto name = id + ".png";
  std::optional<fs::path> mask;
  if (with_mask) mask = root_ / "label" / name;
  return load_pair(root_ / "A" / name, root_ / "B" / name, mask, id);
}

std::string patch_id(const std::string& parent, int64_t row, int64_t col) {
  return parent + "_r" + std::to_string(row) + "_c" + std::to_string(col);
}

std::vector<std::string> patch_ids_for(const std::string& parent, int64_t height,
                                       int64_t width, int64_t patch_size) {
  if (patch_size < 1) throw ValidationError("patch_size must be >= 1");
  if (patch_size > height || patch_size > width) {
    throw ValidationError("patch_size " + std::to_string(patch_size) +
                          " exceeds image size " + std::to_string(height) + "x" +
                          std::to_string(width) + " of '" + parent + "'");
  }
  std::vector<std::string> ids;
  for (int64_t r = 0; r < height / patch_size; ++r) {
    for (int64_t c = 0; c < width / patch_size; ++c) ids.push_back(patch_id(parent, r, c));
  }
  return ids;
}

std::vector<BiTemporalSample> extract_patches(const BiTemporalSample& sample,
                                              int64_t patch_size) {
  sample.validate();
  const auto ids = patch_ids_for(sample.id, sample.height(), sample.width(), patch_size);
  const int64_t cols = sample.width() / patch_size;
  std::vector<BiTemporalSample> patches;
  patches.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int64_t r = static_cast<int64_t>(i) / cols;
    const int64_t c = static_cast<int64_t>(i) % cols;
    auto rows = torch::indexing::Slice(r * patch_size, (r + 1) * patch_size);
    auto cs = torch::indexing::Slice(c * patch_size, (c + 1) * patch_size);
    BiTemporalSample p;
    p.image_a = sample.image_a.index({torch::indexing::Slice(), rows, cs}).clone();
    p.image_b = sample.image_b.index({torch::indexing::Slice(), rows, cs}).clone();
    if (sample.mask) p.mask = sample.mask->index({rows, cs}).clone();
    p.id = ids[i];
    patches.push_back(std::move(p));
  }
  return patches;
}

std::vector<BiTemporalSample> load_samples(const PairDirectory& dir,
                                           const std::vector<std::string>& ids,
                                           int64_t patch_size, bool with_mask) {
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::map<std::string, BiTemporalSample> found;
  for (const auto& parent : dir.ids()) {
    if (patch_size == 0) {
      if (wanted.count(parent)) found.emplace(parent, dir.load(parent, with_mask));
      continue;
    }
    const auto size = read_png_size(dir.root() / "A" / (parent + ".png"));
    const auto children = patch_ids_for(parent, size.height, size.width, patch_size);
    if (std::none_of(children.begin(), children.end(),
                     [&](const std::string& c) { return wanted.count(c) > 0; })) {
      continue;
    }
    for (auto& patch : extract_patches(dir.load(parent, with_mask), patch_size)) {
      if (wanted.count(patch.id)) found.emplace(patch.id, std::move(patch));
    }
  }
  std::vector<BiTemporalSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = found.find(id);
    if (it == found.end()) {
      throw IoError("id '" + id + "' not found under " + dir.root().string());
    }
    out.push_back(it->second);
  }
  return out;
}

SplitManifest make_split(std::vector<std::string> train_ids, double labeled_fraction,
                         std::uint64_t seed) {
  if (train_ids.empty()) throw ValidationError("make_split: train_ids is empty");
  if (!(labeled_fraction > 0.0) || labeled_fraction > 1.0) {
    throw ValidationError("make_split: labeled_fraction must lie in (0, 1], got " +
                          std::to_string(labeled_fraction));
  }
  std::sort(train_ids.begin(), train_ids.end());
  if (std::adjacent_find(train_ids.begin(), train_ids.end()) != train_ids.end()) {
    throw ValidationError("make_split: duplicate ids in train set");
  }
  const auto total = train_ids.size();
  auto n_labeled = static_cast<std::size_t>(
      std::llround(labeled_fraction * static_cast<double>(total)));
  n_labeled = std::clamp<std::size_t>(n_labeled, 1, total);

  Rng rng(derive_seed(seed, {stream_tag("split")}));
  rng.shuffle(train_ids);

  SplitManifest m;
  m.labeled_fraction = labeled_fraction;
  m.seed = seed;
  m.labeled_ids.assign(train_ids.begin(), train_ids.begin() + n_labeled);
  m.unlabeled_ids.assign(train_ids.begin() + n_labeled, train_ids.end());
  std::sort(m.labeled_ids.begin(), m.labeled_ids.end());
  std::sort(m.unlabeled_ids.begin(), m.unlabeled_ids.end());
  return m;
}

void write_manifest(const SplitManifest& m, const fs::path& dir) {
  fs::create_directories(dir);
  write_lines(dir / "labeled.txt", m.labeled_ids);
  write_lines(dir / "unlabeled.txt", m.unlabeled_ids);
  write_lines(dir / "val.txt", m.val_ids);
  write_lines(dir / "test.txt", m.test_ids);
  nlohmann::ordered_json j;
  j["labeled_fraction"] = m.labeled_fraction;
  j["seed"] = m.seed;
  j["counts"] = {{"labeled", m.labeled_ids.size()},
                 {"unlabeled", m.unlabeled_ids.size()},
                 {"val", m.val_ids.size()},
                 {"test", m.test_ids.size()}};
  std::ofstream out(dir / "split.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "split.json").string());
  out << j.dump(2) << '\n';
}

SplitManifest read_manifest(const fs::path& dir) {
  SplitManifest m;
  m.labeled_ids = read_lines(dir / "labeled.txt");
  m.unlabeled_ids = read_lines(dir / "unlabeled.txt");
  m.val_ids = read_lines(dir / "val.txt");
  m.test_ids = read_lines(dir / "test.txt");
  std::ifstream in(dir / "split.json");
  if (!in) throw IoError("cannot open " + (dir / "split.json").string());
  try {
    const auto j = nlohmann::json::parse(in);
    m.labeled_fraction = j.at("labeled_fraction").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed split.json in " + dir.string() + ": " + e.what());
  }
  return m;
}

Batch collate(const std::vector<BiTemporalSample>& samples) {
  Batch b;
  if (samples.empty()) return b;
  std::vector<torch::Tensor> a, bb, m;
  bool all_masked = true;
  for (const auto& s : samples) {
    a.push_back(s.image_a);
    bb.push_back(s.image_b);
    if (s.mask) {
      m.push_back(*s.mask);
    } else {
      all_masked = false;
    }
    b.ids.push_back(s.id);
  }
  b.image_a = torch::stack(a);
  b.image_b = torch::stack(bb);
  if (all_masked) b.mask = torch::stack(m).to(torch::kInt64);
  return b;
}

}  // namespace sscd
