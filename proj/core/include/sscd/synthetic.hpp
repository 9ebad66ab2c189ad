#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sscd/datasets.hpp"
#include "sscd/rng.hpp"

namespace sscd {

/// Synthetic bi-temporal corpus: a smooth random texture as the pre image;
/// the post image is the same scene under a global brightness change (an
/// irrelevant change) with 1-3 bright rectangles inserted (the labelled changes).
struct ToyCorpusOptions {
  int64_t count = 200;
  int64_t size = 64;
  int min_changes = 1;
  int max_changes = 3;
  int64_t min_side = 8;
  int64_t max_side = 20;
  double brightness_jitter = 0.2;  // post = pre * (1 + U(-j, j))
  double sensor_noise = 0.02;      // independent U(-s, s) per pixel and image
  std::uint64_t seed = 0;
};

BiTemporalSample make_toy_pair(const ToyCorpusOptions& options, Rng& rng, std::string id);
std::vector<BiTemporalSample> make_toy_corpus(const ToyCorpusOptions& options);

/// One textured pair with a single inserted square of the given geometry.
BiTemporalSample make_square_pair(int64_t size, int64_t top, int64_t left, int64_t side,
                                  std::uint64_t seed, double brightness_jitter = 0.0);

/// Writes A/<id>.png, B/<id>.png and label/<id>.png under `dir`.
void write_pairs(const std::vector<BiTemporalSample>& samples,
                 const std::filesystem::path& dir);

}  // namespace sscd
