#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asymseg/errors.hpp"

namespace asymseg {

enum class Split { kTrain, kTest };

inline const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

// Elliptical structures on a textured background. Each case draws one
// intensity offset (magnitude and sign), so foreground appearance is
// case-specific: blobs are brighter than the background in some cases and
// darker in others, by varying amounts. A model trained on few cases can
// memorize their offsets but has no single rule that transfers.
struct BlobParams {
  int min_blobs = 1;
  int max_blobs = 3;
  double min_radius = 4.0;   // ellipse semi-axes, pixels
  double max_radius = 8.0;
  double min_offset = 0.5;   // case-specific |foreground - background| contrast
  double max_offset = 1.6;
  bool signed_offsets = true;  // draw the sign per case as well
  double blob_noise = 0.15;    // texture inside blobs
};

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_train_cases = 50;
  int n_test_cases = 20;
  int image_size = 64;
  int patch_size = 9;
  BlobParams blobs;
  // Probability that a drawn training patch is centered on foreground.
  double class_sampling_ratio = 0.5;
  int train_patches_per_case = 2000;
  int test_patches_per_case = 500;

  void validate() const;
};

struct Blob {
  double cx, cy;     // center
  double a, b;       // semi-axes
  double angle;      // radians
};

struct CaseImage {
  int case_id = 0;
  Split split = Split::kTrain;
  int size = 0;
  std::vector<double> pixels;       // size * size, standardized
  std::vector<std::uint8_t> mask;   // 1 = foreground
  std::vector<Blob> blobs;

  double fg_fraction() const;
};

struct Sample {
  int case_id = 0;
  int label = 0;  // mask value at the patch center
  int cx = 0, cy = 0;
  std::vector<double> patch;  // patch_size * patch_size
};

struct PatchSet {
  Split split = Split::kTrain;
  double fraction = 1.0;
  double fg_ratio = 0.0;
  std::vector<Sample> samples;
  std::vector<std::string> warnings;  // skipped cases etc.; not serialized
};

struct Dataset {
  SynthConfig config;
  std::vector<CaseImage> cases;  // train cases first, then test
  PatchSet train;
  PatchSet test;
  // Standardization applied to all pixels, computed on raw training pixels.
  double norm_mean = 0.0;
  double norm_std = 1.0;

  std::vector<const CaseImage*> split_cases(Split split) const;
  const CaseImage& case_by_id(int case_id) const;
};

// Raw image generation: background texture (smoothed noise + intensity
// gradient) with 1-3 elliptical foreground blobs per case. Deterministic in
// config.seed; each case uses an independently derived sub-seed, so case
// order does not matter. Pixels come back standardized to zero mean / unit
// variance over the training pixels.
std::vector<CaseImage> generate_images(const SynthConfig& config, double* out_mean = nullptr,
                                       double* out_std = nullptr);

// Training patches follow the requested foreground sampling ratio; test
// patches are drawn uniformly over valid centers, keeping the natural class
// imbalance. Labels are the center-pixel mask values. Cases without a
// usable center for a requested class are skipped with a warning.
PatchSet extract_patches(const std::vector<CaseImage>& cases, Split split,
                         const SynthConfig& config, std::uint64_t seed,
                         double class_sampling_ratio);

// Images plus both patch sets.
Dataset generate_dataset(const SynthConfig& config);

// Seeded order in which train cases are retained when subsampling; taking a
// prefix of this order yields nested case subsets across fractions.
std::vector<int> train_case_order(const Dataset& dataset, std::uint64_t seed);
// ceil(fraction * n_cases) whole cases from the front of the order.
std::vector<int> select_train_cases(const Dataset& dataset, double fraction,
                                    std::uint64_t seed);

// Whole-case subsampling of the train split; test split untouched.
Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed);

// Valid patch-center half-width: centers must keep the whole patch inside.
inline int patch_margin(int patch_size) { return patch_size / 2; }

// Copies the patch centered at (cx, cy); caller guarantees validity.
std::vector<double> cut_patch(const CaseImage& image, int cx, int cy, int patch_size);

}  // namespace asymseg
