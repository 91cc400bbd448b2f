#include "asymseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "asymseg/rng.hpp"

namespace asymseg {

void SynthConfig::validate() const {
  if (n_train_cases + n_test_cases < 2 || n_train_cases < 1 || n_test_cases < 1)
    throw ConfigError("synth: need at least one train and one test case");
  if (patch_size < 3 || patch_size % 2 == 0)
    throw ConfigError("synth: patch_size must be odd and >= 3");
  if (image_size < 4 * patch_size)
    throw ConfigError("synth: image_size " + std::to_string(image_size) +
                      " must be >= 4 * patch_size (" + std::to_string(4 * patch_size) + ")");
  if (blobs.min_blobs < 1 || blobs.max_blobs < blobs.min_blobs)
    throw ConfigError("synth: invalid blob count range");
  if (blobs.min_radius < 1.0 || blobs.max_radius < blobs.min_radius)
    throw ConfigError("synth: invalid blob radius range");
  if (2.0 * blobs.max_radius + 2.0 >= static_cast<double>(image_size))
    throw ConfigError("synth: blob diameter " + std::to_string(2.0 * blobs.max_radius) +
                      " does not fit image of size " + std::to_string(image_size));
  if (blobs.max_offset < blobs.min_offset)
    throw ConfigError("synth: invalid blob offset range");
  if (blobs.blob_noise < 0.0) throw ConfigError("synth: blob_noise must be >= 0");
  if (!(class_sampling_ratio > 0.0 && class_sampling_ratio < 1.0))
    throw ConfigError("synth: class_sampling_ratio must lie in (0, 1)");
  if (train_patches_per_case < 1 || test_patches_per_case < 1)
    throw ConfigError("synth: patches per case must be positive");
}

double CaseImage::fg_fraction() const {
  if (mask.empty()) return 0.0;
  std::size_t fg = 0;
  for (std::uint8_t v : mask) fg += v;
  return static_cast<double>(fg) / static_cast<double>(mask.size());
}

std::vector<const CaseImage*> Dataset::split_cases(Split split) const {
  std::vector<const CaseImage*> out;
  for (const CaseImage& c : cases)
    if (c.split == split) out.push_back(&c);
  return out;
}

const CaseImage& Dataset::case_by_id(int case_id) const {
  for (const CaseImage& c : cases)
    if (c.case_id == case_id) return c;
  throw ContractError("dataset: unknown case id " + std::to_string(case_id));
}

namespace {

// One 3x3 box-blur pass with clamped borders.
std::vector<double> box_blur(const std::vector<double>& in, int size) {
  std::vector<double> out(in.size(), 0.0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int yy = std::clamp(y + dy, 0, size - 1);
          int xx = std::clamp(x + dx, 0, size - 1);
          acc += in[static_cast<std::size_t>(yy) * size + xx];
        }
      out[static_cast<std::size_t>(y) * size + x] = acc / 9.0;
    }
  return out;
}

CaseImage generate_case(const SynthConfig& config, int case_id, Split split) {
  const int size = config.image_size;
  const std::size_t n = static_cast<std::size_t>(size) * size;
  std::mt19937_64 rng(derive_seed(config.seed, 0x1000 + static_cast<std::uint64_t>(case_id)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  CaseImage img;
  img.case_id = case_id;
  img.split = split;
  img.size = size;
  img.mask.assign(n, 0);

  // Background: smoothed white noise plus a linear intensity gradient.
  std::vector<double> noise(n);
  for (double& v : noise) v = normal(rng);
  noise = box_blur(box_blur(box_blur(noise, size), size), size);
  double gx = -0.6 + 1.2 * unit(rng);
  double gy = -0.6 + 1.2 * unit(rng);
  img.pixels.resize(n);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double u = static_cast<double>(x) / (size - 1) - 0.5;
      double v = static_cast<double>(y) / (size - 1) - 0.5;
      img.pixels[static_cast<std::size_t>(y) * size + x] =
          noise[static_cast<std::size_t>(y) * size + x] + gx * u + gy * v;
    }

  // Case-specific foreground appearance; the memorizable cue. Sign and
  // magnitude are both per-case draws.
  double offset = config.blobs.min_offset +
                  (config.blobs.max_offset - config.blobs.min_offset) * unit(rng);
  if (config.blobs.signed_offsets && unit(rng) < 0.5) offset = -offset;

  std::uniform_int_distribution<int> blob_count(config.blobs.min_blobs, config.blobs.max_blobs);
  int n_blobs = blob_count(rng);
  for (int bi = 0; bi < n_blobs; ++bi) {
    Blob blob;
    blob.a = config.blobs.min_radius +
             (config.blobs.max_radius - config.blobs.min_radius) * unit(rng);
    blob.b = config.blobs.min_radius +
             (config.blobs.max_radius - config.blobs.min_radius) * unit(rng);
    blob.angle = unit(rng) * 3.14159265358979323846;
    double reach = std::max(blob.a, blob.b) + 1.0;
    blob.cx = reach + (size - 1 - 2.0 * reach) * unit(rng);
    blob.cy = reach + (size - 1 - 2.0 * reach) * unit(rng);
    img.blobs.push_back(blob);

    double ca = std::cos(blob.angle), sa = std::sin(blob.angle);
    int x0 = std::max(0, static_cast<int>(std::floor(blob.cx - reach)));
    int x1 = std::min(size - 1, static_cast<int>(std::ceil(blob.cx + reach)));
    int y0 = std::max(0, static_cast<int>(std::floor(blob.cy - reach)));
    int y1 = std::min(size - 1, static_cast<int>(std::ceil(blob.cy + reach)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double dx = x - blob.cx, dy = y - blob.cy;
        double u = (dx * ca + dy * sa) / blob.a;
        double v = (-dx * sa + dy * ca) / blob.b;
        if (u * u + v * v <= 1.0) {
          std::size_t p = static_cast<std::size_t>(y) * size + x;
          img.mask[p] = 1;
          img.pixels[p] += offset + config.blobs.blob_noise * normal(rng);
        }
      }
  }
  return img;
}

}  // namespace

std::vector<CaseImage> generate_images(const SynthConfig& config, double* out_mean,
                                       double* out_std) {
  config.validate();
  std::vector<CaseImage> cases;
  cases.reserve(static_cast<std::size_t>(config.n_train_cases + config.n_test_cases));
  for (int i = 0; i < config.n_train_cases; ++i)
    cases.push_back(generate_case(config, i, Split::kTrain));
  for (int i = 0; i < config.n_test_cases; ++i)
    cases.push_back(generate_case(config, config.n_train_cases + i, Split::kTest));

  // Standardize everything with the raw train-pixel statistics.
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (const CaseImage& c : cases) {
    if (c.split != Split::kTrain) continue;
    for (double v : c.pixels) {
      sum += v;
      sum_sq += v * v;
    }
    count += c.pixels.size();
  }
  double mean = sum / static_cast<double>(count);
  double var = sum_sq / static_cast<double>(count) - mean * mean;
  double std_dev = std::sqrt(std::max(var, 1e-12));
  for (CaseImage& c : cases)
    for (double& v : c.pixels) v = (v - mean) / std_dev;

  if (out_mean) *out_mean = mean;
  if (out_std) *out_std = std_dev;
  return cases;
}

std::vector<double> cut_patch(const CaseImage& image, int cx, int cy, int patch_size) {
  int h = patch_margin(patch_size);
  std::vector<double> patch(static_cast<std::size_t>(patch_size) * patch_size);
  std::size_t k = 0;
  for (int y = cy - h; y <= cy + h; ++y)
    for (int x = cx - h; x <= cx + h; ++x)
      patch[k++] = image.pixels[static_cast<std::size_t>(y) * image.size + x];
  return patch;
}

PatchSet extract_patches(const std::vector<CaseImage>& cases, Split split,
                         const SynthConfig& config, std::uint64_t seed,
                         double class_sampling_ratio) {
  if (!(class_sampling_ratio > 0.0 && class_sampling_ratio < 1.0))
    throw ConfigError("extract_patches: class_sampling_ratio must lie in (0, 1)");
  PatchSet set;
  set.split = split;
  const int h = patch_margin(config.patch_size);
  const int per_case = split == Split::kTrain ? config.train_patches_per_case
                                              : config.test_patches_per_case;

  std::size_t fg_count = 0;
  for (const CaseImage& img : cases) {
    if (img.split != split) continue;
    // Valid centers keep the whole patch inside the image.
    std::vector<std::pair<int, int>> fg_centers, bg_centers, all_centers;
    for (int y = h; y < img.size - h; ++y)
      for (int x = h; x < img.size - h; ++x) {
        bool fg = img.mask[static_cast<std::size_t>(y) * img.size + x] != 0;
        (fg ? fg_centers : bg_centers).emplace_back(x, y);
        all_centers.emplace_back(x, y);
      }

    std::mt19937_64 rng(derive_seed(seed, 0x2000 + static_cast<std::uint64_t>(img.case_id)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    if (split == Split::kTrain && (fg_centers.empty() || bg_centers.empty())) {
      set.warnings.push_back("case " + std::to_string(img.case_id) + ": no valid " +
                             (fg_centers.empty() ? "foreground" : "background") +
                             " centers; case skipped");
      continue;
    }

    for (int k = 0; k < per_case; ++k) {
      std::pair<int, int> center;
      if (split == Split::kTrain) {
        bool want_fg = unit(rng) < class_sampling_ratio;
        const auto& pool = want_fg ? fg_centers : bg_centers;
        center = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      } else {
        center =
            all_centers[std::uniform_int_distribution<std::size_t>(0, all_centers.size() - 1)(
                rng)];
      }
      Sample s;
      s.case_id = img.case_id;
      s.cx = center.first;
      s.cy = center.second;
      s.label = img.mask[static_cast<std::size_t>(s.cy) * img.size + s.cx] != 0 ? 1 : 0;
      s.patch = cut_patch(img, s.cx, s.cy, config.patch_size);
      fg_count += static_cast<std::size_t>(s.label);
      set.samples.push_back(std::move(s));
    }
  }
  if (!set.samples.empty())
    set.fg_ratio = static_cast<double>(fg_count) / static_cast<double>(set.samples.size());
  return set;
}

Dataset generate_dataset(const SynthConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;
  ds.cases = generate_images(config, &ds.norm_mean, &ds.norm_std);
  ds.train = extract_patches(ds.cases, Split::kTrain, config,
                             derive_seed(config.seed, "train-patches"),
                             config.class_sampling_ratio);
  ds.test = extract_patches(ds.cases, Split::kTest, config,
                            derive_seed(config.seed, "test-patches"),
                            config.class_sampling_ratio);
  return ds;
}

std::vector<int> train_case_order(const Dataset& dataset, std::uint64_t seed) {
  std::vector<int> ids;
  for (const CaseImage& c : dataset.cases)
    if (c.split == Split::kTrain) ids.push_back(c.case_id);
  std::mt19937_64 rng(derive_seed(seed, "subsample-order"));
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

std::vector<int> select_train_cases(const Dataset& dataset, double fraction,
                                    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("subsample: fraction must lie in (0, 1]");
  std::vector<int> order = train_case_order(dataset, seed);
  std::size_t keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(order.size())));
  if (keep == 0) throw ConfigError("subsample: fraction yields zero cases");
  order.resize(std::min(keep, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed) {
  std::vector<int> keep = select_train_cases(dataset, fraction, seed);
  Dataset out;
  out.config = dataset.config;
  out.norm_mean = dataset.norm_mean;
  out.norm_std = dataset.norm_std;
  auto kept = [&keep](int id) { return std::binary_search(keep.begin(), keep.end(), id); };
  for (const CaseImage& c : dataset.cases)
    if (c.split == Split::kTest || kept(c.case_id)) out.cases.push_back(c);
  out.train.split = Split::kTrain;
  out.train.fraction = fraction;
  std::size_t fg = 0;
  for (const Sample& s : dataset.train.samples)
    if (kept(s.case_id)) {
      fg += static_cast<std::size_t>(s.label);
      out.train.samples.push_back(s);
    }
  if (!out.train.samples.empty())
    out.train.fg_ratio =
        static_cast<double>(fg) / static_cast<double>(out.train.samples.size());
  out.test = dataset.test;
  return out;
}

}  // namespace asymseg
