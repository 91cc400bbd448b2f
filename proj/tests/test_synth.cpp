#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "asymseg/io.hpp"
#include "asymseg/synth.hpp"

using namespace asymseg;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.seed = 99;
  c.n_train_cases = 6;
  c.n_test_cases = 3;
  c.image_size = 36;
  c.patch_size = 7;
  c.train_patches_per_case = 60;
  c.test_patches_per_case = 80;
  return c;
}

std::string file_bytes(const std::filesystem::path& p) { return read_text_file(p); }

// Flood fill within `allowed`, 4-connectivity.
std::size_t reachable_count(const std::set<std::pair<int, int>>& allowed,
                            std::pair<int, int> start) {
  std::set<std::pair<int, int>> seen;
  std::vector<std::pair<int, int>> stack{start};
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    stack.pop_back();
    if (!allowed.count({x, y}) || seen.count({x, y})) continue;
    seen.insert({x, y});
    stack.push_back({x + 1, y});
    stack.push_back({x - 1, y});
    stack.push_back({x, y + 1});
    stack.push_back({x, y - 1});
  }
  return seen.size();
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  SynthConfig c = small_config();
  Dataset a = generate_dataset(c);
  Dataset b = generate_dataset(c);
  REQUIRE(a.cases.size() == b.cases.size());
  for (std::size_t i = 0; i < a.cases.size(); ++i) {
    CHECK(a.cases[i].pixels == b.cases[i].pixels);
    CHECK(a.cases[i].mask == b.cases[i].mask);
  }
  REQUIRE(a.train.samples.size() == b.train.samples.size());
  for (std::size_t i = 0; i < a.train.samples.size(); ++i)
    CHECK(a.train.samples[i].patch == b.train.samples[i].patch);

  c.seed = 100;
  Dataset other = generate_dataset(c);
  CHECK(other.cases[0].pixels != a.cases[0].pixels);
}

TEST_CASE("foreground pixel fraction stays in the imbalanced band") {
  SynthConfig c;  // default sizes
  c.seed = 7;
  c.n_train_cases = 80;
  c.n_test_cases = 20;
  std::vector<CaseImage> cases = generate_images(c);
  REQUIRE(cases.size() == 100);
  std::size_t fg = 0, total = 0;
  for (const CaseImage& img : cases) {
    for (std::uint8_t v : img.mask) fg += v;
    total += img.mask.size();
  }
  double fraction = static_cast<double>(fg) / static_cast<double>(total);
  CHECK(fraction >= 0.02);
  CHECK(fraction <= 0.10);
}

TEST_CASE("every blob rasterizes to one connected region") {
  SynthConfig c = small_config();
  c.n_train_cases = 20;
  std::vector<CaseImage> cases = generate_images(c);
  for (const CaseImage& img : cases) {
    for (const Blob& blob : img.blobs) {
      std::set<std::pair<int, int>> pixels;
      double ca = std::cos(blob.angle), sa = std::sin(blob.angle);
      for (int y = 0; y < img.size; ++y)
        for (int x = 0; x < img.size; ++x) {
          double dx = x - blob.cx, dy = y - blob.cy;
          double u = (dx * ca + dy * sa) / blob.a;
          double v = (-dx * sa + dy * ca) / blob.b;
          if (u * u + v * v <= 1.0) {
            pixels.insert({x, y});
            CHECK(img.mask[static_cast<std::size_t>(y) * img.size + x] == 1);
          }
        }
      REQUIRE(!pixels.empty());
      CHECK(reachable_count(pixels, *pixels.begin()) == pixels.size());
    }
  }
}

TEST_CASE("training pixels are standardized") {
  Dataset ds = generate_dataset(small_config());
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  for (const CaseImage& img : ds.cases) {
    if (img.split != Split::kTrain) continue;
    for (double v : img.pixels) {
      sum += v;
      sum_sq += v * v;
    }
    n += img.pixels.size();
  }
  double mean = sum / static_cast<double>(n);
  double var = sum_sq / static_cast<double>(n) - mean * mean;
  CHECK(std::abs(mean) <= 1e-6);
  CHECK(std::abs(var - 1.0) <= 1e-3);
}

TEST_CASE("class sampling ratio is realized in training patches") {
  SynthConfig c;  // defaults: 50 cases x 400 patches = 2e4
  c.seed = 21;
  Dataset ds = generate_dataset(c);
  REQUIRE(ds.train.samples.size() >= 10000);
  CHECK(ds.train.fg_ratio == doctest::Approx(0.5).epsilon(0.04));
  CHECK(std::abs(ds.train.fg_ratio - 0.5) <= 0.02);

  PatchSet heavier = extract_patches(ds.cases, Split::kTrain, c, 1234, 0.8);
  CHECK(std::abs(heavier.fg_ratio - 0.8) <= 0.02);
}

TEST_CASE("test patches keep the natural imbalance") {
  SynthConfig c;
  c.seed = 22;
  Dataset ds = generate_dataset(c);
  // pixel-level foreground fraction over valid centers of the test cases
  int h = patch_margin(c.patch_size);
  std::size_t fg = 0, total = 0;
  for (const CaseImage& img : ds.cases) {
    if (img.split != Split::kTest) continue;
    for (int y = h; y < img.size - h; ++y)
      for (int x = h; x < img.size - h; ++x) {
        fg += img.mask[static_cast<std::size_t>(y) * img.size + x];
        ++total;
      }
  }
  double pixel_fraction = static_cast<double>(fg) / static_cast<double>(total);
  CHECK(std::abs(ds.test.fg_ratio - pixel_fraction) <= 0.02);
  CHECK(ds.test.fg_ratio <= 0.15);  // far below the train sampling weight
}

TEST_CASE("train and test case sets are disjoint") {
  Dataset ds = generate_dataset(small_config());
  std::set<int> train_ids, test_ids;
  for (const CaseImage& img : ds.cases)
    (img.split == Split::kTrain ? train_ids : test_ids).insert(img.case_id);
  for (int id : train_ids) CHECK(!test_ids.count(id));
  for (const Sample& s : ds.train.samples) CHECK(train_ids.count(s.case_id));
  for (const Sample& s : ds.test.samples) CHECK(test_ids.count(s.case_id));
}

TEST_CASE("subsampling keeps whole cases and nests across fractions") {
  Dataset ds = generate_dataset(small_config());

  Dataset full = subsample(ds, 1.0, ds.config.seed);
  CHECK(full.train.samples.size() == ds.train.samples.size());
  CHECK(full.cases.size() == ds.cases.size());

  std::vector<double> fractions{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<std::set<int>> kept;
  for (double f : fractions) {
    auto ids = select_train_cases(ds, f, ds.config.seed);
    kept.emplace_back(ids.begin(), ids.end());
    std::size_t expected =
        static_cast<std::size_t>(std::ceil(f * ds.config.n_train_cases));
    CHECK(ids.size() == expected);
  }
  for (std::size_t i = 0; i + 1 < kept.size(); ++i)
    for (int id : kept[i]) CHECK(kept[i + 1].count(id));

  Dataset sub = subsample(ds, 0.4, ds.config.seed);
  std::set<int> sub_ids(kept[1].begin(), kept[1].end());
  for (const Sample& s : sub.train.samples) CHECK(sub_ids.count(s.case_id));
  CHECK(sub.test.samples.size() == ds.test.samples.size());

  CHECK_THROWS_AS(subsample(ds, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(subsample(ds, -0.5, 1), ConfigError);
}

TEST_CASE("the paper-scale case-count rule") {
  // ceil(0.05 * 190) = 10 whole cases
  SynthConfig c;
  c.seed = 3;
  c.n_train_cases = 190;
  c.n_test_cases = 1;
  c.image_size = 24;
  c.patch_size = 5;
  c.blobs.min_radius = 2.0;
  c.blobs.max_radius = 4.0;
  c.train_patches_per_case = 1;
  c.test_patches_per_case = 1;
  Dataset ds = generate_dataset(c);
  CHECK(select_train_cases(ds, 0.05, ds.config.seed).size() == 10);
  CHECK(select_train_cases(ds, 0.10, ds.config.seed).size() == 19);
  CHECK(select_train_cases(ds, 0.20, ds.config.seed).size() == 38);
  CHECK(select_train_cases(ds, 0.50, ds.config.seed).size() == 95);
  CHECK(select_train_cases(ds, 1.00, ds.config.seed).size() == 190);
}

TEST_CASE("dataset container round-trips bit-exactly") {
  namespace fs = std::filesystem;
  Dataset ds = generate_dataset(small_config());
  fs::path dir = fs::temp_directory_path() / "asymseg_test_io";
  fs::create_directories(dir);
  fs::path file = dir / "ds.bin";
  save_dataset(ds, file);
  Dataset loaded = load_dataset(file);

  CHECK(loaded.norm_mean == ds.norm_mean);
  CHECK(loaded.norm_std == ds.norm_std);
  REQUIRE(loaded.cases.size() == ds.cases.size());
  for (std::size_t i = 0; i < ds.cases.size(); ++i) {
    CHECK(loaded.cases[i].case_id == ds.cases[i].case_id);
    CHECK(loaded.cases[i].pixels == ds.cases[i].pixels);
    CHECK(loaded.cases[i].mask == ds.cases[i].mask);
  }
  REQUIRE(loaded.train.samples.size() == ds.train.samples.size());
  CHECK(loaded.train.fg_ratio == ds.train.fg_ratio);
  for (std::size_t i = 0; i < ds.train.samples.size(); ++i)
    CHECK(loaded.train.samples[i].patch == ds.train.samples[i].patch);

  // re-saving the loaded dataset reproduces the same bytes
  fs::path file2 = dir / "ds2.bin";
  save_dataset(loaded, file2);
  CHECK(file_bytes(file) == file_bytes(file2));
  fs::remove_all(dir);
}

TEST_CASE("manifest hash verifies by recomputation") {
  Dataset ds = generate_dataset(small_config());
  nlohmann::json manifest = dataset_manifest(ds);
  CHECK(manifest.at("schema_version") == 1);
  CHECK(manifest.at("n_cases") == ds.cases.size());
  std::uint64_t stored = manifest.at("config_hash").get<std::uint64_t>();
  SynthConfig parsed = synth_config_from_json(manifest.at("config"));
  CHECK(dataset_config_hash(parsed) == stored);
}

TEST_CASE("cases without usable centers are skipped with a warning") {
  SynthConfig c = small_config();
  // hand-built case with an empty mask: no foreground centers exist
  CaseImage img;
  img.case_id = 0;
  img.split = Split::kTrain;
  img.size = c.image_size;
  img.pixels.assign(static_cast<std::size_t>(c.image_size) * c.image_size, 0.0);
  img.mask.assign(img.pixels.size(), 0);
  PatchSet set = extract_patches({img}, Split::kTrain, c, 5, 0.5);
  CHECK(set.samples.empty());
  REQUIRE(set.warnings.size() == 1);
  CHECK(set.warnings[0].find("case 0") != std::string::npos);
  CHECK(set.warnings[0].find("foreground") != std::string::npos);
}

TEST_CASE("degenerate geometry is rejected") {
  SynthConfig c = small_config();
  c.blobs.max_radius = 40.0;  // diameter exceeds the 36-pixel image
  CHECK_THROWS_AS(c.validate(), ConfigError);

  SynthConfig zero = small_config();
  zero.n_train_cases = 0;
  CHECK_THROWS_AS(zero.validate(), ConfigError);

  SynthConfig tiny = small_config();
  tiny.image_size = 20;  // below 4 * patch_size
  CHECK_THROWS_AS(tiny.validate(), ConfigError);
}
