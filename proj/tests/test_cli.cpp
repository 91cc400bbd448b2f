#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "asymseg/experiment.hpp"
#include "asymseg/rng.hpp"

using namespace asymseg;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_experiment(std::uint64_t seed = 5) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.data.n_train_cases = 5;
  cfg.data.n_test_cases = 2;
  cfg.data.image_size = 36;
  cfg.data.patch_size = 7;
  cfg.data.train_patches_per_case = 40;
  cfg.data.test_patches_per_case = 30;
  cfg.model.hidden_widths = {12, 6};
  cfg.train.epochs = 8;
  cfg.train.batch_size = 32;
  cfg.train.batches_per_epoch = 10;
  cfg.resolve();
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("all published method rows exist as presets") {
  const auto& names = preset_names();
  CHECK(names.size() == 12);
  ExperimentConfig cfg = tiny_experiment();
  for (const std::string& name : names) {
    CHECK_NOTHROW(apply_preset(cfg, name));
    CHECK(cfg.preset == name);
    CHECK_NOTHROW(cfg.train.loss.validate());
  }
  CHECK_THROWS_AS(apply_preset(cfg, "no-such-method"), ConfigError);

  apply_preset(cfg, "vanilla-ce-80-tumor");
  CHECK(cfg.train.class_sampling_ratio == doctest::Approx(0.8));
  apply_preset(cfg, "asymmetric-combination");
  CHECK(cfg.train.loss.combine.size() == 4);
  CHECK(cfg.train.loss.asymmetric);
  apply_preset(cfg, "asymmetric-mixup");
  CHECK(cfg.train.loss.variant == LossVariant::kMixup);
  CHECK(cfg.train.loss.asymmetric);
  CHECK(cfg.train.loss.combine.empty());
}

TEST_CASE("config document parsing is strict") {
  nlohmann::json good = {
      {"seed", 9},
      {"data", {{"n_train_cases", 4}, {"n_test_cases", 2}}},
      {"train", {{"epochs", 3}, {"loss", {{"variant", "focal"}, {"gamma", 3.5}}}}},
  };
  ExperimentConfig cfg = experiment_config_from_json(good);
  CHECK(cfg.seed == 9);
  CHECK(cfg.data.n_train_cases == 4);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.train.loss.variant == LossVariant::kFocal);
  CHECK(cfg.train.loss.gamma == doctest::Approx(3.5));
  // derived pieces
  CHECK(cfg.data.seed == derive_seed(9, "data"));
  CHECK(cfg.train.seed == derive_seed(9, "train"));
  CHECK(cfg.model.input_dim == 81);

  nlohmann::json explicit_seed = good;
  explicit_seed["data"]["seed"] = 1234;
  CHECK(experiment_config_from_json(explicit_seed).data.seed == 1234);

  nlohmann::json bad_top = good;
  bad_top["surprise"] = 1;
  CHECK_THROWS_WITH_AS(experiment_config_from_json(bad_top), doctest::Contains("surprise"),
                       ConfigError);
  nlohmann::json bad_nested = good;
  bad_nested["train"]["optimizer"] = "adam";
  CHECK_THROWS_WITH_AS(experiment_config_from_json(bad_nested), doctest::Contains("optimizer"),
                       ConfigError);
  nlohmann::json bad_loss = good;
  bad_loss["train"]["loss"]["temperature"] = 2.0;
  CHECK_THROWS_WITH_AS(experiment_config_from_json(bad_loss), doctest::Contains("temperature"),
                       ConfigError);

  // config -> json -> config round-trip preserves the resolved settings
  ExperimentConfig base = tiny_experiment();
  apply_preset(base, "asymmetric-focal-loss");
  ExperimentConfig reparsed = experiment_config_from_json(to_json(base));
  CHECK(to_json(reparsed) == to_json(base));
}

TEST_CASE("config key ignores fraction and seed but not the loss") {
  ExperimentConfig a = tiny_experiment(5);
  ExperimentConfig b = tiny_experiment(6);
  b.train.data_fraction = 0.5;
  CHECK(config_key(a) == config_key(b));
  ExperimentConfig c = tiny_experiment(5);
  apply_preset(c, "focal-loss");
  CHECK(config_key(a) != config_key(c));
}

TEST_CASE("pipeline stages write their artifacts") {
  TempDir dir("asymseg_pipeline_test");
  ExperimentConfig cfg = tiny_experiment();

  cmd_generate(cfg, dir.path / "data");
  CHECK(fs::exists(dir.path / "data" / "dataset.bin"));
  CHECK(fs::exists(dir.path / "data" / "manifest.json"));
  nlohmann::json manifest =
      nlohmann::json::parse(read_text_file(dir.path / "data" / "manifest.json"));
  CHECK(manifest.at("n_cases") == 7);

  cmd_train(cfg, dir.path / "data" / "dataset.bin", dir.path / "run");
  CHECK(fs::exists(dir.path / "run" / "model.bin"));
  std::string trace = read_text_file(dir.path / "run" / "loss_trace.csv");
  CHECK(trace.rfind("epoch,mean_loss\n", 0) == 0);

  cmd_evaluate(dir.path / "run" / "model.bin", dir.path / "data" / "dataset.bin", "test",
               dir.path / "eval");
  std::string summary = read_text_file(dir.path / "eval" / "metrics_summary.csv");
  CHECK(summary.rfind("split,DSC,SENS,PRC\n", 0) == 0);
  std::string per_case = read_text_file(dir.path / "eval" / "metrics_per_case.csv");
  CHECK(per_case.rfind("case_id,split,DSC,SENS,PRC\n", 0) == 0);
  CHECK(std::count(per_case.begin(), per_case.end(), '\n') == 1 + 2);  // header + test cases

  cmd_analyze({{dir.path / "run" / "model.bin", dir.path / "data" / "dataset.bin"}},
              dir.path / "report", true);
  nlohmann::json shift =
      nlohmann::json::parse(read_text_file(dir.path / "report" / "shift_0.json"));
  CHECK(shift.at("schema_version") == 1);
  CHECK(shift.at("groups").size() == 4);
  CHECK(shift.at("delta").contains("foreground"));
  nlohmann::json hist =
      nlohmann::json::parse(read_text_file(dir.path / "report" / "histograms_0.json"));
  CHECK(hist.at("bin_spec").at("n_bins") == 82);
  for (const auto& [name, group] : hist.at("groups").items()) {
    (void)name;
    CHECK(group.at("z0").size() == 82);
    CHECK(group.at("joint_z0_z1").size() == 82);
  }
  std::string sweep = read_text_file(dir.path / "report" / "sweep.csv");
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 2);  // header + one fraction row
}

TEST_CASE("training refuses a dataset that does not match the config") {
  TempDir dir("asymseg_fingerprint_test");
  ExperimentConfig cfg = tiny_experiment();
  cmd_generate(cfg, dir.path / "data");
  ExperimentConfig other = cfg;
  other.data.n_train_cases = 6;
  CHECK_THROWS_AS(cmd_train(other, dir.path / "data" / "dataset.bin", dir.path / "run"),
                  FingerprintError);
}

TEST_CASE("plain CE and a zero-margin run produce identical metrics") {
  ExperimentConfig ce = tiny_experiment();
  ce.train.epochs = 5;
  Dataset ds = build_dataset(ce);

  ExperimentConfig margin0 = ce;
  margin0.train.loss.variant = LossVariant::kLargeMargin;
  margin0.train.loss.margin = 0.0;

  RunOutcome a = run_pipeline(ds, ce);
  RunOutcome b = run_pipeline(ds, margin0);
  CHECK(std::abs(*a.test_eval.dsc - *b.test_eval.dsc) <= 1e-9);
  CHECK(std::abs(*a.test_eval.sensitivity - *b.test_eval.sensitivity) <= 1e-9);
  CHECK(std::abs(*a.test_eval.precision - *b.test_eval.precision) <= 1e-9);
}

TEST_CASE("sweep emits per-run directories and tables") {
  TempDir dir("asymseg_sweep_test");
  ExperimentConfig cfg = tiny_experiment();
  cfg.train.epochs = 3;
  SweepRequest request;
  request.presets = {"vanilla-ce"};
  request.fractions = {0.5, 1.0};
  request.seeds = {1, 2};
  request.jobs = 2;
  cmd_sweep(cfg, request, dir.path);

  CHECK(fs::exists(dir.path / "vanilla-ce" / "fraction_0.5" / "seed_1" / "model.bin"));
  CHECK(fs::exists(dir.path / "vanilla-ce" / "fraction_1" / "seed_2" / "shift.json"));
  std::string runs = read_text_file(dir.path / "runs.csv");
  CHECK(std::count(runs.begin(), runs.end(), '\n') == 1 + 4);
  std::string sweep = read_text_file(dir.path / "sweep_vanilla-ce.csv");
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 1 + 2);
  CHECK(sweep.rfind("fraction,n_seeds,", 0) == 0);

  SweepRequest bad = request;
  bad.presets = {"nope"};
  CHECK_THROWS_AS(cmd_sweep(cfg, bad, dir.path), ConfigError);
}

TEST_CASE("repeated pipeline runs are byte-identical") {
  TempDir dir("asymseg_determinism_unit");
  ExperimentConfig cfg = tiny_experiment();
  cfg.train.epochs = 4;

  for (const char* run : {"one", "two"}) {
    fs::path base = dir.path / run;
    cmd_generate(cfg, base / "data");
    cmd_train(cfg, base / "data" / "dataset.bin", base / "run");
    cmd_evaluate(base / "run" / "model.bin", base / "data" / "dataset.bin", "test",
                 base / "eval");
    cmd_analyze({{base / "run" / "model.bin", base / "data" / "dataset.bin"}}, base / "report",
                true);
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir.path / "one")) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), dir.path / "one");
    CHECK(read_text_file(entry.path()) == read_text_file(dir.path / "two" / rel));
    ++compared;
  }
  CHECK(compared >= 9);
}
