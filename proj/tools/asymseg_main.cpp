#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "asymseg/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using asymseg::ExperimentConfig;

// Exit codes; every failure prints one machine-parsable line to stderr.
constexpr int kExitContract = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitFingerprint = 4;
constexpr int kExitIo = 5;

struct CommonOpts {
  std::string config_file;
  std::string out;
  std::string preset;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double fraction = 0.0;
  bool fraction_set = false;

  // per-loss overrides
  double margin = -1.0, gamma = -1.0, epsilon = -1.0, magnitude = -1.0;
  double mixup_alpha = -1.0, mixup_margin = -1.0, fg_sampling = -1.0;
};

void add_common_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file, "experiment config file (JSON)");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--seed", opts.seed, "global seed")->each([&](const std::string&) {
    opts.seed_set = true;
  });
  cmd->add_option("--preset", opts.preset, "published method row, lowercased-hyphenated");
  cmd->add_option("--fraction", opts.fraction, "training data fraction in (0, 1]")
      ->each([&](const std::string&) { opts.fraction_set = true; });
  cmd->add_option("--margin", opts.margin, "logit margin");
  cmd->add_option("--gamma", opts.gamma, "focal attenuation strength");
  cmd->add_option("--epsilon", opts.epsilon, "adversarial search radius");
  cmd->add_option("--magnitude", opts.magnitude, "adversarial step length");
  cmd->add_option("--mixup-alpha", opts.mixup_alpha, "Beta(alpha, alpha) parameter");
  cmd->add_option("--mixup-margin", opts.mixup_margin, "mixing-coefficient margin");
  cmd->add_option("--fg-sampling", opts.fg_sampling, "foreground patch sampling ratio");
}

// File config first, then preset, then individual flag overrides.
ExperimentConfig resolve_config(const CommonOpts& opts) {
  ExperimentConfig cfg;
  if (!opts.config_file.empty()) {
    nlohmann::json j = nlohmann::json::parse(asymseg::read_text_file(opts.config_file));
    cfg = asymseg::experiment_config_from_json(j);
  } else {
    cfg.resolve();
  }
  if (!opts.preset.empty()) asymseg::apply_preset(cfg, opts.preset);
  if (opts.seed_set) {
    cfg.seed = opts.seed;
    cfg.resolve();
  }
  if (opts.fraction_set) cfg.train.data_fraction = opts.fraction;
  if (opts.margin >= 0.0) cfg.train.loss.margin = opts.margin;
  if (opts.gamma >= 0.0) cfg.train.loss.gamma = opts.gamma;
  if (opts.epsilon >= 0.0) cfg.train.loss.epsilon = opts.epsilon;
  if (opts.magnitude >= 0.0) cfg.train.loss.magnitude = opts.magnitude;
  if (opts.mixup_alpha >= 0.0) cfg.train.loss.mixup_alpha = opts.mixup_alpha;
  if (opts.mixup_margin >= 0.0) cfg.train.loss.mixup_margin = opts.mixup_margin;
  if (opts.fg_sampling >= 0.0) cfg.train.class_sampling_ratio = opts.fg_sampling;
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  return cfg;
}

// --out, else config's out_dir, else ASYMSEG_OUT_ROOT, else cwd.
fs::path output_dir(const ExperimentConfig& cfg, const std::string& sub) {
  if (!cfg.out_dir.empty()) return fs::path(cfg.out_dir);
  if (const char* root = std::getenv("ASYMSEG_OUT_ROOT")) return fs::path(root) / sub;
  return fs::path(sub);
}

int run(int argc, char** argv) {
  CLI::App app{"synthetic imbalanced-segmentation training and logit-shift analysis"};
  app.require_subcommand(1);

  CommonOpts gen_opts, train_opts, sweep_opts;
  std::string train_dataset;
  std::string eval_model, eval_dataset, eval_split = "test", eval_out;
  std::vector<std::string> analyze_models, analyze_datasets;
  std::string analyze_out;
  bool analyze_no_joint = false;
  std::string sweep_presets = "vanilla-ce";
  std::string sweep_fractions = "1.0";
  std::string sweep_seeds = "1";
  int sweep_jobs = 1;

  CLI::App* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  add_common_options(gen, gen_opts);

  CLI::App* train = app.add_subcommand("train", "train one configuration on a dataset");
  add_common_options(train, train_opts);
  train->add_option("--dataset", train_dataset, "dataset container")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "segmentation metrics for a model");
  evaluate->add_option("--model", eval_model, "model container")->required();
  evaluate->add_option("--dataset", eval_dataset, "dataset container")->required();
  evaluate->add_option("--split", eval_split, "train or test");
  evaluate->add_option("--out", eval_out, "output directory")->required();

  CLI::App* analyze = app.add_subcommand("analyze", "logit shift report and sweep tables");
  analyze->add_option("--model", analyze_models, "model container (repeatable)")->required();
  analyze->add_option("--dataset", analyze_datasets, "dataset container (repeatable)")
      ->required();
  analyze->add_option("--out", analyze_out, "output directory")->required();
  analyze->add_flag("--no-joint-histograms", analyze_no_joint,
                    "skip the 2-D logit histograms");

  CLI::App* sweep = app.add_subcommand("sweep", "grid of presets x fractions x seeds");
  add_common_options(sweep, sweep_opts);
  sweep->add_option("--presets", sweep_presets, "comma-separated preset list");
  sweep->add_option("--fractions", sweep_fractions, "comma-separated fraction list");
  sweep->add_option("--seeds", sweep_seeds, "comma-separated seed list");
  sweep->add_option("--jobs", sweep_jobs, "parallel jobs");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    ExperimentConfig cfg = resolve_config(gen_opts);
    asymseg::cmd_generate(cfg, output_dir(cfg, "dataset"));
  } else if (train->parsed()) {
    ExperimentConfig cfg = resolve_config(train_opts);
    asymseg::cmd_train(cfg, train_dataset, output_dir(cfg, "run"));
  } else if (evaluate->parsed()) {
    asymseg::cmd_evaluate(eval_model, eval_dataset, eval_split, eval_out);
  } else if (analyze->parsed()) {
    if (analyze_datasets.size() == 1 && analyze_models.size() > 1)
      analyze_datasets.assign(analyze_models.size(), analyze_datasets.front());
    if (analyze_models.size() != analyze_datasets.size())
      throw asymseg::ConfigError("analyze: need one dataset per model (or a single shared one)");
    std::vector<std::pair<fs::path, fs::path>> pairs;
    for (std::size_t i = 0; i < analyze_models.size(); ++i)
      pairs.emplace_back(analyze_models[i], analyze_datasets[i]);
    asymseg::cmd_analyze(pairs, analyze_out, !analyze_no_joint);
  } else if (sweep->parsed()) {
    ExperimentConfig cfg = resolve_config(sweep_opts);
    asymseg::SweepRequest request;
    auto split_list = [](const std::string& csv) {
      std::vector<std::string> items;
      std::size_t pos = 0;
      while (pos <= csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        if (comma > pos) items.push_back(csv.substr(pos, comma - pos));
        pos = comma + 1;
      }
      return items;
    };
    request.presets = split_list(sweep_presets);
    for (const std::string& f : split_list(sweep_fractions)) request.fractions.push_back(std::stod(f));
    for (const std::string& s : split_list(sweep_seeds)) request.seeds.push_back(std::stoull(s));
    request.jobs = sweep_jobs;
    asymseg::cmd_sweep(cfg, request, output_dir(cfg, "sweep"));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const asymseg::ConfigError& e) {
    std::fprintf(stderr, "E_CONFIG: %s\n", e.what());
    return kExitConfig;
  } catch (const asymseg::DivergenceError& e) {
    std::fprintf(stderr, "E_DIVERGED: %s\n", e.what());
    return kExitDiverged;
  } catch (const asymseg::FingerprintError& e) {
    std::fprintf(stderr, "E_FINGERPRINT: %s\n", e.what());
    return kExitFingerprint;
  } catch (const asymseg::IoError& e) {
    std::fprintf(stderr, "E_IO: %s\n", e.what());
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "E_CONFIG: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "E_CONTRACT: %s\n", e.what());
    return kExitContract;
  }
}
