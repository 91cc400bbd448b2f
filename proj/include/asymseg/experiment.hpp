#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "asymseg/analysis.hpp"
#include "asymseg/io.hpp"
#include "asymseg/synth.hpp"
#include "asymseg/train.hpp"

namespace asymseg {

struct AnalysisConfig {
  bool emit_joint_histograms = true;
};

// Full pipeline configuration: data generation, model, training and
// analysis options plus the global seed the section seeds derive from.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  SynthConfig data;
  ModelConfig model;
  TrainConfig train;
  AnalysisConfig analysis;
  std::string out_dir;
  std::string preset;  // informational; set when a preset was applied

  // Derives section seeds from the global seed and the model input width
  // from the patch size.
  void resolve();
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Strict parse: unknown keys anywhere are rejected. Section seeds left out
// of the document are derived from the global seed.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Preset names mirror the published method rows (lowercased, hyphenated).
const std::vector<std::string>& preset_names();
void apply_preset(ExperimentConfig& config, const std::string& name);

// Flattened "path=value" lines of the resolved config with the
// fraction/seed fields stripped; runs of one sweep must agree on it.
std::string config_key(const ExperimentConfig& config);

// ---- in-memory pipeline ----------------------------------------------------

struct RunOutcome {
  TrainedModel model;
  EvalReport train_eval;  // over the cases the model actually trained on
  EvalReport test_eval;
  ShiftReport shift;
  std::vector<std::string> warnings;
};

Dataset build_dataset(const ExperimentConfig& config);
// Train + dense evaluation + logit analysis. Checks that the dataset matches
// the config's data section.
RunOutcome run_pipeline(const Dataset& dataset, const ExperimentConfig& config);

RunSummary summarize_run(const ExperimentConfig& config, const RunOutcome& outcome);

// ---- report payloads --------------------------------------------------------

nlohmann::json shift_json(const ShiftReport& report);
nlohmann::json histogram_json(const ShiftReport& report, bool joint);
std::string metrics_summary_csv(const std::vector<std::pair<std::string, EvalReport>>& rows);
std::string metrics_per_case_csv(const std::string& split, const EvalReport& report);
std::string runs_csv(const std::vector<RunSummary>& runs);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// ---- subcommand backends -----------------------------------------------------
// Each writes its artifacts under `out_dir` and throws on failure; the CLI
// maps exception types to exit codes.

void cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out_dir);
void cmd_train(const ExperimentConfig& config, const std::filesystem::path& dataset_file,
               const std::filesystem::path& out_dir);
void cmd_evaluate(const std::filesystem::path& model_file,
                  const std::filesystem::path& dataset_file, const std::string& split,
                  const std::filesystem::path& out_dir);
void cmd_analyze(const std::vector<std::pair<std::filesystem::path, std::filesystem::path>>&
                     model_dataset_pairs,
                 const std::filesystem::path& out_dir, bool joint_histograms);

struct SweepRequest {
  std::vector<std::string> presets;
  std::vector<double> fractions;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
};
void cmd_sweep(const ExperimentConfig& base, const SweepRequest& request,
               const std::filesystem::path& out_dir);

}  // namespace asymseg
