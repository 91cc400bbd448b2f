#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asymseg/model.hpp"
#include "asymseg/synth.hpp"
#include "asymseg/train.hpp"

namespace asymseg {

// Final-layer activations of one sample: z0 = background logit,
// z1 = foreground logit.
struct LogitRecord {
  double z0 = 0.0;
  double z1 = 0.0;
  int true_class = 0;
  Split split = Split::kTrain;
  int case_id = 0;
};

// Fixed-bin histogram: width 0.5 over [-20, 20] plus an underflow and an
// overflow bin, so outputs stay diffable across runs.
struct LogitHistogram {
  static constexpr double kLo = -20.0;
  static constexpr double kHi = 20.0;
  static constexpr double kWidth = 0.5;
  static constexpr int kInnerBins = 80;
  static constexpr int kBins = kInnerBins + 2;

  std::array<std::int64_t, kBins> counts{};

  static int bin_of(double v);
  void add(double v) { ++counts[static_cast<std::size_t>(bin_of(v))]; }
  std::int64_t total() const;
};

struct LogitGroup {
  std::size_t count = 0;
  double sum_true_logit = 0.0;
  LogitHistogram z0;
  LogitHistogram z1;
  LogitHistogram true_logit;
  // Joint (z0, z1) counts, z0-bin major; same bin spec on both axes.
  std::vector<std::int64_t> joint = std::vector<std::int64_t>(
      static_cast<std::size_t>(LogitHistogram::kBins) * LogitHistogram::kBins, 0);

  bool defined() const { return count > 0; }
  double mean_true_logit() const;
};

// Per-(class, split) summary of the true-class logit plus the test-train
// mean shift delta = |mean_test| - |mean_train| per class. The scalar uses
// each sample's true-class logit; the joint histograms keep the raw 2-D
// picture available.
struct ShiftReport {
  // groups[class][split]; split index 0 = train, 1 = test
  std::array<std::array<LogitGroup, 2>, 2> groups;
  std::array<std::optional<double>, 2> delta;

  const LogitGroup& group(int cls, Split split) const {
    return groups[static_cast<std::size_t>(cls)][split == Split::kTest ? 1 : 0];
  }
};

// One record per sample across both splits; inference only.
std::vector<LogitRecord> collect_logits(const DenseNet& net,
                                        const std::vector<Sample>& train_samples,
                                        const std::vector<Sample>& test_samples);

// Order-invariant aggregation of records into the shift report. Empty
// groups yield undefined means/deltas rather than an abort.
ShiftReport shift_statistic(const std::vector<LogitRecord>& records);

struct MetricsReport {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> sensitivity;  // tp / (tp + fn)
  std::optional<double> precision;    // tp / (tp + fp)
  std::optional<double> dsc;          // 2tp / (2tp + fp + fn)

  static MetricsReport from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                   std::int64_t tn);
};

// Confusion counts over equal-length binary label sequences.
MetricsReport segmentation_metrics(const std::vector<int>& predicted,
                                   const std::vector<int>& truth);

// Harmonic combination of the two rates.
double dsc_from_rates(double sensitivity, double precision);

// ---- dense per-case evaluation -------------------------------------------

struct CaseMetrics {
  int case_id = 0;
  MetricsReport metrics;
};

struct EvalReport {
  std::vector<CaseMetrics> per_case;
  // Dataset-level rates: mean of the defined per-case values.
  std::optional<double> dsc, sensitivity, precision;
  MetricsReport pooled;  // counts pooled over all pixels, for reference
};

// Slides the classifier over every valid patch center of each listed case
// and scores the predicted mask against ground truth.
EvalReport evaluate_cases(const DenseNet& net, const Dataset& dataset,
                          const std::vector<int>& case_ids, int patch_size);
EvalReport evaluate_split(const DenseNet& net, const Dataset& dataset, Split split,
                          int patch_size);

// ---- fraction sweep -------------------------------------------------------

struct RunSummary {
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::string preset;
  double train_dsc = 0.0;
  double test_dsc = 0.0;
  double test_sensitivity = 0.0;
  double test_precision = 0.0;
  std::optional<double> delta_fg;
  std::optional<double> delta_bg;
  // Resolved configuration with fraction and seed stripped; all runs of one
  // sweep must agree on it.
  std::string config_key;
};

struct SweepRow {
  double fraction = 1.0;
  std::size_t n_seeds = 0;
  double train_dsc = 0.0;
  double test_dsc = 0.0;
  double test_sensitivity = 0.0;
  double test_precision = 0.0;
  std::optional<double> delta_fg;
  std::optional<double> delta_bg;
};

// One row per fraction, medians over seeds, ordered by fraction ascending.
// ContractError naming the differing fields when configs are inconsistent.
std::vector<SweepRow> fraction_sweep_report(const std::vector<RunSummary>& runs);

double median(std::vector<double> values);

}  // namespace asymseg
