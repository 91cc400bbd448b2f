#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "asymseg/losses.hpp"
#include "asymseg/model.hpp"
#include "asymseg/synth.hpp"

namespace asymseg {

struct TrainConfig {
  LossConfig loss;
  int epochs = 60;
  int batch_size = 64;
  // Batches drawn (with replacement from the sample pool) per epoch. The
  // optimization budget is the same at every data fraction, the way
  // patch-sampling training works; a smaller pool just repeats sooner.
  int batches_per_epoch = 250;
  double learning_rate = 0.1;
  double lr_decay = 1.0;  // multiplicative, per epoch
  double momentum = 0.0;
  // Fraction of each batch replaced by mixed samples when mixup is active.
  double mixup_fraction = 0.3;
  double class_sampling_ratio = 0.5;
  double data_fraction = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainedModel {
  ModelConfig model_config;
  TrainConfig train_config;
  std::vector<double> params;
  std::vector<double> loss_trace;  // mean batch loss per epoch
  std::uint64_t dataset_hash = 0;
  std::uint64_t fingerprint = 0;

  DenseNet network() const { return DenseNet(model_config, params); }
};

// Train cases actually used for a run: the nested fraction subset, seeded by
// the dataset seed so all fractions of one dataset share a prefix order.
std::vector<int> training_case_ids(const Dataset& dataset, const TrainConfig& config);

// Training samples for a run. Reuses the dataset's stored patches when the
// requested sampling ratio matches the dataset's; otherwise re-draws patches
// from the selected cases at the requested ratio (deterministically).
std::vector<Sample> training_samples(const Dataset& dataset, const TrainConfig& config,
                                     std::vector<std::string>* warnings = nullptr);

// Minibatch SGD on the configured loss. Deterministic in (dataset, configs).
// Throws DivergenceError when a batch loss turns non-finite.
TrainedModel train_model(const Dataset& dataset, const ModelConfig& model_config,
                         const TrainConfig& train_config);

struct Prediction {
  std::vector<double> logits;  // n x 2
  std::vector<int> labels;     // argmax; ties go to background (0)
};

Prediction predict(const DenseNet& net, const std::vector<Sample>& samples);
Prediction predict_matrix(const DenseNet& net, const std::vector<double>& x, std::size_t n);

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& index);

// Replaces floor(fraction * n) rows with within-batch convex combinations.
// Symmetric form keeps the soft labels; asymmetric form applies the hard
// relabeling rule. Each mixed row draws its own lambda ~ Beta(alpha, alpha).
Batch mixup_transform(const Batch& batch, const LossConfig& config, double fraction,
                      std::mt19937_64& rng);

// Combined-model integration: appends floor(fraction * n) hard-relabeled
// mixed rows, keeping every clean row.
Batch mixup_append(const Batch& batch, const LossConfig& config, double fraction,
                   std::mt19937_64& rng);

}  // namespace asymseg
