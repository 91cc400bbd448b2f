#pragma once

#include <span>
#include <string>
#include <vector>

#include "asymseg/model.hpp"
#include "asymseg/tensor.hpp"

namespace asymseg {

enum class LossVariant {
  kCrossEntropy,
  kSoftDice,
  kLargeMargin,
  kFocal,
  kAdversarial,
  kMixup,
};

std::string variant_name(LossVariant v);
LossVariant variant_from_name(const std::string& name);

// Selection of a loss variant plus its hyper-parameters. `combine` holds the
// families applied jointly in one model; when non-empty it overrides
// `variant` and every member acts in its asymmetric form.
struct LossConfig {
  LossVariant variant = LossVariant::kCrossEntropy;
  bool asymmetric = false;
  int rare_class = 1;

  double margin = 2.0;        // logit-unit bias on the true class
  double gamma = 2.0;         // focal attenuation strength
  double epsilon = 0.1;       // adversarial search radius (max-norm)
  double magnitude = 1.0;     // adversarial step length along the direction
  double mixup_alpha = 0.2;   // Beta(alpha, alpha) for the mixing coefficient
  double mixup_margin = 0.5;  // mixing-coefficient margin for hard relabeling

  // Treat the focal attenuation factor as a constant in the backward pass
  // instead of differentiating through it.
  bool focal_modulator_constant = false;

  std::vector<LossVariant> combine;

  void validate() const;
  bool mixup_active() const;
  bool has_combined(LossVariant v) const;
};

// One minibatch in flattened row-major form. `targets` rows are one-hot
// except where mixing produced soft labels; `labels` always carries the hard
// class used by the asymmetric mechanisms.
struct Batch {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> x;        // n * dim
  std::vector<int> labels;      // n, each 0 or 1
  std::vector<double> targets;  // n * 2
};

std::vector<double> onehot_targets(const std::vector<int>& labels);

// ---- logit-level losses -------------------------------------------------
// All take n x C logits and n x C targets and return the scalar mean loss.

Tensor cross_entropy(Tape& tape, const Tensor& logits, const Tensor& targets);
// Cross-entropy generalized to soft target rows (rows must sum to 1).
Tensor soft_target_cross_entropy(Tape& tape, const Tensor& logits, const Tensor& targets);

// 1 - (2*sum(p_i g_i) + s) / (sum p_i + sum g_i + s) over the batch, with
// p the rare-class probability column and g its indicator.
Tensor soft_dice_loss(Tape& tape, const Tensor& logits, const Tensor& targets,
                      int rare_class, double smooth = 1.0);

// Cross-entropy with every sample's true-class logit shifted down by
// `margin` inside its own softmax.
Tensor large_margin_loss(Tape& tape, const Tensor& logits, const Tensor& targets,
                         double margin);
// The margin shift applied only to samples whose true class is the rare one.
Tensor asym_large_margin_loss(Tape& tape, const Tensor& logits, const Tensor& targets,
                              double margin, int rare_class);

// Cross-entropy attenuated by (1 - p_true)^gamma.
Tensor focal_loss(Tape& tape, const Tensor& logits, const Tensor& targets, double gamma,
                  bool modulator_constant = false);
// Attenuation removed for rare-class samples; others keep the focal term.
Tensor asym_focal_loss(Tape& tape, const Tensor& logits, const Tensor& targets,
                       double gamma, int rare_class, bool modulator_constant = false);

// Rare-class rows get the margin shift without attenuation; remaining rows
// get the attenuated term without shift. Used by the combined model; reduces
// to the single asymmetric variants when one mechanism is disabled
// (margin = 0 or gamma = 0).
Tensor asym_margin_focal_loss(Tape& tape, const Tensor& logits, const Tensor& targets,
                              double margin, double gamma, int rare_class,
                              bool modulator_constant = false);

// ---- input-level losses (take the model) --------------------------------

// Single max-norm gradient-sign step of size epsilon on the cross-entropy,
// taken on a private tape; the result is treated as a constant downstream.
std::vector<double> adversarial_direction(const DenseNet& net, const Batch& batch,
                                          double epsilon);
// Same, with rows of classes other than `rare_class` zeroed.
std::vector<double> asym_adversarial_direction(const DenseNet& net, const Batch& batch,
                                               double epsilon, int rare_class);

// Per-row step of length `magnitude` along `direction` (L2-normalized per
// row); zero rows stay zero.
std::vector<double> scaled_perturbation(const std::vector<double>& direction,
                                        std::size_t n, std::size_t dim, double magnitude);

// CE(x) + CE(x + perturbation). `perturbation` must already be scaled.
Tensor perturbed_cross_entropy(Tape& tape, const DenseNet& net,
                               const DenseNet::Binding& binding, const Batch& batch,
                               const std::vector<double>& perturbation);
// Convenience: computes the (possibly asymmetric) direction internally.
Tensor adversarial_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                        const Batch& batch, double magnitude, double epsilon,
                        bool asymmetric, int rare_class);

// ---- mixup --------------------------------------------------------------

struct MixedSample {
  std::vector<double> x;  // lambda * x_i + (1 - lambda) * x_j
  std::vector<double> y;  // soft label, same convex combination
};

MixedSample mixup_pair(std::span<const double> x_i, std::span<const double> y_i,
                       std::span<const double> x_j, std::span<const double> y_j,
                       double lambda);

// Hard relabeling of a mixed sample. Branch order:
//   y_i  if (lambda > margin and y_i == rare) or y_i == y_j
//   y_j  if (1 - lambda > margin and y_j == rare) or y_i == y_j
//   0    otherwise
int asym_mixup_label(int y_i, int y_j, double lambda, double margin, int rare_class);

// CE on the clean rows plus soft-target CE on the mixed rows. `first` and
// `second` are the paired batches (x_i and x_j rows); one shared lambda.
Tensor mixup_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                  const Batch& first, const Batch& second, double lambda);
// Hard-relabeled variant: mixed rows carry the asym_mixup_label class.
Tensor asym_mixup_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                       const Batch& first, const Batch& second, double lambda,
                       double mixup_margin, int rare_class);

// ---- combined model ------------------------------------------------------

// Joint loss over an already mixup-transformed batch: margin/focal applied
// per `config.combine`, plus the perturbed CE term when the adversarial
// family is active.
Tensor combined_asym_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                          const Batch& batch, const LossConfig& config);
Tensor combined_asym_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                          const Batch& batch, const LossConfig& config,
                          const std::vector<double>& perturbation);

// Dispatch for a training step over a batch whose mixup transform (if any)
// already happened. Builds the forward pass internally.
Tensor batch_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                  const Batch& batch, const LossConfig& config);

}  // namespace asymseg
