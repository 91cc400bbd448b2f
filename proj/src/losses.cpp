#include "asymseg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "asymseg/errors.hpp"

namespace asymseg {

std::string variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::kCrossEntropy: return "ce";
    case LossVariant::kSoftDice: return "soft-dice";
    case LossVariant::kLargeMargin: return "large-margin";
    case LossVariant::kFocal: return "focal";
    case LossVariant::kAdversarial: return "adversarial";
    case LossVariant::kMixup: return "mixup";
  }
  throw ContractError("variant_name: unknown variant");
}

LossVariant variant_from_name(const std::string& name) {
  if (name == "ce") return LossVariant::kCrossEntropy;
  if (name == "soft-dice") return LossVariant::kSoftDice;
  if (name == "large-margin") return LossVariant::kLargeMargin;
  if (name == "focal") return LossVariant::kFocal;
  if (name == "adversarial") return LossVariant::kAdversarial;
  if (name == "mixup") return LossVariant::kMixup;
  throw ConfigError("unknown loss variant '" + name + "'");
}

void LossConfig::validate() const {
  if (margin < 0.0) throw ConfigError("loss: margin must be >= 0");
  if (gamma < 0.0) throw ConfigError("loss: gamma must be >= 0");
  if (epsilon < 0.0) throw ConfigError("loss: epsilon must be >= 0");
  if (magnitude < 0.0) throw ConfigError("loss: magnitude must be >= 0");
  if (mixup_alpha <= 0.0) throw ConfigError("loss: mixup_alpha must be > 0");
  if (!(mixup_margin > 0.0 && mixup_margin < 1.0))
    throw ConfigError("loss: mixup_margin must lie in (0, 1)");
  if (rare_class != 0 && rare_class != 1)
    throw ConfigError("loss: rare_class must be 0 or 1");
  for (LossVariant v : combine) {
    if (v == LossVariant::kCrossEntropy || v == LossVariant::kSoftDice)
      throw ConfigError("loss: combine supports large-margin, focal, adversarial, mixup");
    if (std::count(combine.begin(), combine.end(), v) > 1)
      throw ConfigError("loss: duplicate family '" + variant_name(v) + "' in combine");
  }
}

bool LossConfig::mixup_active() const {
  return variant == LossVariant::kMixup || has_combined(LossVariant::kMixup);
}

bool LossConfig::has_combined(LossVariant v) const {
  return std::find(combine.begin(), combine.end(), v) != combine.end();
}

std::vector<double> onehot_targets(const std::vector<int>& labels) {
  std::vector<double> t(labels.size() * 2, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw ContractError("onehot_targets: label " + std::to_string(labels[i]) +
                          " at row " + std::to_string(i));
    t[i * 2 + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return t;
}

namespace {

struct TargetView {
  std::size_t n, c;
  const std::vector<double>* values;
};

TargetView check_pair(const char* op, const Tensor& logits, const Tensor& targets) {
  const Shape& sl = logits.shape();
  const Shape& st = targets.shape();
  if (sl.size() != 2 || sl[1] < 2)
    throw ShapeError(std::string(op) + ": logits must be n x C with C >= 2, got " +
                     shape_str(sl));
  if (st != sl)
    throw ShapeError(std::string(op) + ": targets shape " + shape_str(st) +
                     " vs logits " + shape_str(sl));
  return {sl[0], sl[1], &targets.values()};
}

void require_onehot(const char* op, const TargetView& tv) {
  const auto& t = *tv.values;
  for (std::size_t i = 0; i < tv.n; ++i) {
    int ones = 0;
    bool clean = true;
    for (std::size_t j = 0; j < tv.c; ++j) {
      double v = t[i * tv.c + j];
      if (v == 1.0)
        ++ones;
      else if (v != 0.0)
        clean = false;
    }
    if (ones != 1 || !clean)
      throw ContractError(std::string(op) + ": targets row " + std::to_string(i) +
                          " is not one-hot");
  }
}

void require_soft_rows(const char* op, const TargetView& tv) {
  const auto& t = *tv.values;
  for (std::size_t i = 0; i < tv.n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < tv.c; ++j) {
      double v = t[i * tv.c + j];
      if (v < 0.0 || v > 1.0)
        throw ContractError(std::string(op) + ": target entry out of [0,1] at row " +
                            std::to_string(i));
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw ContractError(std::string(op) + ": targets row " + std::to_string(i) +
                          " sums to " + std::to_string(s));
  }
}

// One-hot mask restricted to rows whose true class is `rare_class`.
std::vector<double> rare_row_mask(const TargetView& tv, int rare_class) {
  const auto& t = *tv.values;
  std::vector<double> mask(t.size(), 0.0);
  std::size_t r = static_cast<std::size_t>(rare_class);
  for (std::size_t i = 0; i < tv.n; ++i)
    if (t[i * tv.c + r] == 1.0) mask[i * tv.c + r] = 1.0;
  return mask;
}

Tensor mean_negative_sum(Tape& tape, const Tensor& summed_terms, std::size_t n) {
  return tape.scale(summed_terms, -1.0 / static_cast<double>(n));
}

int hard_label(std::span<const double> y) {
  if (y.size() != 2 || !((y[0] == 1.0 && y[1] == 0.0) || (y[0] == 0.0 && y[1] == 1.0)))
    throw ContractError("hard label expected as a binary one-hot pair");
  return y[1] == 1.0 ? 1 : 0;
}

void check_batch(const char* op, const Batch& batch, const DenseNet& net) {
  if (batch.n == 0) throw ContractError(std::string(op) + ": empty batch");
  if (batch.dim != net.config().input_dim || batch.x.size() != batch.n * batch.dim)
    throw ShapeError(std::string(op) + ": batch of " + std::to_string(batch.x.size()) +
                     " values vs expected [" + std::to_string(batch.n) + " x " +
                     std::to_string(net.config().input_dim) + "]");
  if (batch.targets.size() != batch.n * 2)
    throw ShapeError(std::string(op) + ": targets size " +
                     std::to_string(batch.targets.size()) + " vs expected " +
                     std::to_string(batch.n * 2));
}

}  // namespace

Tensor cross_entropy(Tape& tape, const Tensor& logits, const Tensor& targets) {
  TargetView tv = check_pair("cross_entropy", logits, targets);
  require_onehot("cross_entropy", tv);
  Tensor ls = tape.log_softmax(logits);
  return mean_negative_sum(tape, tape.sum(tape.mul(targets, ls)), tv.n);
}

Tensor soft_target_cross_entropy(Tape& tape, const Tensor& logits, const Tensor& targets) {
  TargetView tv = check_pair("soft_target_cross_entropy", logits, targets);
  require_soft_rows("soft_target_cross_entropy", tv);
  Tensor ls = tape.log_softmax(logits);
  return mean_negative_sum(tape, tape.sum(tape.mul(targets, ls)), tv.n);
}

Tensor soft_dice_loss(Tape& tape, const Tensor& logits, const Tensor& targets,
                      int rare_class, double smooth) {
  TargetView tv = check_pair("soft_dice_loss", logits, targets);
  require_onehot("soft_dice_loss", tv);
  if (rare_class < 0 || static_cast<std::size_t>(rare_class) >= tv.c)
    throw ConfigError("soft_dice_loss: rare_class out of range");
  if (smooth < 0.0) throw ConfigError("soft_dice_loss: smooth must be >= 0");

  Tensor p = tape.column(tape.softmax(logits), static_cast<std::size_t>(rare_class));
  Tensor g = tape.column(targets, static_cast<std::size_t>(rare_class));
  Tensor s = tape.scalar(smooth);
  Tensor numer = tape.add(tape.scale(tape.sum(tape.mul(p, g)), 2.0), s);
  Tensor denom = tape.add(tape.add(tape.sum(p), tape.sum(g)), s);
  return tape.sub(tape.scalar(1.0), tape.div(numer, denom));
}

Tensor large_margin_loss(Tape& tape, const Tensor& logits, const Tensor& targets,
                         double margin) {
  if (margin < 0.0) throw ConfigError("large_margin_loss: margin must be >= 0");
  TargetView tv = check_pair("large_margin_loss", logits, targets);
  require_onehot("large_margin_loss", tv);
  // Shift the true-class logit down by the margin inside its own softmax.
  Tensor shifted = tape.sub(logits, tape.scale(targets, margin));
  Tensor ls = tape.log_softmax(shifted);
  return mean_negative_sum(tape, tape.sum(tape.mul(targets, ls)), tv.n);
}

Tensor asym_large_margin_loss(Tape& tape, const Tensor& logits, const Tensor& targets,
                              double margin, int rare_class) {
  if (margin < 0.0) throw ConfigError("asym_large_margin_loss: margin must be >= 0");
  if (rare_class != 0 && rare_class != 1)
    throw ConfigError("asym_large_margin_loss: rare_class must be 0 or 1");
  TargetView tv = check_pair("asym_large_margin_loss", logits, targets);
  require_onehot("asym_large_margin_loss", tv);
  Tensor mask = tape.constant(targets.shape(), rare_row_mask(tv, rare_class));
  Tensor shifted = tape.sub(logits, tape.scale(mask, margin));
  Tensor ls = tape.log_softmax(shifted);
  return mean_negative_sum(tape, tape.sum(tape.mul(targets, ls)), tv.n);
}

namespace {

Tensor focal_weight(Tape& tape, const Tensor& logits, double gamma, bool modulator_constant) {
  Tensor p = tape.softmax(logits);
  Tensor base = tape.sub(tape.fill(logits.shape(), 1.0), p);
  if (modulator_constant) {
    // Evaluate the attenuation forward only; no gradient flows through it.
    std::vector<double> w(base.values().size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::pow(base.values()[i], gamma);
    return tape.constant(logits.shape(), std::move(w));
  }
  return tape.pow(base, gamma);
}

}  // namespace

Tensor focal_loss(Tape& tape, const Tensor& logits, const Tensor& targets, double gamma,
                  bool modulator_constant) {
  if (gamma < 0.0) throw ConfigError("focal_loss: gamma must be >= 0");
  TargetView tv = check_pair("focal_loss", logits, targets);
  require_onehot("focal_loss", tv);
  Tensor w = focal_weight(tape, logits, gamma, modulator_constant);
  Tensor ls = tape.log_softmax(logits);
  return mean_negative_sum(tape, tape.sum(tape.mul(tape.mul(w, targets), ls)), tv.n);
}

Tensor asym_focal_loss(Tape& tape, const Tensor& logits, const Tensor& targets,
                       double gamma, int rare_class, bool modulator_constant) {
  if (gamma < 0.0) throw ConfigError("asym_focal_loss: gamma must be >= 0");
  if (rare_class != 0 && rare_class != 1)
    throw ConfigError("asym_focal_loss: rare_class must be 0 or 1");
  TargetView tv = check_pair("asym_focal_loss", logits, targets);
  require_onehot("asym_focal_loss", tv);

  std::vector<double> rare = rare_row_mask(tv, rare_class);
  std::vector<double> rest(targets.values());
  for (std::size_t i = 0; i < rest.size(); ++i) rest[i] -= rare[i];
  Tensor rare_mask = tape.constant(targets.shape(), std::move(rare));
  Tensor rest_mask = tape.constant(targets.shape(), std::move(rest));

  Tensor ls = tape.log_softmax(logits);
  Tensor w = focal_weight(tape, logits, gamma, modulator_constant);
  Tensor plain = tape.sum(tape.mul(rare_mask, ls));
  Tensor attenuated = tape.sum(tape.mul(tape.mul(w, rest_mask), ls));
  return mean_negative_sum(tape, tape.add(plain, attenuated), tv.n);
}

Tensor asym_margin_focal_loss(Tape& tape, const Tensor& logits, const Tensor& targets,
                              double margin, double gamma, int rare_class,
                              bool modulator_constant) {
  if (margin < 0.0) throw ConfigError("asym_margin_focal_loss: margin must be >= 0");
  if (gamma < 0.0) throw ConfigError("asym_margin_focal_loss: gamma must be >= 0");
  if (rare_class != 0 && rare_class != 1)
    throw ConfigError("asym_margin_focal_loss: rare_class must be 0 or 1");
  TargetView tv = check_pair("asym_margin_focal_loss", logits, targets);
  require_onehot("asym_margin_focal_loss", tv);

  std::vector<double> rare = rare_row_mask(tv, rare_class);
  std::vector<double> rest(targets.values());
  for (std::size_t i = 0; i < rest.size(); ++i) rest[i] -= rare[i];
  Tensor rare_mask = tape.constant(targets.shape(), std::move(rare));
  Tensor rest_mask = tape.constant(targets.shape(), std::move(rest));

  // Rare rows: margin-shifted softmax, no attenuation.
  Tensor shifted = tape.sub(logits, tape.scale(rare_mask, margin));
  Tensor rare_term = tape.sum(tape.mul(rare_mask, tape.log_softmax(shifted)));
  // Remaining rows: attenuated, unshifted.
  Tensor w = focal_weight(tape, logits, gamma, modulator_constant);
  Tensor rest_term = tape.sum(tape.mul(tape.mul(w, rest_mask), tape.log_softmax(logits)));
  return mean_negative_sum(tape, tape.add(rare_term, rest_term), tv.n);
}

std::vector<double> adversarial_direction(const DenseNet& net, const Batch& batch,
                                          double epsilon) {
  if (epsilon < 0.0) throw ConfigError("adversarial_direction: epsilon must be >= 0");
  check_batch("adversarial_direction", batch, net);
  if (epsilon == 0.0) return std::vector<double>(batch.x.size(), 0.0);

  Tape tape;
  Tensor x = tape.input({batch.n, batch.dim}, batch.x, /*tracked=*/true);
  DenseNet::Binding binding = net.bind(tape, /*tracked=*/false);
  Tensor z = net.forward(tape, binding, x);
  Tensor y = tape.constant({batch.n, 2}, batch.targets);
  tape.backward(cross_entropy(tape, z, y));

  const auto& g = x.grad();
  std::vector<double> d(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] > 0.0)
      d[i] = epsilon;
    else if (g[i] < 0.0)
      d[i] = -epsilon;
  }
  return d;
}

std::vector<double> asym_adversarial_direction(const DenseNet& net, const Batch& batch,
                                               double epsilon, int rare_class) {
  if (rare_class != 0 && rare_class != 1)
    throw ConfigError("asym_adversarial_direction: rare_class must be 0 or 1");
  if (batch.labels.size() != batch.n)
    throw ContractError("asym_adversarial_direction: labels missing");
  std::vector<double> d = adversarial_direction(net, batch, epsilon);
  for (std::size_t i = 0; i < batch.n; ++i)
    if (batch.labels[i] != rare_class)
      std::fill(d.begin() + static_cast<std::ptrdiff_t>(i * batch.dim),
                d.begin() + static_cast<std::ptrdiff_t>((i + 1) * batch.dim), 0.0);
  return d;
}

std::vector<double> scaled_perturbation(const std::vector<double>& direction,
                                        std::size_t n, std::size_t dim, double magnitude) {
  if (direction.size() != n * dim)
    throw ShapeError("scaled_perturbation: direction size " +
                     std::to_string(direction.size()) + " vs expected " +
                     std::to_string(n * dim));
  std::vector<double> step(direction.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      double v = direction[i * dim + j];
      sq += v * v;
    }
    if (sq == 0.0) continue;  // zero direction keeps the sample unperturbed
    double f = magnitude / std::sqrt(sq);
    for (std::size_t j = 0; j < dim; ++j) step[i * dim + j] = f * direction[i * dim + j];
  }
  return step;
}

Tensor perturbed_cross_entropy(Tape& tape, const DenseNet& net,
                               const DenseNet::Binding& binding, const Batch& batch,
                               const std::vector<double>& perturbation) {
  check_batch("perturbed_cross_entropy", batch, net);
  if (perturbation.size() != batch.x.size())
    throw ShapeError("perturbed_cross_entropy: perturbation size " +
                     std::to_string(perturbation.size()) + " vs input size " +
                     std::to_string(batch.x.size()));
  Tensor y = tape.constant({batch.n, 2}, batch.targets);
  Tensor clean = tape.constant({batch.n, batch.dim}, batch.x);
  Tensor term1 = cross_entropy(tape, net.forward(tape, binding, clean), y);
  std::vector<double> moved = batch.x;
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += perturbation[i];
  Tensor pert = tape.constant({batch.n, batch.dim}, std::move(moved));
  Tensor term2 = cross_entropy(tape, net.forward(tape, binding, pert), y);
  return tape.add(term1, term2);
}

Tensor adversarial_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                        const Batch& batch, double magnitude, double epsilon,
                        bool asymmetric, int rare_class) {
  if (magnitude < 0.0) throw ConfigError("adversarial_loss: magnitude must be >= 0");
  std::vector<double> d = asymmetric
                              ? asym_adversarial_direction(net, batch, epsilon, rare_class)
                              : adversarial_direction(net, batch, epsilon);
  return perturbed_cross_entropy(tape, net, binding, batch,
                                 scaled_perturbation(d, batch.n, batch.dim, magnitude));
}

MixedSample mixup_pair(std::span<const double> x_i, std::span<const double> y_i,
                       std::span<const double> x_j, std::span<const double> y_j,
                       double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ContractError("mixup_pair: lambda must lie in [0, 1]");
  if (x_i.size() != x_j.size() || y_i.size() != y_j.size())
    throw ShapeError("mixup_pair: pair shapes differ (" + std::to_string(x_i.size()) +
                     " vs " + std::to_string(x_j.size()) + ")");
  MixedSample m;
  m.x.resize(x_i.size());
  for (std::size_t k = 0; k < x_i.size(); ++k)
    m.x[k] = lambda * x_i[k] + (1.0 - lambda) * x_j[k];
  m.y.resize(y_i.size());
  for (std::size_t k = 0; k < y_i.size(); ++k)
    m.y[k] = lambda * y_i[k] + (1.0 - lambda) * y_j[k];
  return m;
}

int asym_mixup_label(int y_i, int y_j, double lambda, double margin, int rare_class) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ContractError("asym_mixup_label: lambda must lie in [0, 1]");
  if (!(margin > 0.0 && margin < 1.0))
    throw ConfigError("asym_mixup_label: margin must lie in (0, 1)");
  // First matching branch wins.
  if ((lambda > margin && y_i == rare_class) || y_i == y_j) return y_i;
  if ((1.0 - lambda > margin && y_j == rare_class) || y_i == y_j) return y_j;
  return 0;
}

namespace {

void check_mixup_pair_batches(const Batch& first, const Batch& second) {
  if (first.n != second.n || first.dim != second.dim)
    throw ShapeError("mixup: paired batches differ ([" + std::to_string(first.n) + " x " +
                     std::to_string(first.dim) + "] vs [" + std::to_string(second.n) +
                     " x " + std::to_string(second.dim) + "])");
}

}  // namespace

Tensor mixup_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                  const Batch& first, const Batch& second, double lambda) {
  check_batch("mixup_loss", first, net);
  check_batch("mixup_loss", second, net);
  check_mixup_pair_batches(first, second);
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ContractError("mixup_loss: lambda must lie in [0, 1]");

  Tensor y1 = tape.constant({first.n, 2}, first.targets);
  Tensor x1 = tape.constant({first.n, first.dim}, first.x);
  Tensor clean = cross_entropy(tape, net.forward(tape, binding, x1), y1);

  std::vector<double> xm(first.x.size());
  for (std::size_t i = 0; i < xm.size(); ++i)
    xm[i] = lambda * first.x[i] + (1.0 - lambda) * second.x[i];
  std::vector<double> ym(first.targets.size());
  for (std::size_t i = 0; i < ym.size(); ++i)
    ym[i] = lambda * first.targets[i] + (1.0 - lambda) * second.targets[i];
  Tensor x2 = tape.constant({first.n, first.dim}, std::move(xm));
  Tensor y2 = tape.constant({first.n, 2}, std::move(ym));
  Tensor mixed = soft_target_cross_entropy(tape, net.forward(tape, binding, x2), y2);
  return tape.add(clean, mixed);
}

Tensor asym_mixup_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                       const Batch& first, const Batch& second, double lambda,
                       double mixup_margin, int rare_class) {
  check_batch("asym_mixup_loss", first, net);
  check_batch("asym_mixup_loss", second, net);
  check_mixup_pair_batches(first, second);

  Tensor y1 = tape.constant({first.n, 2}, first.targets);
  Tensor x1 = tape.constant({first.n, first.dim}, first.x);
  Tensor clean = cross_entropy(tape, net.forward(tape, binding, x1), y1);

  std::vector<double> xm(first.x.size());
  for (std::size_t i = 0; i < xm.size(); ++i)
    xm[i] = lambda * first.x[i] + (1.0 - lambda) * second.x[i];
  std::vector<int> relabeled(first.n);
  for (std::size_t i = 0; i < first.n; ++i) {
    int yi = hard_label(std::span<const double>(first.targets).subspan(i * 2, 2));
    int yj = hard_label(std::span<const double>(second.targets).subspan(i * 2, 2));
    relabeled[i] = asym_mixup_label(yi, yj, lambda, mixup_margin, rare_class);
  }
  Tensor x2 = tape.constant({first.n, first.dim}, std::move(xm));
  Tensor y2 = tape.constant({first.n, 2}, onehot_targets(relabeled));
  Tensor mixed = cross_entropy(tape, net.forward(tape, binding, x2), y2);
  return tape.add(clean, mixed);
}

Tensor combined_asym_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                          const Batch& batch, const LossConfig& config,
                          const std::vector<double>& perturbation) {
  config.validate();
  check_batch("combined_asym_loss", batch, net);
  double m = config.has_combined(LossVariant::kLargeMargin) ? config.margin : 0.0;
  double g = config.has_combined(LossVariant::kFocal) ? config.gamma : 0.0;

  Tensor y = tape.constant({batch.n, 2}, batch.targets);
  Tensor x = tape.constant({batch.n, batch.dim}, batch.x);
  Tensor z = net.forward(tape, binding, x);
  Tensor loss = asym_margin_focal_loss(tape, z, y, m, g, config.rare_class,
                                       config.focal_modulator_constant);

  if (config.has_combined(LossVariant::kAdversarial)) {
    if (perturbation.size() != batch.x.size())
      throw ShapeError("combined_asym_loss: perturbation size " +
                       std::to_string(perturbation.size()) + " vs input size " +
                       std::to_string(batch.x.size()));
    std::vector<double> moved = batch.x;
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += perturbation[i];
    Tensor xp = tape.constant({batch.n, batch.dim}, std::move(moved));
    loss = tape.add(loss, cross_entropy(tape, net.forward(tape, binding, xp), y));
  }
  return loss;
}

Tensor combined_asym_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                          const Batch& batch, const LossConfig& config) {
  std::vector<double> pert(batch.x.size(), 0.0);
  if (config.has_combined(LossVariant::kAdversarial)) {
    std::vector<double> d =
        asym_adversarial_direction(net, batch, config.epsilon, config.rare_class);
    pert = scaled_perturbation(d, batch.n, batch.dim, config.magnitude);
  }
  return combined_asym_loss(tape, net, binding, batch, config, pert);
}

Tensor batch_loss(Tape& tape, const DenseNet& net, const DenseNet::Binding& binding,
                  const Batch& batch, const LossConfig& config) {
  config.validate();
  if (!config.combine.empty()) return combined_asym_loss(tape, net, binding, batch, config);

  if (config.variant == LossVariant::kAdversarial)
    return adversarial_loss(tape, net, binding, batch, config.magnitude, config.epsilon,
                            config.asymmetric, config.rare_class);

  check_batch("batch_loss", batch, net);
  Tensor y = tape.constant({batch.n, 2}, batch.targets);
  Tensor x = tape.constant({batch.n, batch.dim}, batch.x);
  Tensor z = net.forward(tape, binding, x);
  switch (config.variant) {
    case LossVariant::kCrossEntropy:
      return cross_entropy(tape, z, y);
    case LossVariant::kSoftDice:
      return soft_dice_loss(tape, z, y, config.rare_class);
    case LossVariant::kLargeMargin:
      return config.asymmetric
                 ? asym_large_margin_loss(tape, z, y, config.margin, config.rare_class)
                 : large_margin_loss(tape, z, y, config.margin);
    case LossVariant::kFocal:
      return config.asymmetric
                 ? asym_focal_loss(tape, z, y, config.gamma, config.rare_class,
                                   config.focal_modulator_constant)
                 : focal_loss(tape, z, y, config.gamma, config.focal_modulator_constant);
    case LossVariant::kMixup:
      // The batch rows were already mixed by the caller; soft rows only
      // appear in the symmetric form.
      return config.asymmetric ? cross_entropy(tape, z, y)
                               : soft_target_cross_entropy(tape, z, y);
    default:
      throw ContractError("batch_loss: unhandled variant");
  }
}

}  // namespace asymseg
