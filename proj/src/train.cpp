#include "asymseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "asymseg/rng.hpp"

namespace asymseg {

void TrainConfig::validate() const {
  loss.validate();
  if (epochs < 1) throw ConfigError("train: epochs must be positive");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (batches_per_epoch < 1) throw ConfigError("train: batches_per_epoch must be positive");
  if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
  if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("train: lr_decay must lie in (0, 1]");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must lie in [0, 1)");
  if (!(mixup_fraction > 0.0 && mixup_fraction <= 1.0))
    throw ConfigError("train: mixup_fraction must lie in (0, 1]");
  if (!(class_sampling_ratio > 0.0 && class_sampling_ratio < 1.0))
    throw ConfigError("train: class_sampling_ratio must lie in (0, 1)");
  if (!(data_fraction > 0.0 && data_fraction <= 1.0))
    throw ConfigError("train: data_fraction must lie in (0, 1]");
}

std::vector<int> training_case_ids(const Dataset& dataset, const TrainConfig& config) {
  return select_train_cases(dataset, config.data_fraction, dataset.config.seed);
}

std::vector<Sample> training_samples(const Dataset& dataset, const TrainConfig& config,
                                     std::vector<std::string>* warnings) {
  config.validate();
  std::vector<int> keep = training_case_ids(dataset, config);
  auto kept = [&keep](int id) { return std::binary_search(keep.begin(), keep.end(), id); };

  if (config.class_sampling_ratio == dataset.config.class_sampling_ratio) {
    std::vector<Sample> out;
    for (const Sample& s : dataset.train.samples)
      if (kept(s.case_id)) out.push_back(s);
    return out;
  }

  // Different sampling weight than the stored patches: re-draw from the
  // selected cases at the requested ratio.
  std::vector<CaseImage> cases;
  for (const CaseImage& c : dataset.cases)
    if (c.split == Split::kTrain && kept(c.case_id)) cases.push_back(c);
  char salt[64];
  std::snprintf(salt, sizeof(salt), "resample-%.6f", config.class_sampling_ratio);
  PatchSet set = extract_patches(cases, Split::kTrain, dataset.config,
                                 derive_seed(dataset.config.seed, salt),
                                 config.class_sampling_ratio);
  if (warnings)
    warnings->insert(warnings->end(), set.warnings.begin(), set.warnings.end());
  return std::move(set.samples);
}

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& index) {
  if (index.empty()) throw ContractError("make_batch: empty index");
  Batch b;
  b.n = index.size();
  b.dim = samples[index[0]].patch.size();
  b.x.reserve(b.n * b.dim);
  b.labels.reserve(b.n);
  for (std::size_t i : index) {
    const Sample& s = samples[i];
    if (s.patch.size() != b.dim)
      throw ShapeError("make_batch: patch size " + std::to_string(s.patch.size()) +
                       " vs expected " + std::to_string(b.dim));
    b.x.insert(b.x.end(), s.patch.begin(), s.patch.end());
    b.labels.push_back(s.label);
  }
  b.targets = onehot_targets(b.labels);
  return b;
}

Batch mixup_transform(const Batch& batch, const LossConfig& config, double fraction,
                      std::mt19937_64& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("mixup_transform: fraction must lie in (0, 1]");
  Batch out = batch;
  if (batch.n < 2) return out;
  std::size_t n_mixed = static_cast<std::size_t>(fraction * static_cast<double>(batch.n));
  std::uniform_int_distribution<std::size_t> pick(0, batch.n - 1);
  bool asym = config.asymmetric || config.has_combined(LossVariant::kMixup);
  for (std::size_t i = 0; i < n_mixed; ++i) {
    std::size_t j = pick(rng);
    if (j == i) j = (j + 1) % batch.n;  // partner must be another sample
    double lambda = draw_beta(rng, config.mixup_alpha);
    for (std::size_t k = 0; k < batch.dim; ++k)
      out.x[i * batch.dim + k] =
          lambda * batch.x[i * batch.dim + k] + (1.0 - lambda) * batch.x[j * batch.dim + k];
    if (asym) {
      int label = asym_mixup_label(batch.labels[i], batch.labels[j], lambda,
                                   config.mixup_margin, config.rare_class);
      out.labels[i] = label;
      out.targets[i * 2] = label == 0 ? 1.0 : 0.0;
      out.targets[i * 2 + 1] = label == 1 ? 1.0 : 0.0;
    } else {
      for (std::size_t k = 0; k < 2; ++k)
        out.targets[i * 2 + k] = lambda * batch.targets[i * 2 + k] +
                                 (1.0 - lambda) * batch.targets[j * 2 + k];
      // hard label kept as the dominant side for bookkeeping
      out.labels[i] = lambda >= 0.5 ? batch.labels[i] : batch.labels[j];
    }
  }
  return out;
}

Batch mixup_append(const Batch& batch, const LossConfig& config, double fraction,
                   std::mt19937_64& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("mixup_append: fraction must lie in (0, 1]");
  Batch out = batch;
  if (batch.n < 2) return out;
  std::size_t n_mixed = static_cast<std::size_t>(fraction * static_cast<double>(batch.n));
  std::uniform_int_distribution<std::size_t> pick(0, batch.n - 1);
  for (std::size_t k = 0; k < n_mixed; ++k) {
    std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    if (j == i) j = (j + 1) % batch.n;
    double lambda = draw_beta(rng, config.mixup_alpha);
    for (std::size_t c = 0; c < batch.dim; ++c)
      out.x.push_back(lambda * batch.x[i * batch.dim + c] +
                      (1.0 - lambda) * batch.x[j * batch.dim + c]);
    int label = asym_mixup_label(batch.labels[i], batch.labels[j], lambda,
                                 config.mixup_margin, config.rare_class);
    out.labels.push_back(label);
    out.targets.push_back(label == 0 ? 1.0 : 0.0);
    out.targets.push_back(label == 1 ? 1.0 : 0.0);
    ++out.n;
  }
  return out;
}

TrainedModel train_model(const Dataset& dataset, const ModelConfig& model_config,
                         const TrainConfig& train_config) {
  model_config.validate();
  train_config.validate();
  std::size_t expected_dim = static_cast<std::size_t>(dataset.config.patch_size) *
                             static_cast<std::size_t>(dataset.config.patch_size);
  if (model_config.input_dim != expected_dim)
    throw ConfigError("train: model input_dim " + std::to_string(model_config.input_dim) +
                      " vs patch size " + std::to_string(expected_dim));

  std::vector<Sample> samples = training_samples(dataset, train_config);
  if (samples.empty()) throw ContractError("train: no training samples after selection");

  DenseNet net(model_config, derive_seed(train_config.seed, "init"));
  std::mt19937_64 order_rng(derive_seed(train_config.seed, "batch-order"));
  std::mt19937_64 mixup_rng(derive_seed(train_config.seed, "mixup"));

  std::vector<double> velocity(net.param_count(), 0.0);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);

  TrainedModel result;
  result.model_config = model_config;
  result.train_config = train_config;

  double lr = train_config.learning_rate;
  bool mixup = train_config.loss.mixup_active();
  std::size_t batch_size = static_cast<std::size_t>(train_config.batch_size);
  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (int step = 0; step < train_config.batches_per_epoch; ++step) {
      std::vector<std::size_t> index(std::min(batch_size, samples.size()));
      for (std::size_t& i : index) i = pick(order_rng);
      Batch batch = make_batch(samples, index);
      if (mixup) {
        // Single-variant runs substitute mixed rows; the combined model
        // appends them so the clean supervision stays intact.
        batch = train_config.loss.combine.empty()
                    ? mixup_transform(batch, train_config.loss,
                                      train_config.mixup_fraction, mixup_rng)
                    : mixup_append(batch, train_config.loss, train_config.mixup_fraction,
                                   mixup_rng);
      }

      Tape tape;
      DenseNet::Binding binding = net.bind(tape, /*tracked=*/true);
      Tensor loss = batch_loss(tape, net, binding, batch, train_config.loss);
      double value = loss.item();
      if (!std::isfinite(value))
        throw DivergenceError(epoch, static_cast<int>(n_batches),
                              "train: non-finite loss " + std::to_string(value) +
                                  " at epoch " + std::to_string(epoch) + ", batch " +
                                  std::to_string(n_batches));
      tape.backward(loss);
      std::vector<double> grad = net.gradient(binding);
      auto& params = net.params();
      if (train_config.momentum > 0.0) {
        for (std::size_t k = 0; k < params.size(); ++k) {
          velocity[k] = train_config.momentum * velocity[k] - lr * grad[k];
          params[k] += velocity[k];
        }
      } else {
        for (std::size_t k = 0; k < params.size(); ++k) params[k] -= lr * grad[k];
      }
      epoch_loss += value;
      ++n_batches;
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(n_batches));
    lr *= train_config.lr_decay;
  }

  result.params = net.params();
  return result;
}

Prediction predict_matrix(const DenseNet& net, const std::vector<double>& x, std::size_t n) {
  Prediction p;
  p.logits = net.logits(x, n);
  p.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    p.labels[i] = p.logits[i * 2 + 1] > p.logits[i * 2] ? 1 : 0;
  return p;
}

Prediction predict(const DenseNet& net, const std::vector<Sample>& samples) {
  if (samples.empty()) throw ContractError("predict: no samples");
  std::size_t dim = net.config().input_dim;
  std::vector<double> x;
  x.reserve(samples.size() * dim);
  for (const Sample& s : samples) {
    if (s.patch.size() != dim)
      throw ShapeError("predict: patch size " + std::to_string(s.patch.size()) +
                       " vs model input " + std::to_string(dim));
    x.insert(x.end(), s.patch.begin(), s.patch.end());
  }
  return predict_matrix(net, x, samples.size());
}

}  // namespace asymseg
