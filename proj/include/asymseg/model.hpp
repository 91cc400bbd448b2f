#pragma once

#include <cstdint>
#include <vector>

#include "asymseg/tensor.hpp"

namespace asymseg {

// Dense binary classifier over flattened patches:
// input -> hidden layers (relu) -> 2 logits.
struct ModelConfig {
  std::size_t input_dim = 81;
  std::vector<std::size_t> hidden_widths = {32, 16};

  static constexpr std::size_t kOutputWidth = 2;

  void validate() const;
  // [input, hidden..., 2]
  std::vector<std::size_t> layer_widths() const;
};

class DenseNet {
 public:
  // Fan-in scaled normal init (std = sqrt(2/fan_in)), zero biases,
  // deterministic in `seed`.
  DenseNet(const ModelConfig& config, std::uint64_t seed);
  // Restore from stored parameters.
  DenseNet(const ModelConfig& config, std::vector<double> params);

  const ModelConfig& config() const { return config_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  // Parameter tensors instantiated on a tape. One binding is shared across
  // all forward calls of a step so a multi-term loss accumulates parameter
  // gradients in one place.
  struct Binding {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
  };
  Binding bind(Tape& tape, bool tracked) const;

  // x: n x input_dim -> n x 2 logits, differentiable.
  Tensor forward(Tape& tape, const Binding& binding, const Tensor& x) const;

  // Tape-free forward for inference; returns n x 2 logits. Matches the
  // tape forward bit for bit.
  std::vector<double> logits(const std::vector<double>& x, std::size_t n) const;

  // Reads parameter gradients from a tracked binding, in params() order.
  std::vector<double> gradient(const Binding& binding) const;

 private:
  struct Layer {
    std::size_t w_off, b_off, in, out;
  };

  ModelConfig config_;
  std::vector<Layer> layers_;
  std::vector<double> params_;  // [W0 | b0 | W1 | b1 | ...], W row-major in x out
};

}  // namespace asymseg
