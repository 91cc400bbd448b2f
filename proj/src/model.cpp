#include "asymseg/model.hpp"

#include <cmath>
#include <random>

#include "asymseg/errors.hpp"

namespace asymseg {

void ModelConfig::validate() const {
  if (input_dim == 0) throw ConfigError("model: input_dim must be positive");
  if (hidden_widths.empty()) throw ConfigError("model: at least one hidden layer required");
  for (std::size_t w : hidden_widths)
    if (w == 0) throw ConfigError("model: zero-width hidden layer");
}

std::vector<std::size_t> ModelConfig::layer_widths() const {
  std::vector<std::size_t> widths;
  widths.push_back(input_dim);
  widths.insert(widths.end(), hidden_widths.begin(), hidden_widths.end());
  widths.push_back(kOutputWidth);
  return widths;
}

DenseNet::DenseNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  auto widths = config_.layer_widths();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layers_.push_back({total, total + widths[l] * widths[l + 1], widths[l], widths[l + 1]});
    total += widths[l] * widths[l + 1] + widths[l + 1];
  }
  params_.assign(total, 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const Layer& layer : layers_) {
    double std_dev = std::sqrt(2.0 / static_cast<double>(layer.in));
    for (std::size_t i = 0; i < layer.in * layer.out; ++i)
      params_[layer.w_off + i] = std_dev * normal(rng);
    // biases stay zero
  }
}

DenseNet::DenseNet(const ModelConfig& config, std::vector<double> params) : config_(config) {
  config_.validate();
  auto widths = config_.layer_widths();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layers_.push_back({total, total + widths[l] * widths[l + 1], widths[l], widths[l + 1]});
    total += widths[l] * widths[l + 1] + widths[l + 1];
  }
  if (params.size() != total)
    throw ShapeError("DenseNet: parameter vector has " + std::to_string(params.size()) +
                     " entries, expected " + std::to_string(total));
  params_ = std::move(params);
}

DenseNet::Binding DenseNet::bind(Tape& tape, bool tracked) const {
  Binding binding;
  for (const Layer& layer : layers_) {
    std::vector<double> w(params_.begin() + layer.w_off,
                          params_.begin() + layer.w_off + layer.in * layer.out);
    std::vector<double> b(params_.begin() + layer.b_off,
                          params_.begin() + layer.b_off + layer.out);
    binding.weights.push_back(tape.input({layer.in, layer.out}, std::move(w), tracked));
    binding.biases.push_back(tape.input({layer.out}, std::move(b), tracked));
  }
  return binding;
}

Tensor DenseNet::forward(Tape& tape, const Binding& binding, const Tensor& x) const {
  if (x.shape().size() != 2 || x.shape()[1] != config_.input_dim)
    throw ShapeError("forward: input shape " + shape_str(x.shape()) + " vs expected [n x " +
                     std::to_string(config_.input_dim) + "]");
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = tape.add_rowwise(tape.matmul(h, binding.weights[l]), binding.biases[l]);
    if (l + 1 < layers_.size()) h = tape.relu(h);
  }
  return h;
}

std::vector<double> DenseNet::logits(const std::vector<double>& x, std::size_t n) const {
  if (n == 0 || x.size() != n * config_.input_dim)
    throw ShapeError("logits: input of " + std::to_string(x.size()) +
                     " values vs expected [" + std::to_string(n) + " x " +
                     std::to_string(config_.input_dim) + "]");
  std::vector<double> h = x;
  std::size_t rows = n;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    std::vector<double> out(rows * layer.out, 0.0);
    // same loop nest as Tape::matmul so results match bit for bit
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t p = 0; p < layer.in; ++p) {
        double hip = h[i * layer.in + p];
        const double* wrow = &params_[layer.w_off + p * layer.out];
        for (std::size_t j = 0; j < layer.out; ++j) out[i * layer.out + j] += hip * wrow[j];
      }
    const double* bias = &params_[layer.b_off];
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < layer.out; ++j) out[i * layer.out + j] += bias[j];
    if (l + 1 < layers_.size())
      for (double& v : out)
        if (v < 0.0) v = 0.0;
    h = std::move(out);
  }
  return h;
}

std::vector<double> DenseNet::gradient(const Binding& binding) const {
  std::vector<double> g(params_.size(), 0.0);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& gw = binding.weights[l].grad();
    const auto& gb = binding.biases[l].grad();
    std::copy(gw.begin(), gw.end(), g.begin() + layers_[l].w_off);
    std::copy(gb.begin(), gb.end(), g.begin() + layers_[l].b_off);
  }
  return g;
}

}  // namespace asymseg
