#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "asymseg/errors.hpp"

namespace asymseg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Handle to one node of a Tape. Cheap to copy; the value and gradient
// storage lives on the tape that produced it. Handles are invalidated by
// Tape::clear().
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  const std::vector<double>& values() const;
  // Accumulated partial derivatives; ContractError for untracked nodes.
  const std::vector<double>& grad() const;
  bool tracked() const;
  std::size_t size() const;
  // Value of a single-element tensor.
  double item() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t node) : tape_(tape), node_(node) {}

  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

// Records a forward pass as an ordered list of primitive operations over
// 64-bit float tensors and replays it in reverse for gradients. Every node
// is appended after its operands, so reverse tape order is a topological
// order and backward() visits each node exactly once.
//
// A tape and its tensors are a single-threaded unit of work. Independent
// tapes may be used concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. Tracked leaves receive gradients after backward().
  Tensor input(Shape shape, std::vector<double> values, bool tracked = false);
  Tensor constant(Shape shape, std::vector<double> values);
  Tensor scalar(double value);
  Tensor fill(Shape shape, double value);

  // Elementwise; binary ops require identical shapes.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);  // domain error on zero divisor

  Tensor scale(const Tensor& a, double factor);
  Tensor relu(const Tensor& a);  // derivative at 0 is 0
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);                   // domain error on values <= 0
  Tensor pow(const Tensor& a, double exponent);  // requires values >= 0

  Tensor matmul(const Tensor& a, const Tensor& b);
  // Adds a length-C row vector to every row of an N x C matrix.
  Tensor add_rowwise(const Tensor& a, const Tensor& row);

  // Row-stabilized (max-subtraction) softmax / log-softmax over the last
  // dimension; C >= 2 required.
  Tensor softmax(const Tensor& a);
  Tensor log_softmax(const Tensor& a);

  // Column j of an N x C matrix as a length-N tensor.
  Tensor column(const Tensor& a, std::size_t j);

  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);

  // Accumulates d(result)/d(node) into the grad of every tracked node.
  // `result` must be a tracked scalar. Repeated calls without zero_grad()
  // add up.
  void backward(const Tensor& result);

  void zero_grad();
  // Drops all nodes; outstanding handles become invalid.
  void clear();

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class Tensor;

  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated only when tracked
    bool tracked = false;
    std::function<void(Tape&)> backprop;  // null for leaves
  };

  std::size_t push(Shape shape, std::vector<double> value, bool tracked);
  const Node& node(const Tensor& t) const;
  void check_owned(const Tensor& t) const;
  void check_same_shape(const char* op, const Tensor& a, const Tensor& b) const;
  // Adjoint buffer of node i during a backward sweep; null when untracked.
  double* adjoint(std::size_t i);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> adjoints_;
};

}  // namespace asymseg
