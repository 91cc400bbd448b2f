#include "asymseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace asymseg {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const Shape& Tensor::shape() const {
  if (!tape_) throw ContractError("Tensor: empty handle");
  return tape_->node(*this).shape;
}

const std::vector<double>& Tensor::values() const {
  if (!tape_) throw ContractError("Tensor: empty handle");
  return tape_->node(*this).value;
}

const std::vector<double>& Tensor::grad() const {
  if (!tape_) throw ContractError("Tensor: empty handle");
  const auto& n = tape_->node(*this);
  if (!n.tracked) throw ContractError("Tensor: grad requested on untracked node");
  return n.grad;
}

bool Tensor::tracked() const {
  if (!tape_) throw ContractError("Tensor: empty handle");
  return tape_->node(*this).tracked;
}

std::size_t Tensor::size() const { return values().size(); }

double Tensor::item() const {
  const auto& v = values();
  if (v.size() != 1)
    throw ContractError("Tensor: item() on non-scalar of shape " + shape_str(shape()));
  return v[0];
}

std::size_t Tape::push(Shape shape, std::vector<double> value, bool tracked) {
  if (shape_numel(shape) != value.size())
    throw ShapeError("Tape: shape " + shape_str(shape) + " does not match " +
                     std::to_string(value.size()) + " values");
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.tracked = tracked;
  if (tracked) n.grad.assign(n.value.size(), 0.0);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

const Tape::Node& Tape::node(const Tensor& t) const {
  if (t.tape_ != this) throw ContractError("Tape: tensor belongs to a different tape");
  return nodes_.at(t.node_);
}

void Tape::check_owned(const Tensor& t) const {
  if (t.tape_ != this) throw ContractError("Tape: tensor belongs to a different tape");
}

void Tape::check_same_shape(const char* op, const Tensor& a, const Tensor& b) const {
  if (node(a).shape != node(b).shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(node(a).shape) +
                     " vs " + shape_str(node(b).shape));
}

double* Tape::adjoint(std::size_t i) {
  return nodes_[i].tracked ? adjoints_[i].data() : nullptr;
}

Tensor Tape::input(Shape shape, std::vector<double> values, bool tracked) {
  return Tensor(this, push(std::move(shape), std::move(values), tracked));
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  return input(std::move(shape), std::move(values), false);
}

Tensor Tape::scalar(double value) { return constant({1}, {value}); }

Tensor Tape::fill(Shape shape, double value) {
  std::size_t n = shape_numel(shape);
  return constant(std::move(shape), std::vector<double>(n, value));
}

namespace {

// Accumulate g into dst when dst is tracked.
inline void axpy(double* dst, const std::vector<double>& g) {
  if (!dst) return;
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_owned(a);
  check_same_shape("add", a, b);
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  bool tracked = node(a).tracked || node(b).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_, ib = b.node_;
    nodes_[id].backprop = [id, ia, ib](Tape& t) {
      const auto& g = t.adjoints_[id];
      axpy(t.adjoint(ia), g);
      axpy(t.adjoint(ib), g);
    };
  }
  return Tensor(this, id);
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_owned(a);
  check_same_shape("sub", a, b);
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  bool tracked = node(a).tracked || node(b).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_, ib = b.node_;
    nodes_[id].backprop = [id, ia, ib](Tape& t) {
      const auto& g = t.adjoints_[id];
      axpy(t.adjoint(ia), g);
      if (double* gb = t.adjoint(ib))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    };
  }
  return Tensor(this, id);
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_owned(a);
  check_same_shape("mul", a, b);
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  bool tracked = node(a).tracked || node(b).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_, ib = b.node_;
    nodes_[id].backprop = [id, ia, ib](Tape& t) {
      const auto& g = t.adjoints_[id];
      if (double* ga = t.adjoint(ia)) {
        const auto& bvv = t.nodes_[ib].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bvv[i];
      }
      if (double* gb = t.adjoint(ib)) {
        const auto& avv = t.nodes_[ia].value;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * avv[i];
      }
    };
  }
  return Tensor(this, id);
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  check_owned(a);
  check_same_shape("div", a, b);
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (bv[i] == 0.0) throw std::domain_error("div: zero divisor at index " + std::to_string(i));
    out[i] = av[i] / bv[i];
  }
  bool tracked = node(a).tracked || node(b).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_, ib = b.node_;
    nodes_[id].backprop = [id, ia, ib](Tape& t) {
      const auto& g = t.adjoints_[id];
      const auto& avv = t.nodes_[ia].value;
      const auto& bvv = t.nodes_[ib].value;
      if (double* ga = t.adjoint(ia))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bvv[i];
      if (double* gb = t.adjoint(ib))
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[i] -= g[i] * avv[i] / (bvv[i] * bvv[i]);
    };
  }
  return Tensor(this, id);
}

Tensor Tape::scale(const Tensor& a, double factor) {
  check_owned(a);
  const auto& av = node(a).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  bool tracked = node(a).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_;
    nodes_[id].backprop = [id, ia, factor](Tape& t) {
      const auto& g = t.adjoints_[id];
      if (double* ga = t.adjoint(ia))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    };
  }
  return Tensor(this, id);
}

Tensor Tape::relu(const Tensor& a) {
  check_owned(a);
  const auto& av = node(a).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  bool tracked = node(a).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_;
    nodes_[id].backprop = [id, ia](Tape& t) {
      const auto& g = t.adjoints_[id];
      const auto& avv = t.nodes_[ia].value;
      if (double* ga = t.adjoint(ia))
        for (std::size_t i = 0; i < g.size(); ++i)
          if (avv[i] > 0.0) ga[i] += g[i];
    };
  }
  return Tensor(this, id);
}

Tensor Tape::exp(const Tensor& a) {
  check_owned(a);
  const auto& av = node(a).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(av[i]);
  bool tracked = node(a).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_;
    nodes_[id].backprop = [id, ia](Tape& t) {
      const auto& g = t.adjoints_[id];
      const auto& ov = t.nodes_[id].value;
      if (double* ga = t.adjoint(ia))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ov[i];
    };
  }
  return Tensor(this, id);
}

Tensor Tape::log(const Tensor& a) {
  check_owned(a);
  const auto& av = node(a).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (av[i] <= 0.0)
      throw std::domain_error("log: non-positive value " + std::to_string(av[i]) +
                              " at index " + std::to_string(i));
    out[i] = std::log(av[i]);
  }
  bool tracked = node(a).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_;
    nodes_[id].backprop = [id, ia](Tape& t) {
      const auto& g = t.adjoints_[id];
      const auto& avv = t.nodes_[ia].value;
      if (double* ga = t.adjoint(ia))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / avv[i];
    };
  }
  return Tensor(this, id);
}

Tensor Tape::pow(const Tensor& a, double exponent) {
  check_owned(a);
  const auto& av = node(a).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (av[i] < 0.0)
      throw std::domain_error("pow: negative base " + std::to_string(av[i]) +
                              " at index " + std::to_string(i));
    out[i] = std::pow(av[i], exponent);
  }
  bool tracked = node(a).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_;
    nodes_[id].backprop = [id, ia, exponent](Tape& t) {
      const auto& g = t.adjoints_[id];
      const auto& avv = t.nodes_[ia].value;
      double* ga = t.adjoint(ia);
      if (!ga || exponent == 0.0) return;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d;
        if (avv[i] == 0.0)
          d = exponent == 1.0 ? 1.0 : 0.0;  // finite convention at the boundary
        else
          d = exponent * std::pow(avv[i], exponent - 1.0);
        ga[i] += g[i] * d;
      }
    };
  }
  return Tensor(this, id);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  check_owned(a);
  check_owned(b);
  const auto& sa = node(a).shape;
  const auto& sb = node(b).shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw ShapeError("matmul: shape mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  std::size_t m = sa[0], k = sa[1], n = sb[1];
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  bool tracked = node(a).tracked || node(b).tracked;
  std::size_t id = push({m, n}, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_, ib = b.node_;
    nodes_[id].backprop = [id, ia, ib, m, k, n](Tape& t) {
      const auto& g = t.adjoints_[id];
      const auto& avv = t.nodes_[ia].value;
      const auto& bvv = t.nodes_[ib].value;
      if (double* ga = t.adjoint(ia)) {
        // dA += G * B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            double gij = g[i * n + j];
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bvv[p * n + j];
          }
      }
      if (double* gb = t.adjoint(ib)) {
        // dB += A^T * G
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double aip = avv[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
          }
      }
    };
  }
  return Tensor(this, id);
}

Tensor Tape::add_rowwise(const Tensor& a, const Tensor& row) {
  check_owned(a);
  check_owned(row);
  const auto& sa = node(a).shape;
  const auto& sr = node(row).shape;
  if (sa.size() != 2 || sr.size() != 1 || sr[0] != sa[1])
    throw ShapeError("add_rowwise: shape mismatch " + shape_str(sa) + " vs " + shape_str(sr));
  std::size_t n = sa[0], c = sa[1];
  const auto& av = node(a).value;
  const auto& rv = node(row).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] + rv[j];
  bool tracked = node(a).tracked || node(row).tracked;
  std::size_t id = push(sa, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_, ir = row.node_;
    nodes_[id].backprop = [id, ia, ir, n, c](Tape& t) {
      const auto& g = t.adjoints_[id];
      axpy(t.adjoint(ia), g);
      if (double* gr = t.adjoint(ir))
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) gr[j] += g[i * c + j];
    };
  }
  return Tensor(this, id);
}

namespace {

void check_class_dim(const char* op, const Shape& s) {
  if (s.empty() || s.back() < 2)
    throw ShapeError(std::string(op) + ": last dimension must hold >= 2 classes, got shape " +
                     shape_str(s));
}

}  // namespace

Tensor Tape::softmax(const Tensor& a) {
  check_owned(a);
  check_class_dim("softmax", node(a).shape);
  std::size_t c = node(a).shape.back();
  const auto& av = node(a).value;
  std::size_t rows = av.size() / c;
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = &av[r * c];
    double m = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[r * c + j] = std::exp(z[j] - m);
      s += out[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] /= s;
  }
  bool tracked = node(a).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_;
    nodes_[id].backprop = [id, ia, c](Tape& t) {
      const auto& g = t.adjoints_[id];
      const auto& sv = t.nodes_[id].value;
      double* ga = t.adjoint(ia);
      if (!ga) return;
      std::size_t rows = sv.size() / c;
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * sv[r * c + j];
        for (std::size_t j = 0; j < c; ++j)
          ga[r * c + j] += sv[r * c + j] * (g[r * c + j] - dot);
      }
    };
  }
  return Tensor(this, id);
}

Tensor Tape::log_softmax(const Tensor& a) {
  check_owned(a);
  check_class_dim("log_softmax", node(a).shape);
  std::size_t c = node(a).shape.back();
  const auto& av = node(a).value;
  std::size_t rows = av.size() / c;
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = &av[r * c];
    double m = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - m);
    double lse = m + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = z[j] - lse;
  }
  bool tracked = node(a).tracked;
  std::size_t id = push(node(a).shape, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_;
    nodes_[id].backprop = [id, ia, c](Tape& t) {
      const auto& g = t.adjoints_[id];
      const auto& lv = t.nodes_[id].value;
      double* ga = t.adjoint(ia);
      if (!ga) return;
      std::size_t rows = lv.size() / c;
      for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (std::size_t j = 0; j < c; ++j) gs += g[r * c + j];
        for (std::size_t j = 0; j < c; ++j)
          ga[r * c + j] += g[r * c + j] - std::exp(lv[r * c + j]) * gs;
      }
    };
  }
  return Tensor(this, id);
}

Tensor Tape::column(const Tensor& a, std::size_t j) {
  check_owned(a);
  const auto& sa = node(a).shape;
  if (sa.size() != 2 || j >= sa[1])
    throw ShapeError("column: index " + std::to_string(j) + " out of range for shape " +
                     shape_str(sa));
  std::size_t n = sa[0], c = sa[1];
  const auto& av = node(a).value;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i * c + j];
  bool tracked = node(a).tracked;
  std::size_t id = push({n}, std::move(out), tracked);
  if (tracked) {
    std::size_t ia = a.node_;
    nodes_[id].backprop = [id, ia, j, c](Tape& t) {
      const auto& g = t.adjoints_[id];
      if (double* ga = t.adjoint(ia))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i * c + j] += g[i];
    };
  }
  return Tensor(this, id);
}

Tensor Tape::sum(const Tensor& a) {
  check_owned(a);
  const auto& av = node(a).value;
  double s = 0.0;
  for (double v : av) s += v;
  bool tracked = node(a).tracked;
  std::size_t id = push({1}, {s}, tracked);
  if (tracked) {
    std::size_t ia = a.node_;
    nodes_[id].backprop = [id, ia](Tape& t) {
      double g = t.adjoints_[id][0];
      if (double* ga = t.adjoint(ia))
        for (std::size_t i = 0; i < t.nodes_[ia].value.size(); ++i) ga[i] += g;
    };
  }
  return Tensor(this, id);
}

Tensor Tape::mean(const Tensor& a) {
  check_owned(a);
  return scale(sum(a), 1.0 / static_cast<double>(node(a).value.size()));
}

void Tape::backward(const Tensor& result) {
  check_owned(result);
  const Node& r = node(result);
  if (r.value.size() != 1)
    throw ContractError("backward: result must be scalar, got shape " + shape_str(r.shape));
  if (!r.tracked)
    throw ContractError("backward: result does not depend on any tracked input");

  // Fresh adjoints per sweep; persistent grads receive the sweep totals so
  // that repeated backward calls accumulate.
  adjoints_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].tracked) adjoints_[i].assign(nodes_[i].value.size(), 0.0);
  adjoints_[result.node_][0] = 1.0;

  for (std::size_t i = result.node_ + 1; i-- > 0;) {
    if (nodes_[i].tracked && nodes_[i].backprop) nodes_[i].backprop(*this);
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].tracked) continue;
    auto& g = nodes_[i].grad;
    const auto& adj = adjoints_[i];
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += adj[j];
  }
  adjoints_.clear();
}

void Tape::zero_grad() {
  for (auto& n : nodes_)
    if (n.tracked) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Tape::clear() {
  nodes_.clear();
  adjoints_.clear();
}

}  // namespace asymseg
