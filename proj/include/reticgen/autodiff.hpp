#pragma once

// Minimal tensor-level reverse-mode differentiation: just the operations the
// recurrent flow model and the trajectory-balance loss need.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace reticgen {

using ActionMask = std::vector<bool>;

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty unless tracked

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape.front(); }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  bool tracked() const { return grad.size() == values.size() && !values.empty(); }
  void track() { grad.assign(values.size(), 0.0); }
  void zero_grad();

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

std::size_t element_count(const std::vector<std::size_t>& shape);

// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A tracked tensor owned elsewhere; gradients accumulate into param.grad.
  Var parameter(Tensor& param);
  Var constant(std::vector<double> values);
  Var scalar(double value) { return constant({value}); }

  std::span<const double> value(Var v) const;
  double scalar_value(Var v) const;
  std::size_t size(Var v) const { return value(v).size(); }

  Var row(Var matrix, std::size_t r);                  // matrix[r, :]
  Var affine(Var weights, Var x, Var bias);            // W x + b
  Var matvec(Var weights, Var x);                      // W x
  Var slice(Var v, std::size_t offset, std::size_t length);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var square(Var a);
  Var scale(Var a, double c);
  Var add_constant(Var a, double c);
  Var pick(Var v, std::size_t i);                      // scalar v[i]
  Var sum(std::span<const Var> scalars);
  Var mean(std::span<const Var> scalars);
  // Masked entries get -inf and take no part in the normalization.
  Var masked_log_softmax(Var logits, const ActionMask& mask);

  // Accumulates d(root)/d(node) into every tracked parameter. A tape can be
  // differentiated once; reset() before reusing it.
  void backward(Var root);
  void reset();

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<double> value;
    std::vector<double> grad;
    Tensor* param = nullptr;
    std::size_t cols = 1;
    std::function<void(Tape&, std::size_t)> propagate;
  };

  Var push(std::vector<double> value, std::function<void(Tape&, std::size_t)> propagate);
  const std::vector<double>& val(std::size_t id) const;
  std::vector<double>& grad(std::size_t id);
  const std::vector<double>& out_grad(std::size_t id) const { return nodes_[id].grad; }
  const Tensor& param_of(std::size_t id) const;

  std::vector<Node> nodes_;
  bool differentiated_ = false;
};

}  // namespace reticgen
