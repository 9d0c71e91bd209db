#include "reticgen/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "reticgen/error.hpp"

namespace reticgen {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> s, double fill)
    : shape(std::move(s)), values(element_count(shape), fill) {}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ConfigurationError(std::string(op) + ": size mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

Var Tape::push(std::vector<double> value, std::function<void(Tape&, std::size_t)> propagate) {
  Node node;
  node.value = std::move(value);
  node.propagate = std::move(propagate);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Tensor& param) {
  if (!param.tracked()) throw AutodiffError("parameter tensor is not tracked");
  Node node;
  node.param = &param;
  node.cols = param.cols();
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(std::vector<double> values) { return push(std::move(values), nullptr); }

const std::vector<double>& Tape::val(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->values : n.value;
}

std::vector<double>& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  return n.param ? n.param->grad : n.grad;
}

const Tensor& Tape::param_of(std::size_t id) const {
  if (!nodes_[id].param) throw AutodiffError("matrix operand must be a parameter");
  return *nodes_[id].param;
}

std::span<const double> Tape::value(Var v) const { return val(v.id); }

double Tape::scalar_value(Var v) const {
  const auto& x = val(v.id);
  if (x.size() != 1) throw ConfigurationError("scalar_value on a non-scalar node");
  return x[0];
}

Var Tape::row(Var matrix, std::size_t r) {
  const Tensor& m = param_of(matrix.id);
  if (m.shape.size() != 2 || r >= m.rows()) {
    throw ConfigurationError("row index " + std::to_string(r) + " out of range");
  }
  const std::size_t cols = m.cols();
  std::vector<double> out(m.values.begin() + static_cast<std::ptrdiff_t>(r * cols),
                          m.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  const std::size_t mid = matrix.id;
  return push(std::move(out), [mid, r, cols](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    auto& gm = t.grad(mid);
    for (std::size_t j = 0; j < cols; ++j) gm[r * cols + j] += g[j];
  });
}

Var Tape::matvec(Var weights, Var x) {
  const Tensor& w = param_of(weights.id);
  const auto& xv = val(x.id);
  if (w.shape.size() != 2) throw ConfigurationError("matvec: weights must be a matrix");
  const std::size_t rows = w.rows(), cols = w.cols();
  require_same_size(cols, xv.size(), "matvec");
  std::vector<double> out(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* wr = w.values.data() + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += wr[j] * xv[j];
    out[i] = acc;
  }
  const std::size_t wid = weights.id, xid = x.id;
  return push(std::move(out), [wid, xid, rows, cols](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const auto& wv = t.val(wid);
    const auto& xv2 = t.val(xid);
    auto& gw = t.grad(wid);
    auto& gx = t.grad(xid);
    for (std::size_t i = 0; i < rows; ++i) {
      const double gi = g[i];
      if (gi == 0.0) continue;
      const double* wr = wv.data() + i * cols;
      double* gwr = gw.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        gwr[j] += gi * xv2[j];
        gx[j] += gi * wr[j];
      }
    }
  });
}

Var Tape::affine(Var weights, Var x, Var bias) { return add(matvec(weights, x), bias); }

Var Tape::slice(Var v, std::size_t offset, std::size_t length) {
  const auto& x = val(v.id);
  if (offset + length > x.size()) throw ConfigurationError("slice out of range");
  std::vector<double> out(x.begin() + static_cast<std::ptrdiff_t>(offset),
                          x.begin() + static_cast<std::ptrdiff_t>(offset + length));
  const std::size_t vid = v.id;
  return push(std::move(out), [vid, offset, length](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    auto& gv = t.grad(vid);
    for (std::size_t i = 0; i < length; ++i) gv[offset + i] += g[i];
  });
}

Var Tape::add(Var a, Var b) {
  const auto& av = val(a.id);
  const auto& bv = val(b.id);
  require_same_size(av.size(), bv.size(), "add");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return push(std::move(out), [aid, bid](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad(bid);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Var Tape::sub(Var a, Var b) {
  const auto& av = val(a.id);
  const auto& bv = val(b.id);
  require_same_size(av.size(), bv.size(), "sub");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return push(std::move(out), [aid, bid](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad(bid);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var Tape::mul(Var a, Var b) {
  const auto& av = val(a.id);
  const auto& bv = val(b.id);
  require_same_size(av.size(), bv.size(), "mul");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return push(std::move(out), [aid, bid](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const auto& av2 = t.val(aid);
    const auto& bv2 = t.val(bid);
    {
      auto& ga = t.grad(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    auto& gb = t.grad(bid);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
  });
}

Var Tape::sigmoid(Var a) {
  const auto& av = val(a.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
  const std::size_t aid = a.id;
  return push(std::move(out), [aid](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const auto& y = t.nodes_[self].value;
    auto& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var Tape::tanh(Var a) {
  const auto& av = val(a.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  const std::size_t aid = a.id;
  return push(std::move(out), [aid](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const auto& y = t.nodes_[self].value;
    auto& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::square(Var a) {
  const auto& av = val(a.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * av[i];
  const std::size_t aid = a.id;
  return push(std::move(out), [aid](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const auto& x = t.val(aid);
    auto& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
  });
}

Var Tape::scale(Var a, double c) {
  const auto& av = val(a.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * av[i];
  const std::size_t aid = a.id;
  return push(std::move(out), [aid, c](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var Tape::add_constant(Var a, double c) {
  const auto& av = val(a.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  const std::size_t aid = a.id;
  return push(std::move(out), [aid](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var Tape::pick(Var v, std::size_t i) {
  const auto& x = val(v.id);
  if (i >= x.size()) throw ConfigurationError("pick index out of range");
  const std::size_t vid = v.id;
  return push({x[i]}, [vid, i](Tape& t, std::size_t self) {
    t.grad(vid)[i] += t.out_grad(self)[0];
  });
}

Var Tape::sum(std::span<const Var> scalars) {
  double acc = 0.0;
  std::vector<std::size_t> ids;
  ids.reserve(scalars.size());
  for (Var s : scalars) {
    acc += scalar_value(s);
    ids.push_back(s.id);
  }
  return push({acc}, [ids = std::move(ids)](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    for (std::size_t id : ids) t.grad(id)[0] += g;
  });
}

Var Tape::mean(std::span<const Var> scalars) {
  if (scalars.empty()) throw ConfigurationError("mean of an empty set");
  return scale(sum(scalars), 1.0 / static_cast<double>(scalars.size()));
}

Var Tape::masked_log_softmax(Var logits, const ActionMask& mask) {
  const auto& z = val(logits.id);
  require_same_size(z.size(), mask.size(), "masked_log_softmax");
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (mask[i]) peak = std::max(peak, z[i]);
  }
  if (!std::isfinite(peak)) throw DeadEndError("masked_log_softmax: no valid action");
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (mask[i]) total += std::exp(z[i] - peak);
  }
  const double log_norm = peak + std::log(total);
  std::vector<double> out(z.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (mask[i]) out[i] = z[i] - log_norm;
  }
  const std::size_t zid = logits.id;
  return push(std::move(out), [zid, mask](Tape& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const auto& y = t.nodes_[self].value;
    double gsum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (mask[i]) gsum += g[i];
    }
    auto& gz = t.grad(zid);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (mask[i]) gz[i] += g[i] - std::exp(y[i]) * gsum;
    }
  });
}

void Tape::backward(Var root) {
  if (differentiated_) {
    throw AutodiffError("backward called twice on the same tape; reset() it first");
  }
  if (val(root.id).size() != 1) throw AutodiffError("backward root must be a scalar");
  differentiated_ = true;
  for (std::size_t id = 0; id <= root.id; ++id) {
    Node& n = nodes_[id];
    if (!n.param) n.grad.assign(n.value.size(), 0.0);
  }
  grad(root.id)[0] += 1.0;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.propagate) n.propagate(*this, id);
  }
}

void Tape::reset() {
  nodes_.clear();
  differentiated_ = false;
}

}  // namespace reticgen
