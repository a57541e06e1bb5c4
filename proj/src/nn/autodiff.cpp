#include "vdnapr/nn/autodiff.hpp"

#include <cmath>

#include "vdnapr/error.hpp"
#include "vdnapr/nn/kernels.hpp"

namespace vdnapr::nn {

const Tensor& Var::value() const {
  if (!tape_) fail(ErrorKind::GraphError, "value() on an unrecorded Var");
  return tape_->value(id_);
}

const Tensor& Var::grad() const {
  if (!tape_) fail(ErrorKind::GraphError, "grad() on an unrecorded Var");
  return tape_->grad_or_empty(id_);
}

Var Tape::constant(Tensor value) { return push(std::move(value), {}, nullptr); }

Var Tape::parameter(Parameter& p) {
  Var v = push(p.value, {}, nullptr);
  nodes_.back().param = &p;
  nodes_.back().requires_grad = true;
  return v;
}

Var Tape::push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (auto i : inputs)
    if (i >= nodes_.size()) fail(ErrorKind::GraphError, "input node does not exist");
  for (auto i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  n.inputs = std::move(inputs);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  auto& n = nodes_.at(id);
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::check(const Var& v) const {
  if (!v.valid()) fail(ErrorKind::GraphError, "Var was never recorded by a forward pass");
  if (v.tape() != this) fail(ErrorKind::GraphError, "Var belongs to a different tape");
  if (v.id() >= nodes_.size()) fail(ErrorKind::GraphError, "Var refers to a cleared tape");
}

void Tape::backward(const Var& loss) {
  if (nodes_.empty()) fail(ErrorKind::GraphError, "backward() before any forward pass");
  check(loss);
  if (nodes_[loss.id()].value.size() != 1) fail(ErrorKind::GraphError, "backward() needs a scalar loss");
  for (auto& n : nodes_) n.grad = Tensor();
  grad(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      auto& pg = n.param->grad;
      if (pg.shape() != n.value.shape()) pg = Tensor(n.value.shape());
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  pattern_.clear();
}

namespace {

Tape& common_tape(std::initializer_list<const Var*> vars) {
  Tape* tape = nullptr;
  for (const Var* v : vars) {
    if (!v->valid()) fail(ErrorKind::GraphError, "op input was never recorded");
    if (tape && v->tape() != tape) fail(ErrorKind::GraphError, "op inputs live on different tapes");
    tape = v->tape();
  }
  for (const Var* v : vars) tape->check(*v);
  return *tape;
}

Tensor* grad_if(Tape& t, std::size_t id) { return t.needs_grad(id) ? &t.grad(id) : nullptr; }

}  // namespace

Var conv1d(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t padding) {
  Tape& t = common_tape({&x, &w, &b});
  Tensor y = kernels::conv1d(x.value(), w.value(), b.value(), stride, padding);
  return t.push(std::move(y), {x.id(), w.id(), b.id()}, [stride, padding](Tape& tp, std::size_t self) {
    const auto& in = tp.inputs(self);
    const auto g = kernels::conv1d_geometry(tp.value(in[0]).shape(), tp.value(in[1]).shape(), tp.value(in[2]).shape(),
                                            stride, padding);
    kernels::conv1d_backward(g, tp.value(in[0]), tp.value(in[1]), tp.grad(self), grad_if(tp, in[0]),
                             grad_if(tp, in[1]), grad_if(tp, in[2]));
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  Tape& t = common_tape({&x, &w, &b});
  Tensor y = kernels::linear(x.value(), w.value(), b.value());
  return t.push(std::move(y), {x.id(), w.id(), b.id()}, [](Tape& tp, std::size_t self) {
    const auto& in = tp.inputs(self);
    kernels::linear_backward(tp.value(in[0]), tp.value(in[1]), tp.grad(self), grad_if(tp, in[0]), grad_if(tp, in[1]),
                             grad_if(tp, in[2]));
  });
}

Var matmul(const Var& x, const Var& w) {
  Tape& t = common_tape({&x, &w});
  Tensor y = kernels::matmul(x.value(), w.value());
  return t.push(std::move(y), {x.id(), w.id()}, [](Tape& tp, std::size_t self) {
    const auto& in = tp.inputs(self);
    kernels::matmul_backward(tp.value(in[0]), tp.value(in[1]), tp.grad(self), grad_if(tp, in[0]), grad_if(tp, in[1]));
  });
}

Var relu(const Var& x) {
  Tape& t = common_tape({&x});
  Tensor y = x.value();
  kernels::relu_inplace(y);
  for (double v : x.value().data()) t.record_branch(v > 0.0 ? 1 : 0);
  return t.push(std::move(y), {x.id()}, [](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    if (!tp.needs_grad(in)) return;
    const Tensor& xv = tp.value(in);
    const Tensor& gy = tp.grad(self);
    Tensor& gx = tp.grad(in);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > 0.0) gx[i] += gy[i];
  });
}

Var l2_normalize_rows(const Var& x) {
  Tape& t = common_tape({&x});
  std::vector<double> norms;
  Tensor y = kernels::l2_normalize_rows(x.value(), &norms);
  for (double n : norms) t.record_branch(n < kernels::kNormEpsilon ? 1 : 0);
  return t.push(std::move(y), {x.id()}, [norms = std::move(norms)](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    if (!tp.needs_grad(in)) return;
    const Tensor& yv = tp.value(self);
    const Tensor& gy = tp.grad(self);
    Tensor& gx = tp.grad(in);
    const std::size_t rows = yv.dim(0), n = yv.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      if (norms[r] < kernels::kNormEpsilon) continue;
      const double* yr = yv.data().data() + r * n;
      const double* gr = gy.data().data() + r * n;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += yr[i] * gr[i];
      double* gxr = gx.data().data() + r * n;
      for (std::size_t i = 0; i < n; ++i) gxr[i] += (gr[i] - yr[i] * dot) / norms[r];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tape& t = common_tape({&x});
  Tensor y = x.value().reshaped(std::move(shape));
  return t.push(std::move(y), {x.id()}, [](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    if (!tp.needs_grad(in)) return;
    const Tensor& gy = tp.grad(self);
    Tensor& gx = tp.grad(in);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

Var row(const Var& x, std::size_t index) {
  Tape& t = common_tape({&x});
  const Tensor& xv = x.value();
  if (xv.rank() != 2) fail(ErrorKind::ShapeError, "row() needs a 2D tensor, got " + shape_string(xv.shape()));
  if (index >= xv.dim(0)) fail(ErrorKind::ShapeError, "row index out of range");
  const std::size_t n = xv.dim(1);
  std::vector<double> data(xv.data().begin() + index * n, xv.data().begin() + (index + 1) * n);
  return t.push(Tensor(Shape{n}, std::move(data)), {x.id()}, [index, n](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    if (!tp.needs_grad(in)) return;
    const Tensor& gy = tp.grad(self);
    Tensor& gx = tp.grad(in);
    for (std::size_t i = 0; i < n; ++i) gx[index * n + i] += gy[i];
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = common_tape({&a, &b});
  if (a.shape() != b.shape())
    fail(ErrorKind::ShapeError, "add shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return t.push(std::move(y), {a.id(), b.id()}, [](Tape& tp, std::size_t self) {
    for (std::size_t in : tp.inputs(self)) {
      if (!tp.needs_grad(in)) continue;
      const Tensor& gy = tp.grad(self);
      Tensor& gx = tp.grad(in);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = common_tape({&a, &b});
  if (a.shape() != b.shape())
    fail(ErrorKind::ShapeError, "mul shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return t.push(std::move(y), {a.id(), b.id()}, [](Tape& tp, std::size_t self) {
    const auto in = tp.inputs(self);
    const Tensor& gy = tp.grad(self);
    for (int side = 0; side < 2; ++side) {
      if (!tp.needs_grad(in[side])) continue;
      const Tensor& other = tp.value(in[1 - side]);
      Tensor& gx = tp.grad(in[side]);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * other[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tape& t = common_tape({&x});
  Tensor y = x.value();
  for (auto& v : y.data()) v *= factor;
  return t.push(std::move(y), {x.id()}, [factor](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    if (!tp.needs_grad(in)) return;
    const Tensor& gy = tp.grad(self);
    Tensor& gx = tp.grad(in);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
  });
}

Var sum(const Var& x) {
  Tape& t = common_tape({&x});
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return t.push(Tensor::scalar(s), {x.id()}, [](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    if (!tp.needs_grad(in)) return;
    const double g = tp.grad(self)[0];
    for (auto& v : tp.grad(in).data()) v += g;
  });
}

Var mean(std::span<const Var> scalars) {
  if (scalars.empty()) fail(ErrorKind::ShapeError, "mean of no values");
  Var acc = scalars[0];
  for (std::size_t i = 1; i < scalars.size(); ++i) acc = add(acc, scalars[i]);
  return scale(acc, 1.0 / static_cast<double>(scalars.size()));
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

double triplet_loss_value(std::span<const double> anchor, std::span<const double> positive,
                          std::span<const std::span<const double>> negatives, double margin) {
  if (negatives.empty()) fail(ErrorKind::ShapeError, "triplet loss needs at least one negative");
  if (margin < 0.0) fail(ErrorKind::ConfigError, "triplet margin must be >= 0");
  if (positive.size() != anchor.size()) fail(ErrorKind::ShapeError, "triplet dimension mismatch");
  const double dp = squared_distance(anchor, positive);
  double total = 0.0;
  for (const auto& n : negatives) {
    if (n.size() != anchor.size()) fail(ErrorKind::ShapeError, "triplet dimension mismatch");
    total += std::max(0.0, dp - squared_distance(anchor, n) + margin);
  }
  return total / static_cast<double>(negatives.size());
}

Var triplet_loss(const Var& anchor, const Var& positive, std::span<const Var> negatives, double margin) {
  if (negatives.empty()) fail(ErrorKind::ShapeError, "triplet loss needs at least one negative");
  if (margin < 0.0) fail(ErrorKind::ConfigError, "triplet margin must be >= 0");
  Tape& t = common_tape({&anchor, &positive});
  for (const auto& n : negatives) {
    if (n.tape() != &t) fail(ErrorKind::GraphError, "op inputs live on different tapes");
    t.check(n);
  }
  const std::size_t dim = anchor.value().size();
  if (anchor.value().rank() != 1 || positive.value().shape() != anchor.value().shape())
    fail(ErrorKind::ShapeError, "triplet anchor/positive must be equal-length vectors");
  for (const auto& n : negatives)
    if (n.value().shape() != anchor.value().shape()) fail(ErrorKind::ShapeError, "triplet negative dimension mismatch");

  const auto a = anchor.value().data();
  const double dp = squared_distance(a, positive.value().data());
  std::vector<std::uint8_t> active(negatives.size());
  double total = 0.0;
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    const double h = dp - squared_distance(a, negatives[k].value().data()) + margin;
    active[k] = h > 0.0 ? 1 : 0;
    t.record_branch(active[k]);
    if (active[k]) total += h;
  }
  const double inv_k = 1.0 / static_cast<double>(negatives.size());
  std::vector<std::size_t> inputs{anchor.id(), positive.id()};
  for (const auto& n : negatives) inputs.push_back(n.id());
  return t.push(Tensor::scalar(total * inv_k), std::move(inputs),
                [active = std::move(active), inv_k, dim](Tape& tp, std::size_t self) {
                  const auto in = tp.inputs(self);
                  const double g = tp.grad(self)[0] * inv_k;
                  const Tensor& av = tp.value(in[0]);
                  const Tensor& pv = tp.value(in[1]);
                  Tensor* ga = grad_if(tp, in[0]);
                  Tensor* gp = grad_if(tp, in[1]);
                  for (std::size_t k = 0; k < active.size(); ++k) {
                    if (!active[k]) continue;
                    const Tensor& nv = tp.value(in[2 + k]);
                    Tensor* gn = grad_if(tp, in[2 + k]);
                    for (std::size_t i = 0; i < dim; ++i) {
                      const double dap = av[i] - pv[i];
                      const double dan = av[i] - nv[i];
                      if (ga) (*ga)[i] += g * 2.0 * (dap - dan);
                      if (gp) (*gp)[i] -= g * 2.0 * dap;
                      if (gn) (*gn)[i] += g * 2.0 * dan;
                    }
                  }
                });
}

}  // namespace vdnapr::nn
