#include "sagda/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sagda/error.hpp"
#include "sagda/rng.hpp"

namespace sagda {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

void Parameter::zero_grad() {
  if (!grad.same_shape(value)) grad = Tensor(value.rows(), value.cols());
  grad.fill(0.0);
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.grad = Tensor(value.rows(), value.cols());
  node.value = std::move(value);
  node.is_leaf = true;
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  Node node;
  node.value = p.value;
  node.grad = Tensor(p.value.rows(), p.value.cols());
  node.is_leaf = true;
  node.requires_grad = true;
  node.bound = &p;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
#ifndef NDEBUG
  require_finite(value, "recorded op");
#endif
  Node node;
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [this](std::size_t i) { return nodes_[i].requires_grad; });
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  axpy(1.0, g, n.grad);
}

Tensor* Tape::grad_target(std::size_t id) {
  Node& n = nodes_[id];
  return n.requires_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss is not on this tape");
  const std::size_t root = loss.id();
  if (!nodes_[root].value.is_scalar()) {
    throw ContractError("backward: loss must be 1x1, got " + nodes_[root].value.shape_string());
  }
  for (std::size_t i = 0; i <= root; ++i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (!n.is_leaf || n.bound != nullptr) n.grad = Tensor(n.value.rows(), n.value.cols());
  }
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad[0] += 1.0;
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
  for (std::size_t i = 0; i <= root; ++i) {
    Node& n = nodes_[i];
    if (n.bound != nullptr) {
      if (!n.bound->grad.same_shape(n.bound->value)) n.bound->zero_grad();
      axpy(1.0, n.grad, n.bound->grad);
    }
  }
}

void backward(Tape& tape, Var loss) { tape.backward(loss); }

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out = a;
  for (double& v : out.data()) v = f(v);
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(matmul(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, matmul_nt(g, tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, matmul_tn(tp.value(ia), g));
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    if (Tensor* gb = tp.grad_target(ib)) axpy(-1.0, tp.grad(self), *gb);
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(hadamard(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, hadamard(g, tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, hadamard(g, tp.value(ia)));
  });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  return a.tape()->record(s * a.value(), {ia}, [ia, s](Tape& tp, std::size_t self) {
    if (Tensor* ga = tp.grad_target(ia)) axpy(s, tp.grad(self), *ga);
  });
}

Var add_scalar(Var a, double s) {
  const std::size_t ia = a.id();
  return a.tape()->record(map(a.value(), [s](double v) { return v + s; }), {ia},
                          [ia](Tape& tp, std::size_t self) { tp.accumulate(ia, tp.grad(self)); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape()->record(transpose(a.value()), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, transpose(tp.grad(self)));
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b, "concat_cols");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: row mismatch " + av.shape_string() + " vs " +
                         bv.shape_string());
  }
  Tensor out(av.rows(), av.cols() + bv.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    std::copy(av.row(i).begin(), av.row(i).end(), out.row(i).begin());
    std::copy(bv.row(i).begin(), bv.row(i).end(),
              out.row(i).begin() + static_cast<std::ptrdiff_t>(av.cols()));
  }
  const std::size_t ia = a.id(), ib = b.id(), split = av.cols();
  return t.record(std::move(out), {ia, ib}, [ia, ib, split](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, slice_cols(g, 0, split));
    if (tp.requires_grad(ib)) tp.accumulate(ib, slice_cols(g, split, g.cols()));
  });
}

Var concat_rows(Var a, Var b) {
  Tape& t = same_tape(a, b, "concat_rows");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("concat_rows: column mismatch " + av.shape_string() + " vs " +
                         bv.shape_string());
  }
  std::vector<double> data(av.data().begin(), av.data().end());
  data.insert(data.end(), bv.data().begin(), bv.data().end());
  const std::size_t ia = a.id(), ib = b.id(), split = av.rows();
  return t.record(Tensor(av.rows() + bv.rows(), av.cols(), std::move(data)), {ia, ib},
                  [ia, ib, split](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    if (tp.requires_grad(ia)) tp.accumulate(ia, slice_rows(g, 0, split));
                    if (tp.requires_grad(ib)) tp.accumulate(ib, slice_rows(g, split, g.rows()));
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const std::size_t ia = a.id();
  return a.tape()->record(slice_cols(a.value(), begin, end), {ia},
                          [ia, begin](Tape& tp, std::size_t self) {
                            Tensor* ga = tp.grad_target(ia);
                            if (!ga) return;
                            const Tensor& g = tp.grad(self);
                            for (std::size_t i = 0; i < g.rows(); ++i)
                              for (std::size_t j = 0; j < g.cols(); ++j)
                                (*ga)(i, begin + j) += g(i, j);
                          });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row, "add_row");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: " + av.shape_string() + " + broadcast " + rv.shape_string());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv(0, j);
  const std::size_t ia = a.id(), ir = row.id();
  return t.record(std::move(out), {ia, ir}, [ia, ir](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    tp.accumulate(ia, g);
    if (Tensor* gr = tp.grad_target(ir)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gr)(0, j) += g(i, j);
    }
  });
}

Var scale_rows(Var a, Var column) {
  Tape& t = same_tape(a, column, "scale_rows");
  const Tensor& av = a.value();
  const Tensor& cv = column.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    throw DimensionError("scale_rows: " + av.shape_string() + " by column " + cv.shape_string());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& v : out.row(i)) v *= cv(i, 0);
  const std::size_t ia = a.id(), ic = column.id();
  return t.record(std::move(out), {ia, ic}, [ia, ic](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& c = tp.value(ic);
    if (Tensor* ga = tp.grad_target(ia)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, j) += g(i, j) * c(i, 0);
    }
    if (Tensor* gc = tp.grad_target(ic)) {
      const Tensor& av2 = tp.value(ia);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) acc += g(i, j) * av2(i, j);
        (*gc)(i, 0) += acc;
      }
    }
  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return map(a, [slope](double v) { return v > 0.0 ? v : slope * v; });
}

Var leaky_relu(Var a, double slope) {
  const std::size_t ia = a.id();
  return a.tape()->record(leaky_relu(a.value(), slope), {ia},
                          [ia, slope](Tape& tp, std::size_t self) {
                            Tensor* ga = tp.grad_target(ia);
                            if (!ga) return;
                            const Tensor& g = tp.grad(self);
                            const Tensor& x = tp.value(ia);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              (*ga)[i] += x[i] > 0.0 ? g[i] : slope * g[i];
                          });
}

Var sigmoid(Var a) {
  const std::size_t ia = a.id();
  Tensor out = map(a.value(), [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    Tensor* ga = tp.grad_target(ia);
    if (!ga) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var log(Var a) {
  const std::size_t ia = a.id();
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive argument");
  }
  return a.tape()->record(map(a.value(), [](double v) { return std::log(v); }), {ia},
                          [ia](Tape& tp, std::size_t self) {
                            Tensor* ga = tp.grad_target(ia);
                            if (!ga) return;
                            const Tensor& g = tp.grad(self);
                            const Tensor& x = tp.value(ia);
                            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / x[i];
                          });
}

Var clamped_log(Var a, double floor) {
  const std::size_t ia = a.id();
  return a.tape()->record(map(a.value(), [floor](double v) { return std::log(std::max(v, floor)); }),
                          {ia}, [ia, floor](Tape& tp, std::size_t self) {
                            Tensor* ga = tp.grad_target(ia);
                            if (!ga) return;
                            const Tensor& g = tp.grad(self);
                            const Tensor& x = tp.value(ia);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              if (x[i] > floor) (*ga)[i] += g[i] / x[i];
                          });
}

Tensor rowwise_softmax(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto o = out.row(i);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - m);
      z += o[j];
    }
    for (double& v : o) v /= z;
  }
  return out;
}

Var rowwise_softmax(Var a) {
  if (a.value().empty()) throw ContractError("rowwise_softmax: empty input");
  const std::size_t ia = a.id();
  return a.tape()->record(rowwise_softmax(a.value()), {ia}, [ia](Tape& tp, std::size_t self) {
    Tensor* ga = tp.grad_target(ia);
    if (!ga) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const Tensor& av = a.value();
  if (av.empty()) throw ContractError("log_softmax_rows: empty input");
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    auto in = av.row(i);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (double v : in) z += std::exp(v - m);
    const double lse = m + std::log(z);
    for (std::size_t j = 0; j < in.size(); ++j) out(i, j) = in[j] - lse;
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    Tensor* ga = tp.grad_target(ia);
    if (!ga) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) gs += g(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, j) += g(i, j) - std::exp(y(i, j)) * gs;
    }
  });
}

Var dropout(Var a, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) {
    const std::size_t ia = a.id();
    return a.tape()->record(a.value(), {ia},
                            [ia](Tape& tp, std::size_t self) { tp.accumulate(ia, tp.grad(self)); });
  }
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(a.rows(), a.cols());
  for (double& m : mask.data()) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out = hadamard(a.value(), mask);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {ia},
                          [ia, mask = std::move(mask)](Tape& tp, std::size_t self) {
                            if (tp.requires_grad(ia)) tp.accumulate(ia, hadamard(tp.grad(self), mask));
                          });
}

Var sum(Var a) {
  const std::size_t ia = a.id();
  Tensor out(1, 1);
  out[0] = sum(a.value());
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    Tensor* ga = tp.grad_target(ia);
    if (!ga) return;
    const double g = tp.grad(self)[0];
    for (double& v : ga->data()) v += g;
  });
}

Var mean(Var a) {
  if (a.value().empty()) throw ContractError("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var row_sum(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (double v : av.row(i)) out(i, 0) += v;
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    Tensor* ga = tp.grad_target(ia);
    if (!ga) return;
    const Tensor& g = tp.grad(self);
    for (std::size_t i = 0; i < ga->rows(); ++i)
      for (double& v : ga->row(i)) v += g(i, 0);
  });
}

Var pick(Var a, std::span<const int> index) {
  const Tensor& av = a.value();
  if (index.size() != av.rows()) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " +
                         av.shape_string());
  }
  std::vector<int> idx(index.begin(), index.end());
  Tensor out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= av.cols()) {
      throw ContractError("pick: index " + std::to_string(idx[i]) + " out of range at row " +
                          std::to_string(i));
    }
    out(i, 0) = av(i, static_cast<std::size_t>(idx[i]));
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {ia},
                          [ia, idx = std::move(idx)](Tape& tp, std::size_t self) {
                            Tensor* ga = tp.grad_target(ia);
                            if (!ga) return;
                            const Tensor& g = tp.grad(self);
                            for (std::size_t i = 0; i < idx.size(); ++i)
                              (*ga)(i, static_cast<std::size_t>(idx[i])) += g(i, 0);
                          });
}

Var grl(Var a) {
  const std::size_t ia = a.id();
  return a.tape()->record(a.value(), {ia}, [ia](Tape& tp, std::size_t self) {
    if (Tensor* ga = tp.grad_target(ia)) axpy(-1.0, tp.grad(self), *ga);
  });
}

}  // namespace sagda
