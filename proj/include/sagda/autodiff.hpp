#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sagda/tensor.hpp"

namespace sagda {

/// A trainable tensor that outlives any single tape. Tapes bind parameters
/// through Tape::param and add their gradient contribution into `grad` on
/// every backward pass; callers zero it between optimizer steps.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);
  void zero_grad();
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid for the
/// lifetime of the tape that produced it.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of dense operations.
///
/// Nodes are appended in execution order, so the index order is a topological
/// order and backward is a single reverse sweep that visits every node once.
/// Non-leaf gradients are reset at the start of each backward call; leaf
/// gradients (Tape::leaf) and bound Parameter gradients accumulate.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);
  Var param(Parameter& p);

  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Adds `g` into the gradient of node `id` if that node tracks gradients.
  void accumulate(std::size_t id, const Tensor& g);
  // Mutable access for kernels that accumulate in place.
  Tensor* grad_target(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    Parameter* bound = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  // deque: appending keeps references returned by value()/grad() valid.
  std::deque<Node> nodes_;
};

// ---- recorded operations -------------------------------------------------
// All ops require their inputs to live on the same tape.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
Var transpose(Var a);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
// a (n x m) plus a broadcast 1 x m row.
Var add_row(Var a, Var row);
// Scales row i of a (n x m) by column(i, 0) of an n x 1 tensor.
Var scale_rows(Var a, Var column);

Var leaky_relu(Var a, double slope = 0.2);
Var sigmoid(Var a);
Var log(Var a);
// log(max(a, floor)); the gradient is zero where the clamp is active.
Var clamped_log(Var a, double floor);
Var rowwise_softmax(Var a);
Var log_softmax_rows(Var a);

// Inverted dropout: kept entries are scaled by 1/(1-rate). The mask is drawn
// from `seed` alone so that a forward pass can be replayed exactly.
Var dropout(Var a, double rate, std::uint64_t seed);

Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);  // n x m -> n x 1
// out(i) = a(i, index[i]), n x 1.
Var pick(Var a, std::span<const int> index);

// Gradient reversal: identity forward, negated gradient backward.
Var grl(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

void backward(Tape& tape, Var loss);

// Plain rowwise softmax with max-shift, for inference paths off the tape.
Tensor rowwise_softmax(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);

}  // namespace sagda
