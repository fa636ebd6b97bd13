#pragma once

// Minimal dense tensors with a reverse-mode tape.
//
// A Tape owns every value produced while it is alive. Ops are free functions
// over Vars; each records its output and a closure that pushes the output
// gradient back to its inputs. Tapes are single-owner: build one per forward
// pass, call backward() once, then discard it.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "consor/rng.hpp"

namespace consor::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  /// Row-major 2-D access.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// A named learnable array and its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

enum class Mode { Train, Eval };

class Tape;

class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  /// Gradient after backward(); zeros if the var is off the loss ancestry.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradSink {
  Accumulate,  // backward() adds parameter gradients into Parameter::grad
  Deferred,    // kept on the tape until flush_parameter_grads()
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Differentiable leaf; its gradient is read back through Var::grad().
  Var variable(Tensor value);
  /// Leaf bound to a Parameter. Repeated calls return the same Var.
  Var parameter(Parameter& p);

  /// Throws Error(NotScalarLoss) / Error(DanglingTape).
  void backward(const Var& loss, GradSink sink = GradSink::Accumulate);
  void flush_parameter_grads();

  std::size_t size() const { return nodes_.size(); }

  // ---- for op implementations ----
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  Tensor& grad(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Throws Error(DanglingTape) unless `v` was recorded on this tape.
  void check(const Var& v) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
  std::map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
  friend class Var;
};

// ---- primitive ops --------------------------------------------------------
// Shapes: matmul is 2-D; add/sub/mul accept equal shapes or a rank-1 right
// operand broadcast over rows; axis ops accept any rank.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);
Var relu(const Var& a);
Var softmax(const Var& a, std::size_t axis);
/// (x - mean) / sqrt(var + eps) along `axis`; no affine part.
Var layer_norm(const Var& a, std::size_t axis, double eps = 1e-5);
/// Inverted dropout. Identity in Eval mode or when rate == 0.
Var dropout(const Var& a, double rate, Rng& rng, Mode mode);
/// x / max(||x||, eps) along `axis`.
Var l2_normalize(const Var& a, std::size_t axis, double eps = 1e-5);
Var sum(const Var& a);
Var mean(const Var& a);
/// Rows of a 2-D tensor, by index (repeats allowed).
Var gather_rows(const Var& a, std::vector<std::size_t> rows);
/// Euclidean norm of each row of a 2-D tensor -> shape [rows].
Var row_norms(const Var& a);

}  // namespace consor::ad
