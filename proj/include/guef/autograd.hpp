#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "guef/tensor.hpp"

namespace guef {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while its Tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records primitive operations in creation order, which is a topological order,
/// and replays them backwards to accumulate gradients.
class Tape {
 public:
  using Backward = std::function<void(const Tensor& out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  /// Appends a node. `fn` receives the output gradient and must call accumulate() on parents.
  Var record(Tensor value, std::vector<Var> parents, Backward fn);

  void backward(Var output);
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

  /// Adds `g` into the gradient buffer of `v` (no-op for constants).
  void accumulate(Var v, const Tensor& g);
  void accumulate(Var v, std::size_t index, double g);
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t backward_visits() const noexcept { return backward_visits_; }

 private:
  friend class Var;
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward fn;
  };
  Tensor& grad_buffer(std::size_t id);

  std::vector<Node> nodes_;
  std::size_t backward_visits_ = 0;
};

enum class Padding { kValid, kSame };

// Differentiable primitives. Binary elementwise ops broadcast rank-2 operands along
// any axis of extent 1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);
/// x: C_in x W, weight: C_out x C_in x K, bias: C_out x 1. Cross-correlation.
Var conv1d(Var x, Var weight, Var bias, Padding padding);
Var concat_rows(Var a, Var b);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var reshape(Var a, Tensor::Shape shape);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var col_mean(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var abs(Var a);
/// exp(clamp(x, -limit, limit)); gradient is zero where the clamp is active.
Var exp_clipped(Var a, double limit = 10.0);
/// log(max(x, floor)); gradient is zero where the floor is active.
Var log_floor(Var a, double floor = 1e-12);
Var clamp_min(Var a, double floor);
Var softmax_rows(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }

/// Indices of the k largest values, ties broken by lower index, in selection order.
std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k);

using ScalarProgram = std::function<Var(Tape&, std::span<const Var>)>;

/// Reverse-mode gradient of a scalar program with respect to each input tensor.
std::vector<Tensor> grad(const ScalarProgram& f, std::span<const Tensor> inputs);

/// Central differences (f(x+h) - f(x-h)) / 2h per coordinate of x.
Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double step);

/// Evaluates a scalar program without recording gradients.
double evaluate(const ScalarProgram& f, std::span<const Tensor> inputs);

}  // namespace guef
