#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "s2cast/tensor.hpp"

namespace s2cast::nn {

/// A learnable array and its accumulated gradient.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() { grad.fill(Real{0}); }
};

/// Owns parameters at stable addresses, in declaration order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  /// Total scalar count over all parameters.
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient after Tape::backward; empty when nothing flowed here.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of executed ops. backward() visits them in exact reverse order.
class Tape {
 public:
  /// Called with the tape and the id of the node whose gradient is being propagated.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input that never receives gradient.
  Var constant(Tensor value);
  /// Input whose gradient is kept on the tape (readable through Var::grad).
  Var variable(Tensor value);
  /// Parameter leaf; backward() adds the leaf gradient into Parameter::grad.
  Var param(Parameter& p);

  /// Appends an op result. Throws NumericalError if `value` holds NaN or Inf.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);

  /// Reverse sweep from a scalar `loss`; parameter gradients accumulate across calls.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of node `id`, zero-allocated on first use.
  Tensor& grad(std::size_t id);
  const Tensor& grad_or_empty(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);
  void check_owned(const Var& v) const;

  std::deque<Node> nodes_;
};

}  // namespace s2cast::nn
