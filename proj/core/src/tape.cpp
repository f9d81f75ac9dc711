#include "s2cast/tape.hpp"

#include <algorithm>
#include <stdexcept>

#include "s2cast/error.hpp"

namespace s2cast::nn {

Parameter::Parameter(std::string name_in, Tensor value_in)
    : name(std::move(name_in)), value(std::move(value_in)), grad(value.shape()) {}

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter& ParameterStore::get(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Parameter& ParameterStore::get(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.size();
  return total;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("value() on an empty Var");
  return tape_->value(id_);
}

const Tensor& Var::grad() const {
  if (!tape_) throw std::logic_error("grad() on an empty Var");
  return tape_->grad_or_empty(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(const Var& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::logic_error("Var does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericalError("constant input holds non-finite values");
  return push(Node{"constant", std::move(value), {}, false, nullptr, {}});
}

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NumericalError("variable input holds non-finite values");
  return push(Node{"variable", std::move(value), {}, true, nullptr, {}});
}

Var Tape::param(Parameter& p) {
  return push(Node{"param:" + p.name, p.value, {}, p.trainable, &p, {}});
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.id_].requires_grad;
  }
  if (!value.all_finite()) {
    throw NumericalError("op '" + std::string(op) + "' produced a non-finite value");
  }
  Node node{std::string(op), std::move(value), {}, needs, nullptr, {}};
  if (needs) node.backward = std::move(backward);
  return push(std::move(node));
}

Tensor& Tape::grad(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.size() != node.value.size()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (nodes_.empty() || !loss.valid()) throw std::logic_error("backward called before forward");
  check_owned(loss);
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                to_string(loss.value().shape()));
  }
  for (auto& node : nodes_) {
    if (!node.grad.empty()) node.grad.fill(Real{0});
  }
  grad(loss.id_)[0] = Real{1};
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, id);
    if (node.param) {
      auto& target = node.param->grad;
      if (target.size() != node.grad.size()) target = Tensor(node.value.shape());
      for (std::size_t i = 0; i < target.size(); ++i) target[i] += node.grad[i];
      if (!target.all_finite()) {
        throw NumericalError("non-finite gradient for parameter '" + node.param->name + "'");
      }
    }
  }
}

}  // namespace s2cast::nn
