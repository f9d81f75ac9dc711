#include "s2cast/optimizer.hpp"

#include <cmath>

namespace s2cast::nn {

void sgd_step(ParameterStore& params, Real lr) {
  for (auto& p : params) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
  }
}

Adam::Adam(ParameterStore& params, AdamConfig config) : params_(&params), config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

void Adam::step() {
  ++t_;
  const Real c1 = Real{1} - std::pow(config_.beta1, static_cast<Real>(t_));
  const Real c2 = Real{1} - std::pow(config_.beta2, static_cast<Real>(t_));
  std::size_t k = 0;
  for (auto& p : *params_) {
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const Real g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (Real{1} - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (Real{1} - config_.beta2) * g * g;
      const Real mhat = m[i] / c1;
      const Real vhat = v[i] / c2;
      p.value[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace s2cast::nn
