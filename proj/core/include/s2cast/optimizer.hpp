#pragma once

#include <cstdint>
#include <vector>

#include "s2cast/tape.hpp"

namespace s2cast::nn {

/// Plain gradient descent on every trainable parameter.
void sgd_step(ParameterStore& params, Real lr);

struct AdamConfig {
  Real lr = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
};

/// Adam with bias correction. Frozen parameters (trainable == false) are skipped.
class Adam {
 public:
  Adam(ParameterStore& params, AdamConfig config);

  void step();
  std::int64_t steps() const { return t_; }

 private:
  ParameterStore* params_;
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace s2cast::nn
