#pragma once

#include <vector>

#include "rabot/tensor.hpp"

namespace rabot::num {

// Bias-corrected adaptive-moment (Adam) optimizer over a fixed parameter
// list. step() consumes and zeroes the accumulated gradients.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();

  double lr() const { return lr_; }
  long step_count() const { return step_count_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;  // first moments, per parameter
  std::vector<std::vector<double>> v_;  // second moments
  double lr_, beta1_, beta2_, eps_;
  long step_count_ = 0;
};

}  // namespace rabot::num
