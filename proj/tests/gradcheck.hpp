#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "rabot/rng.hpp"
#include "rabot/tensor.hpp"

namespace testutil {

using rabot::num::Tape;
using rabot::num::Tensor;

// Central finite-difference gradient check. The forward closure must rebuild
// the whole pass from scratch (tapes are single-use); params are shared
// storage, so nudging a value here is visible inside the closure.
inline void check_grads(
    const std::function<Tensor(Tape&, std::vector<Tensor>&)>& forward,
    std::vector<Tensor> params, double h = 1e-5, double tol = 1e-4) {
  for (Tensor& p : params) p.zero_grad();
  Tape tape;
  Tensor loss = forward(tape, params);
  tape.backward(loss);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    REQUIRE(p.has_grad());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.val()[i];
      p.val()[i] = keep + h;
      Tape up_tape;
      const double up = forward(up_tape, params).item();
      p.val()[i] = keep - h;
      Tape dn_tape;
      const double dn = forward(dn_tape, params).item();
      p.val()[i] = keep;
      const double numeric = (up - dn) / (2.0 * h);
      const double analytic = p.grad()[i];
      const double err = std::fabs(analytic - numeric) / std::max(1.0, std::fabs(numeric));
      INFO("param " << pi << " entry " << i << ": analytic " << analytic
                    << " vs numeric " << numeric);
      CHECK(err <= tol);
    }
  }
}

inline Tensor random_tensor(rabot::Rng& rng, int rows, int cols, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = true) {
  std::vector<double> v((std::size_t)rows * cols);
  for (double& x : v) x = rng.uniform(lo, hi);
  return requires_grad ? Tensor::param(rows, cols, std::move(v), "t")
                       : Tensor::from(rows, cols, std::move(v));
}

}  // namespace testutil
