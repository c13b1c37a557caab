#include <doctest.h>

#include <cmath>
#include <vector>

#include "rabot/optimizer.hpp"
#include "rabot/tensor.hpp"

using namespace rabot;
using num::Adam;
using num::Tensor;

TEST_CASE("zero gradient leaves parameters untouched") {
  Tensor p = Tensor::param(1, 2, {1.5, -2.5}, "p");
  Adam opt({p}, 0.01);
  p.accumulate_grad({0.0, 0.0});
  opt.step();
  CHECK(p.val()[0] == 1.5);
  CHECK(p.val()[1] == -2.5);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("constant gradient walks the parameter against its sign") {
  Tensor p = Tensor::param(1, 1, {0.0}, "p");
  Adam opt({p}, 0.01);
  double prev = 0.0;
  for (int i = 0; i < 50; ++i) {
    p.accumulate_grad({2.0});
    opt.step();
    CHECK(p.val()[0] < prev);
    prev = p.val()[0];
  }
}

TEST_CASE("first step magnitude is about lr after bias correction") {
  Tensor p = Tensor::param(1, 1, {0.0}, "p");
  Adam opt({p}, 0.001);
  p.accumulate_grad({1.0});
  opt.step();
  // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps).
  CHECK(p.val()[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("step consumes the gradient") {
  Tensor p = Tensor::param(1, 1, {0.0}, "p");
  Adam opt({p}, 0.001);
  p.accumulate_grad({1.0});
  opt.step();
  REQUIRE(p.has_grad());
  CHECK(p.grad()[0] == 0.0);
}

TEST_CASE("missing gradient is a contract error naming the parameter") {
  // from() with requires_grad leaves the grad buffer unallocated until the
  // first accumulation, unlike param() which zero-fills it eagerly.
  Tensor p = Tensor::from(1, 1, {0.0}, true);
  Adam opt({p}, 0.001);
  try {
    opt.step();
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("no gradient buffer") != std::string::npos);
  }
}
