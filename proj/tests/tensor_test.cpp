#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "rabot/rng.hpp"
#include "rabot/tensor.hpp"

using namespace rabot;
using num::Tape;
using num::Tensor;
using testutil::check_grads;
using testutil::random_tensor;

TEST_CASE("matmul identity and scalar products") {
  Tape t;
  Tensor eye = Tensor::from(2, 2, {1, 0, 0, 1});
  Tensor b = Tensor::from(2, 2, {3, 4, 5, 6});
  Tensor r = num::matmul(t, eye, b);
  CHECK(r.val() == b.val());

  Tensor s = num::matmul(t, Tensor::from(1, 1, {2}), Tensor::from(1, 1, {3}));
  CHECK(s.item() == doctest::Approx(6.0));
}

TEST_CASE("matmul matches a triple-loop oracle") {
  Rng rng(11);
  Tensor a = random_tensor(rng, 3, 4, -2, 2, false);
  Tensor b = random_tensor(rng, 4, 2, -2, 2, false);
  Tape t;
  Tensor r = num::matmul(t, a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double want = 0;
      for (int k = 0; k < 4; ++k) want += a.at(i, k) * b.at(k, j);
      CHECK(r.at(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("matmul rejects mismatched inner dims") {
  Tape t;
  Tensor a = Tensor::zeros(2, 3);
  Tensor b = Tensor::zeros(2, 2);
  CHECK_THROWS_AS(num::matmul(t, a, b), DimensionError);
}

TEST_CASE("sigmoid closed-form points") {
  Tape t;
  CHECK(num::sigmoid(t, Tensor::scalar(0.0)).item() == doctest::Approx(0.5));
  const double big = num::sigmoid(t, Tensor::scalar(50.0)).item();
  CHECK(big > 0.0);
  CHECK(big <= 1.0);
  CHECK(num::sigmoid(t, Tensor::scalar(std::log(3.0))).item() == doctest::Approx(0.75));
}

TEST_CASE("softmax rows: symmetry, stability, closed form") {
  Tape t;
  Tensor flat = num::softmax_rows(t, Tensor::from(1, 2, {0, 0}));
  CHECK(flat.at(0, 0) == doctest::Approx(0.5));

  Tensor hot = num::softmax_rows(t, Tensor::from(1, 2, {1000, 0}));
  CHECK(std::isfinite(hot.at(0, 0)));
  CHECK(hot.at(0, 0) == doctest::Approx(1.0));
  CHECK(hot.at(0, 1) == doctest::Approx(0.0));

  Tensor thirds = num::softmax_rows(
      t, Tensor::from(1, 3, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(thirds.at(0, 0) == doctest::Approx(1.0 / 6).epsilon(1e-9));
  CHECK(thirds.at(0, 1) == doctest::Approx(2.0 / 6).epsilon(1e-9));
  CHECK(thirds.at(0, 2) == doctest::Approx(3.0 / 6).epsilon(1e-9));
}

TEST_CASE("softmax rows sum to one and shrug off row shifts") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor(rng, 4, 5, -3, 3, false);
    Tape t;
    Tensor y = num::softmax_rows(t, x);
    for (int i = 0; i < 4; ++i) {
      double sum = 0;
      for (int j = 0; j < 5; ++j) sum += y.at(i, j);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
    Tensor shifted = x.clone();
    for (int j = 0; j < 5; ++j) shifted.at(2, j) += 7.25;
    Tape t2;
    Tensor y2 = num::softmax_rows(t2, shifted);
    for (int j = 0; j < 5; ++j)
      CHECK(y2.at(2, j) == doctest::Approx(y.at(2, j)).epsilon(1e-9));
  }
}

TEST_CASE("l1 distance basics and loop oracle") {
  Tape t;
  Tensor a = Tensor::from(1, 3, {1, 2, 3});
  CHECK(num::l1_distance(t, a, a).item() == doctest::Approx(0.0));
  CHECK(num::l1_distance(t, Tensor::from(1, 1, {0.2}), Tensor::from(1, 1, {0.9})).item() ==
        doctest::Approx(0.7));

  Rng rng(7);
  Tensor x = random_tensor(rng, 3, 4, -2, 2, false);
  Tensor y = random_tensor(rng, 3, 4, -2, 2, false);
  double want = 0;
  for (std::size_t i = 0; i < x.size(); ++i) want += std::fabs(x.val()[i] - y.val()[i]);
  CHECK(num::l1_distance(t, x, y).item() == doctest::Approx(want).epsilon(1e-12));

  CHECK_THROWS_AS(num::l1_distance(t, x, Tensor::zeros(2, 2)), DimensionError);
}

TEST_CASE("backward: linear loss has the input as gradient") {
  Tensor w = Tensor::param(2, 2, {0.5, -1, 2, 3}, "w");
  Tensor x = Tensor::from(2, 1, {4, 7});
  Tape t;
  Tensor loss = num::sum_all(t, num::matmul(t, w, x));
  t.backward(loss);
  // d/dW sum(Wx) = [x^T; x^T]
  CHECK(w.grad()[0] == doctest::Approx(4));
  CHECK(w.grad()[1] == doctest::Approx(7));
  CHECK(w.grad()[2] == doctest::Approx(4));
  CHECK(w.grad()[3] == doctest::Approx(7));
}

TEST_CASE("backward rejects non-scalar losses and reruns") {
  Tensor w = Tensor::param(1, 2, {1, 2}, "w");
  Tape t;
  Tensor y = num::sigmoid(t, w);
  CHECK_THROWS_AS(t.backward(y), ContractError);

  Tape t2;
  Tensor loss = num::sum_all(t2, num::sigmoid(t2, w));
  t2.backward(loss);
  CHECK_THROWS_AS(t2.backward(loss), ContractError);
}

TEST_CASE("backward: summed losses accumulate like separate passes") {
  Tensor w = Tensor::param(1, 2, {0.3, -0.6}, "w");

  Tape ta;
  Tensor l1 = num::sum_all(ta, num::sigmoid(ta, w));
  ta.backward(l1);
  std::vector<double> g1 = w.grad();

  w.zero_grad();
  Tape tb;
  Tensor l2 = num::sum_all(tb, num::mul(tb, w, w));
  tb.backward(l2);
  std::vector<double> g2 = w.grad();

  w.zero_grad();
  Tape tc;
  Tensor both = num::add(tc, num::sum_all(tc, num::sigmoid(tc, w)),
                         num::sum_all(tc, num::mul(tc, w, w)));
  tc.backward(both);
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(w.grad()[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
}

TEST_CASE("gradient check: composite sigmoid-matmul graph") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Tensor w = random_tensor(rng, 3, 2, -1, 1);
    Tensor x = random_tensor(rng, 2, 3, -1, 1);
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) {
          return num::mean_all(t, num::sigmoid(t, num::matmul(t, p[0], p[1])));
        },
        {w, x});
  }
}

TEST_CASE("gradient check: every primitive") {
  Rng rng(99);

  SUBCASE("add sub mul affine") {
    Tensor a = random_tensor(rng, 2, 3);
    Tensor b = random_tensor(rng, 2, 3);
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) {
          Tensor s = num::add(t, p[0], p[1]);
          s = num::sub(t, s, num::mul(t, p[0], p[1]));
          return num::sum_all(t, num::affine(t, s, 1.7, -0.3));
        },
        {a, b});
  }

  SUBCASE("add_row broadcast") {
    Tensor x = random_tensor(rng, 3, 4);
    Tensor bias = random_tensor(rng, 1, 4);
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) {
          return num::sum_all(t, num::sigmoid(t, num::add_row(t, p[0], p[1])));
        },
        {x, bias});
  }

  SUBCASE("leaky_relu away from the kink") {
    Tensor x = Tensor::param(2, 2, {0.5, -0.7, 1.2, -2.0}, "x");
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) {
          return num::sum_all(t, num::leaky_relu(t, p[0], 0.2));
        },
        {x});
  }

  SUBCASE("log and abs on safely nonzero inputs") {
    Tensor x = random_tensor(rng, 2, 3, 0.5, 2.0);
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) { return num::sum_all(t, num::log(t, p[0])); },
        {x});
    Tensor y = random_tensor(rng, 2, 3, 0.5, 2.0);
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) { return num::sum_all(t, num::abs(t, p[0])); },
        {y});
  }

  SUBCASE("safe_log both branches") {
    Tensor x = Tensor::param(1, 4, {0.9, 0.4, 5e-5, 1e-6}, "x");
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) {
          return num::sum_all(t, num::safe_log(t, p[0], 1e-4));
        },
        {x});
    Tape t;
    // Below eps the extension is linear: log(eps) + (x - eps)/eps.
    Tensor out = num::safe_log(t, Tensor::from(1, 1, {5e-5}), 1e-4);
    CHECK(out.item() == doctest::Approx(std::log(1e-4) + (5e-5 - 1e-4) / 1e-4));
  }

  SUBCASE("clip interior entries only") {
    Tensor x = Tensor::param(1, 3, {0.3, 0.6, 0.9}, "x");
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) {
          return num::sum_all(t, num::clip(t, p[0], 0.2, 0.95));
        },
        {x});
    // Clamped entries pass no gradient.
    Tensor y = Tensor::param(1, 2, {-1.0, 2.0}, "y");
    Tape t;
    Tensor loss = num::sum_all(t, num::clip(t, y, 0.0, 1.0));
    t.backward(loss);
    CHECK(y.grad()[0] == 0.0);
    CHECK(y.grad()[1] == 0.0);
  }

  SUBCASE("softmax concat reshape gather") {
    Tensor a = random_tensor(rng, 2, 2);
    Tensor b = random_tensor(rng, 2, 3);
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) {
          Tensor cat = num::concat_cols(t, {p[0], p[1]});
          Tensor soft = num::softmax_rows(t, cat);
          Tensor flat = num::reshape_rows(t, soft, 2);
          Tensor picked = num::gather_rows(t, flat, {0, 3, 1});
          return num::mean_all(t, num::mul(t, picked, picked));
        },
        {a, b});
  }

  SUBCASE("row_block_mean and l1_distance") {
    Tensor x = random_tensor(rng, 6, 2);
    Tensor y = random_tensor(rng, 3, 2);
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) {
          return num::l1_distance(t, num::row_block_mean(t, p[0], 2), p[1]);
        },
        {x, y});
  }

  SUBCASE("blockwise attention") {
    Tensor q = random_tensor(rng, 4, 3);
    Tensor k = random_tensor(rng, 4, 3);
    Tensor v = random_tensor(rng, 4, 3);
    check_grads(
        [](Tape& t, std::vector<Tensor>& p) {
          return num::mean_all(t, num::blockwise_attention(t, p[0], p[1], p[2], 2));
        },
        {q, k, v});
  }

  SUBCASE("neighbor_mean") {
    Tensor x = random_tensor(rng, 4, 3);
    num::NeighborLists nbrs{{1, 2}, {0}, {3}, {}};
    check_grads(
        [nbrs](Tape& t, std::vector<Tensor>& p) {
          return num::sum_all(t, num::sigmoid(t, num::neighbor_mean(t, p[0], nbrs)));
        },
        {x});
  }

  SUBCASE("segment_softmax and weighted_sum_rows") {
    Tensor scores = random_tensor(rng, 5, 1);
    Tensor x = random_tensor(rng, 3, 2);
    std::vector<int> offsets{0, 2, 5};
    std::vector<int> src{1, 2, 0, 1, 2};
    check_grads(
        [=](Tape& t, std::vector<Tensor>& p) {
          Tensor alpha = num::segment_softmax(t, p[0], offsets);
          return num::mean_all(t, num::weighted_sum_rows(t, p[1], alpha, src, offsets));
        },
        {scores, x});
  }
}

TEST_CASE("neighbor_mean averages the closed neighborhood") {
  Tape t;
  Tensor x = Tensor::from(3, 1, {1, 2, 4});
  num::NeighborLists nbrs{{1, 2}, {}, {0}};
  Tensor out = num::neighbor_mean(t, x, nbrs);
  CHECK(out.at(0, 0) == doctest::Approx((1 + 2 + 4) / 3.0));
  CHECK(out.at(1, 0) == doctest::Approx(2.0));
  CHECK(out.at(2, 0) == doctest::Approx((4 + 1) / 2.0));
}

TEST_CASE("segment_softmax normalizes each segment") {
  Tape t;
  Tensor s = Tensor::from(5, 1, {1, 1, 0, 1, 2});
  Tensor a = num::segment_softmax(t, s, {0, 2, 5});
  CHECK(a.at(0, 0) == doctest::Approx(0.5));
  CHECK(a.at(1, 0) == doctest::Approx(0.5));
  CHECK(a.at(2, 0) + a.at(3, 0) + a.at(4, 0) == doctest::Approx(1.0));
  CHECK(a.at(4, 0) > a.at(3, 0));
  CHECK(a.at(3, 0) > a.at(2, 0));
}

TEST_CASE("tensors share storage on copy and detach on clone") {
  Tensor a = Tensor::from(1, 2, {1, 2});
  Tensor b = a;
  b.at(0, 0) = 9;
  CHECK(a.at(0, 0) == 9);
  Tensor c = a.clone();
  c.at(0, 1) = 7;
  CHECK(a.at(0, 1) == 2);
  CHECK(a.identical(b));
  CHECK(!a.identical(c));
}

TEST_CASE("from rejects wrong value counts") {
  CHECK_THROWS_AS(Tensor::from(2, 2, {1, 2, 3}), ContractError);
}
