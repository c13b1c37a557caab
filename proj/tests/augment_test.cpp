#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "rabot/augment.hpp"
#include "rabot/errors.hpp"
#include "rabot/rng.hpp"
#include "rabot/tensor.hpp"

using rabot::ContractError;
using rabot::Rng;
using rabot::graph::Split;
using rabot::num::Tape;
using rabot::num::Tensor;
namespace augment = rabot::augment;

namespace {

std::vector<Split> all_train(std::size_t n) { return std::vector<Split>(n, Split::Train); }

// Random instance: n nodes, all train, bot count in [2+k, n/2].
struct Instance {
  Tensor emb;
  std::vector<int> labels;
  std::vector<Split> split;
};

Instance random_instance(Rng& rng, int n, int d, int bots) {
  Instance inst;
  inst.emb = testutil::random_tensor(rng, n, d, -2.0, 2.0, false);
  inst.labels.assign(n, 0);
  for (int i = 0; i < bots; ++i) inst.labels[i] = 1;
  rng.shuffle(inst.labels);
  inst.split = all_train(n);
  return inst;
}

}  // namespace

TEST_CASE("minority class detection") {
  SUBCASE("fewer bots than humans") {
    std::vector<int> labels{0, 0, 0, 1};
    CHECK(augment::minority_class(labels, all_train(4)) == 1);
  }
  SUBCASE("fewer humans than bots") {
    std::vector<int> labels{1, 1, 1, 0};
    CHECK(augment::minority_class(labels, all_train(4)) == 0);
  }
  SUBCASE("tie resolves to the bot class") {
    std::vector<int> labels{0, 1, 0, 1};
    CHECK(augment::minority_class(labels, all_train(4)) == 1);
  }
  SUBCASE("only training rows count") {
    // 1 bot vs 2 humans overall, but the train split sees 1 bot vs 1 human.
    std::vector<int> labels{1, 0, 0};
    std::vector<Split> split{Split::Train, Split::Train, Split::Test};
    CHECK(augment::minority_class(labels, split) == 1);
  }
  SUBCASE("single-class training split is rejected") {
    std::vector<int> labels{0, 0, 0};
    CHECK_THROWS_AS((void)augment::minority_class(labels, all_train(3)), ContractError);
  }
  SUBCASE("unlabeled training node is rejected") {
    std::vector<int> labels{0, 1, -1};
    CHECK_THROWS_AS((void)augment::minority_class(labels, all_train(3)), ContractError);
  }
}

TEST_CASE("nearest neighbors on a 1-d line") {
  // Embeddings 0, 1, 10 on a line, everyone minority: node 0's nearest is 1.
  Tensor emb = Tensor::from(3, 1, {0.0, 1.0, 10.0});
  std::vector<int> labels{1, 1, 1};
  CHECK(augment::knn_same_class(emb, labels, all_train(3), 0, 1) == std::vector<int>{1});
  CHECK(augment::knn_same_class(emb, labels, all_train(3), 2, 2) == std::vector<int>{1, 0});
}

TEST_CASE("equidistant neighbors break ties by ascending id") {
  Tensor emb = Tensor::from(4, 1, {0.0, 1.0, -1.0, 5.0});
  std::vector<int> labels{1, 1, 1, 1};
  // Nodes 1 and 2 are both at distance 1 from node 0; lower id first.
  std::vector<int> got = augment::knn_same_class(emb, labels, all_train(4), 0, 2);
  CHECK(got == std::vector<int>{1, 2});
}

TEST_CASE("nearest neighbors match an exhaustive sort oracle") {
  Rng rng(91);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 20 + (int)rng.below(30);
    Instance inst = random_instance(rng, n, 4, 8 + (int)rng.below(4));
    const int k = 1 + (int)rng.below(5);
    for (int node = 0; node < n; ++node) {
      if (inst.labels[node] != 1) continue;
      // Brute force: every other minority train node, sorted by
      // (squared distance, id), first k.
      std::vector<std::pair<double, int>> all;
      for (int j = 0; j < n; ++j) {
        if (j == node || inst.labels[j] != 1) continue;
        double s = 0;
        for (int c = 0; c < 4; ++c) {
          double diff = inst.emb.at(node, c) - inst.emb.at(j, c);
          s += diff * diff;
        }
        all.emplace_back(s, j);
      }
      std::sort(all.begin(), all.end());
      std::vector<int> want;
      for (int i = 0; i < k; ++i) want.push_back(all[(std::size_t)i].second);
      CHECK(augment::knn_same_class(inst.emb, inst.labels, inst.split, node, k) == want);
    }
  }
}

TEST_CASE("neighbor query contract errors") {
  Tensor emb = Tensor::from(3, 1, {0.0, 1.0, 2.0});
  std::vector<int> labels{1, 1, 1};
  SUBCASE("k larger than the candidate pool names the remedy") {
    try {
      (void)augment::knn_same_class(emb, labels, all_train(3), 0, 5);
      FAIL("expected ContractError");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()).find("lower k") != std::string::npos);
    }
  }
  SUBCASE("anchor outside the training split") {
    std::vector<Split> split{Split::Val, Split::Train, Split::Train};
    CHECK_THROWS_AS((void)augment::knn_same_class(emb, labels, split, 0, 1), ContractError);
  }
  SUBCASE("non-positive k") {
    CHECK_THROWS_AS((void)augment::knn_same_class(emb, labels, all_train(3), 0, 0),
                    ContractError);
  }
}

TEST_CASE("plans balance the classes exactly") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 20 + (int)rng.below(40);
    const int bots = 4 + (int)rng.below((std::uint64_t)(n / 2 - 4));
    Instance inst = random_instance(rng, n, 3, bots);
    Rng plan_rng(1000 + (std::uint64_t)trial);
    std::vector<augment::SyntheticNode> plan =
        augment::plan(inst.emb, inst.labels, inst.split, 3, plan_rng);
    long minor = 0, major = 0;
    for (int l : inst.labels) (l == 1 ? ++minor : ++major);
    if (minor > major) std::swap(minor, major);
    CHECK((long)plan.size() == major - minor);
    for (const augment::SyntheticNode& s : plan) {
      CHECK(s.delta >= 0.0);
      CHECK(s.delta <= 1.0);
      CHECK(s.parent != s.neighbor);
    }
  }
}

TEST_CASE("majority 10 / minority 4 yields exactly 6 synthetic nodes") {
  std::vector<int> labels(14, 0);
  for (int i = 0; i < 4; ++i) labels[i] = 1;
  Rng vals(3);
  Tensor emb = testutil::random_tensor(vals, 14, 2, -1.0, 1.0, false);
  Rng rng(5);
  Tape tape;
  augment::AugmentedBatch batch =
      augment::synthesize(tape, emb, labels, all_train(14), 3, rng);
  CHECK(batch.nodes.size() == 6);
  CHECK(batch.label == 1);
  CHECK(batch.embeddings.rows() == 6);
  CHECK(batch.embeddings.cols() == 2);
}

TEST_CASE("already balanced input plans nothing") {
  std::vector<int> labels{0, 0, 1, 1};
  Tensor emb = Tensor::from(4, 1, {0.0, 1.0, 2.0, 3.0});
  Rng rng(9);
  CHECK(augment::plan(emb, labels, all_train(4), 1, rng).empty());
}

TEST_CASE("parents cycle round-robin over ascending minority ids") {
  // Minority train ids are {1, 4, 6}; 7 majority nodes leave a deficit of 4.
  std::vector<int> labels{0, 1, 0, 0, 1, 0, 1, 0, 0, 0};
  Rng vals(11);
  Tensor emb = testutil::random_tensor(vals, 10, 2, -1.0, 1.0, false);
  Rng rng(2);
  std::vector<augment::SyntheticNode> plan =
      augment::plan(emb, labels, all_train(10), 2, rng);
  REQUIRE(plan.size() == 4);
  const std::vector<int> expect{1, 4, 6, 1};
  for (std::size_t s = 0; s < plan.size(); ++s) {
    CHECK(plan[s].parent == expect[s]);
    // The neighbor comes from the anchor's same-class neighbor list.
    std::vector<int> nbrs =
        augment::knn_same_class(emb, labels, all_train(10), plan[s].parent, 2);
    CHECK(std::find(nbrs.begin(), nbrs.end(), plan[s].neighbor) != nbrs.end());
  }
}

TEST_CASE("identical seeds reproduce the plan") {
  Rng vals(21);
  Instance inst = random_instance(vals, 30, 3, 9);
  Rng a(77), b(77);
  std::vector<augment::SyntheticNode> pa = augment::plan(inst.emb, inst.labels, inst.split, 4, a);
  std::vector<augment::SyntheticNode> pb = augment::plan(inst.emb, inst.labels, inst.split, 4, b);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].parent == pb[i].parent);
    CHECK(pa[i].neighbor == pb[i].neighbor);
    CHECK(pa[i].delta == pb[i].delta);
  }
}

TEST_CASE("synthetic embeddings interpolate their parents exactly") {
  Rng vals(33);
  Instance inst = random_instance(vals, 40, 5, 10);
  Rng rng(8);
  Tape tape;
  augment::AugmentedBatch batch =
      augment::synthesize(tape, inst.emb, inst.labels, inst.split, 4, rng);
  REQUIRE(!batch.nodes.empty());
  for (std::size_t s = 0; s < batch.nodes.size(); ++s) {
    const augment::SyntheticNode& sn = batch.nodes[s];
    for (int c = 0; c < 5; ++c) {
      const double a = inst.emb.at(sn.parent, c);
      const double b = inst.emb.at(sn.neighbor, c);
      const double want = (1.0 - sn.delta) * a + sn.delta * b;
      CHECK(batch.embeddings.at((int)s, c) == want);  // bitwise: same fp ops
      CHECK(batch.embeddings.at((int)s, c) >= std::min(a, b) - 1e-15);
      CHECK(batch.embeddings.at((int)s, c) <= std::max(a, b) + 1e-15);
    }
  }
}

TEST_CASE("delta zero duplicates the first parent") {
  Tensor emb = Tensor::from(3, 2, {0.5, -1.0, 2.0, 0.25, -3.0, 1.5});
  std::vector<augment::SyntheticNode> nodes(1);
  nodes[0].parent = 2;
  nodes[0].neighbor = 0;
  nodes[0].delta = 0.0;
  Tape tape;
  augment::AugmentedBatch batch = augment::materialize(tape, emb, nodes, 1);
  CHECK(batch.embeddings.at(0, 0) == emb.at(2, 0));
  CHECK(batch.embeddings.at(0, 1) == emb.at(2, 1));
}

TEST_CASE("materialize validates its plan") {
  Tensor emb = Tensor::from(2, 1, {0.0, 1.0});
  Tape tape;
  SUBCASE("self interpolation") {
    std::vector<augment::SyntheticNode> nodes(1);
    nodes[0].parent = 1;
    nodes[0].neighbor = 1;
    nodes[0].delta = 0.5;
    CHECK_THROWS_AS((void)augment::materialize(tape, emb, nodes, 1), ContractError);
  }
  SUBCASE("delta outside the unit interval") {
    std::vector<augment::SyntheticNode> nodes(1);
    nodes[0].parent = 0;
    nodes[0].neighbor = 1;
    nodes[0].delta = 1.5;
    CHECK_THROWS_AS((void)augment::materialize(tape, emb, nodes, 1), ContractError);
  }
  SUBCASE("parent out of range") {
    std::vector<augment::SyntheticNode> nodes(1);
    nodes[0].parent = 7;
    nodes[0].neighbor = 0;
    nodes[0].delta = 0.5;
    CHECK_THROWS_AS((void)augment::materialize(tape, emb, nodes, 1), ContractError);
  }
}

TEST_CASE("gradient reaches the parent embeddings") {
  std::vector<augment::SyntheticNode> nodes(3);
  nodes[0] = {0, 2, 0.25};
  nodes[1] = {1, 3, 0.75};
  nodes[2] = {0, 3, 0.5};
  Rng rng(55);
  Tensor emb = testutil::random_tensor(rng, 4, 3);
  testutil::check_grads(
      [&](Tape& t, std::vector<Tensor>& ps) {
        return rabot::num::sum_all(t, augment::materialize(t, ps[0], nodes, 1).embeddings);
      },
      {emb});
}
