#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rabot/graph.hpp"

using namespace rabot;
namespace fs = std::filesystem;

namespace {

const std::string kToy3 = std::string(RABOT_FIXTURES) + "/toy3";

// Copy the toy fixture into a scratch dir and overwrite one file.
std::string patched_toy3(const std::string& file, const std::string& contents) {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("toy3_patch_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::copy(kToy3, dir);
  std::ofstream out(dir / file);
  out << contents;
  out.close();
  return dir.string();
}

graph::Graph labeled_line_graph(int n, const std::vector<int>& labels) {
  graph::Graph g;
  g.n = n;
  g.relation_names = {"follow"};
  g.relations.resize(1);
  for (int i = 0; i + 1 < n; ++i) g.relations[0].push_back({i, i + 1});
  g.features.numerical = num::Tensor::zeros(n, 1);
  g.features.boolean_mat = num::Tensor::zeros(n, 1);
  g.features.description = num::Tensor::zeros(n, 1);
  g.features.tweet_mean = num::Tensor::zeros(n, 1);
  g.features.tweets.resize(n);
  g.features.tweet_dim = 1;
  g.labels = labels;
  g.split.assign(n, graph::Split::Train);
  return g;
}

}  // namespace

TEST_CASE("toy fixture loads with expected shape") {
  graph::Graph g = graph::load_dataset(kToy3);
  CHECK(g.n == 3);
  CHECK(g.relation_count() == 2);
  CHECK(g.relation_names == std::vector<std::string>{"follow", "friend"});
  CHECK(g.relations[0].size() == 2);
  CHECK(g.relations[1].size() == 1);
  CHECK(g.labels == std::vector<int>{0, 1, 1});
  CHECK(g.split[0] == graph::Split::Train);
  CHECK(g.split[1] == graph::Split::Val);
  CHECK(g.split[2] == graph::Split::Test);
  // Tweet embeddings mean-pool at load; tweetless nodes get the zero vector.
  CHECK(g.features.tweet_mean.at(0, 0) == doctest::Approx(2.0));
  CHECK(g.features.tweet_mean.at(0, 1) == doctest::Approx(3.0));
  CHECK(g.features.tweet_mean.at(1, 0) == doctest::Approx(0.0));
  CHECK(g.features.tweet_mean.at(2, 1) == doctest::Approx(0.5));
}

TEST_CASE("loader rejects out-of-range edge endpoints") {
  const std::string dir = patched_toy3("edges_follow.tsv", "0\t7\n");
  CHECK_THROWS_WITH_AS(graph::load_dataset(dir),
                       doctest::Contains("edges_follow.tsv"), DataError);
}

TEST_CASE("loader rejects non-binary boolean features") {
  const std::string dir = patched_toy3("features_boolean.tsv", "1\n2\n0\n");
  CHECK_THROWS_WITH_AS(graph::load_dataset(dir),
                       doctest::Contains("features_boolean.tsv"), DataError);
}

TEST_CASE("loader rejects unknown label values") {
  const std::string dir = patched_toy3("labels.tsv", "0\t0\n1\t3\n");
  CHECK_THROWS_AS(graph::load_dataset(dir), DataError);
}

TEST_CASE("loader rejects missing files") {
  fs::path dir = fs::temp_directory_path() / "toy3_missing";
  fs::remove_all(dir);
  fs::copy(kToy3, dir);
  fs::remove(dir / "features_numerical.tsv");
  CHECK_THROWS_AS(graph::load_dataset(dir.string()), DataError);
}

TEST_CASE("save then load round-trips the graph exactly") {
  graph::Graph g = graph::load_dataset(kToy3);
  fs::path dir = fs::temp_directory_path() / "toy3_roundtrip";
  fs::remove_all(dir);
  graph::save_dataset(g, dir.string());
  graph::Graph back = graph::load_dataset(dir.string());
  CHECK(g == back);
}

TEST_CASE("stratified splits hit exact per-class counts") {
  std::vector<int> labels(100, 0);
  for (int i = 0; i < 10; ++i) labels[i * 10] = 1;  // 10% bots
  graph::Graph g = labeled_line_graph(100, labels);
  graph::SplitSpec spec{0.7, 0.2, 0.1, 42};
  graph::Graph out = graph::assign_splits(g, spec);

  int bots_train = 0, bots_val = 0, bots_test = 0, train = 0, val = 0, test = 0;
  for (int i = 0; i < out.n; ++i) {
    const bool bot = out.labels[i] == 1;
    switch (out.split[i]) {
      case graph::Split::Train: ++train; bots_train += bot; break;
      case graph::Split::Val: ++val; bots_val += bot; break;
      case graph::Split::Test: ++test; bots_test += bot; break;
    }
  }
  CHECK(train == 70);
  CHECK(val == 20);
  CHECK(test == 10);
  CHECK(bots_train == 7);
  CHECK(bots_val == 2);
  CHECK(bots_test == 1);
}

TEST_CASE("degenerate split fractions and determinism") {
  std::vector<int> labels(20, 0);
  for (int i = 0; i < 4; ++i) labels[i] = 1;
  graph::Graph g = labeled_line_graph(20, labels);

  graph::Graph all_train = graph::assign_splits(g, {1.0, 0.0, 0.0, 1});
  for (int i = 0; i < 20; ++i) CHECK(all_train.split[i] == graph::Split::Train);

  graph::Graph a = graph::assign_splits(g, {0.5, 0.25, 0.25, 9});
  graph::Graph b = graph::assign_splits(g, {0.5, 0.25, 0.25, 9});
  for (int i = 0; i < 20; ++i) CHECK(a.split[i] == b.split[i]);

  graph::SplitSpec bad{0.5, 0.2, 0.2, 1};
  CHECK_THROWS_AS(graph::assign_splits(g, bad), ContractError);
}

TEST_CASE("every node lands in exactly one split") {
  std::vector<int> labels(57, 0);
  for (int i = 0; i < 9; ++i) labels[i * 6] = 1;
  graph::Graph g = labeled_line_graph(57, labels);
  graph::Graph out = graph::assign_splits(g, {0.6, 0.3, 0.1, 3});
  int total = 0;
  for (graph::Split s : out.split) {
    (void)s;
    ++total;
  }
  CHECK(total == 57);
  CHECK((int)out.split.size() == out.n);
}

TEST_CASE("cross-class edge removal") {
  graph::Graph g = labeled_line_graph(4, {0, 0, 1, 1});
  // line 0-1-2-3: edge (1,2) is cross-class.
  graph::Graph cleaned = graph::remove_cross_class_edges(g);
  CHECK(cleaned.relations[0].size() == 2);
  for (const graph::Edge& e : cleaned.relations[0])
    CHECK(cleaned.labels[e.u] == cleaned.labels[e.v]);

  graph::Graph intra = labeled_line_graph(3, {0, 0, 0});
  CHECK(graph::remove_cross_class_edges(intra).relations[0].size() == 2);

  graph::Graph pair = labeled_line_graph(2, {0, 1});
  CHECK(graph::remove_cross_class_edges(pair).relations[0].empty());

  graph::Graph unl = labeled_line_graph(3, {0, -1, 1});
  CHECK_THROWS_AS(graph::remove_cross_class_edges(unl), ContractError);
}
