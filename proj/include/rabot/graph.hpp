#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rabot/tensor.hpp"

namespace rabot::graph {

enum class Split : uint8_t { Train = 0, Val = 1, Test = 2 };

const char* split_name(Split s);

// Undirected edge stored once in canonical (u < v) order.
struct Edge {
  int u = 0;
  int v = 0;
  bool operator==(const Edge&) const = default;
  bool operator<(const Edge& o) const { return u != o.u ? u < o.u : v < o.v; }
};

// Per-node multimodal inputs. Tweets are precomputed embedding vectors;
// their mean pool (zero vector for tweetless nodes) is materialized at
// load time since that is what the encoder consumes.
struct RawFeatures {
  num::Tensor numerical;    // n x d_num
  num::Tensor boolean_mat;  // n x d_bool, entries exactly 0 or 1
  num::Tensor description;  // n x d_desc
  std::vector<std::vector<std::vector<double>>> tweets;  // per node, m_i vectors
  num::Tensor tweet_mean;   // n x d_tweet
  int tweet_dim = 0;
};

struct Graph {
  int n = 0;
  std::vector<std::string> relation_names;
  std::vector<std::vector<Edge>> relations;  // sorted, deduplicated, no self-loops
  RawFeatures features;
  std::vector<int> labels;  // 0 human, 1 bot, -1 unlabeled
  std::vector<Split> split;

  int relation_count() const { return static_cast<int>(relations.size()); }
  long edge_count() const;
  bool fully_labeled() const;
  std::vector<int> nodes_in_split(Split s) const;
};

bool operator==(const Graph& a, const Graph& b);

struct SplitSpec {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
  uint64_t seed = 0;
};

// Reads and fully validates the dataset directory layout:
//   meta.json, features_{numerical,boolean,description}.tsv, tweets.jsonl,
//   edges_<relation>.tsv, labels.tsv, splits.tsv (optional).
// Nodes without a splits.tsv entry default to train.
Graph load_dataset(const std::string& dir);

// Inverse of load_dataset; floats are written in shortest exact form so
// the round trip is lossless.
void save_dataset(const Graph& g, const std::string& dir);

// Stratified split assignment: per-class largest-remainder allocation,
// shuffled deterministically by spec.seed. Requires a fully labeled graph.
Graph assign_splits(const Graph& g, const SplitSpec& spec);

// Drops every edge whose endpoints carry different labels, in every
// relation. Ground-truth cleaning for synthetic benchmarks; requires a
// fully labeled graph.
Graph remove_cross_class_edges(const Graph& g);

// Shortest decimal form that parses back to the same double; shared by
// every text artifact so outputs are reproducible byte for byte.
std::string format_double(double v);

}  // namespace rabot::graph
