#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rabot/graph.hpp"

namespace rabot::synthgen {

// Two-block stochastic graph with Gaussian features around class centroids.
// Defaults are the "camouflage-500" benchmark: mean degree ~= 8 per relation
// with ~25% of edges crossing classes, and 30% of bots drawing their
// features from the human centroid.
struct GenSpec {
  int n = 500;
  double bot_fraction = 0.15;
  int relations = 2;
  double intra_edge_prob = 0.01615;
  double cross_edge_prob = 0.01569;
  int d_numerical = 8;
  int d_boolean = 8;
  int d_description = 32;
  int d_tweet = 32;
  int max_tweets = 6;  // per-node tweet count is uniform on {0..max_tweets}
  double class_mean_separation = 1.5;      // centroid distance in per-dim std units
  double camouflage_feature_fraction = 0.3;
  graph::SplitSpec split;
  std::uint64_t seed = 1;

  void validate() const;
  int bot_count() const;
};

struct EdgeTruth {
  int relation = 0;
  graph::Edge e;
  bool cross = false;  // endpoints differ in class
};

struct Generated {
  graph::Graph g;
  std::vector<EdgeTruth> truth;  // one row per generated edge
};

Generated generate(const GenSpec& spec);

// Sidecar annotation table: relation name, endpoints, {intra|cross}.
std::string edge_truth_tsv(const Generated& gen);

}  // namespace rabot::synthgen
