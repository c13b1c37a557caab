#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rabot/edgefilter.hpp"
#include "rabot/graph.hpp"
#include "rabot/rng.hpp"
#include "rabot/tensor.hpp"

namespace rabot::backbones {

enum class BackboneKind { Gcn, Attn, Relational };

BackboneKind backbone_kind_from(const std::string& name);
std::string backbone_kind_name(BackboneKind kind);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::Relational;
  int layers = 2;
  int hidden = 128;
  double slope = 0.01;  // leaky-rectifier slope for feature updates

  void validate() const;
};

// Message-passing stack. Every layer aggregates each node's kept neighbors
// plus itself per relation, transforms, combines relations by mean, adds a
// bias and applies the leaky rectifier.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, int in_dim, int relations, Rng& rng);

  num::Tensor layer_forward(num::Tape& tape, const num::Tensor& h,
                            const std::vector<num::NeighborLists>& adj, int layer) const;

  std::vector<num::Tensor> parameters() const;
  const BackboneConfig& config() const { return cfg_; }
  int relations() const { return relations_; }
  int layer_in_dim(int layer) const { return layer == 0 ? in_dim_ : cfg_.hidden; }

  std::vector<num::Tensor> weight;                  // gcn/attn: shared across relations
  std::vector<std::vector<num::Tensor>> rel_weight; // relational: [layer][relation]
  std::vector<num::Tensor> attn_self, attn_nbr;     // attn: hidden x 1 score vectors
  std::vector<num::Tensor> bias;

 private:
  BackboneConfig cfg_;
  int relations_ = 0;
  int in_dim_ = 0;
};

// Linear layer + row softmax over {human, bot}.
struct Head {
  num::Tensor w, b;
  Head() = default;
  Head(int in_dim, Rng& rng);
  num::Tensor probs(num::Tape& tape, const num::Tensor& h) const;
  std::vector<num::Tensor> parameters() const;
};

struct Prediction {
  num::Tensor probs;      // n x 2, rows sum to 1
  std::vector<int> hard;  // 1 where p(bot) >= 0.5
};

Prediction predict(num::Tape& tape, const Head& head, const num::Tensor& h);

// Symmetric adjacency from the edges whose keep flag is set (all edges when
// keep is null). Self connections are implicit in the aggregators.
num::NeighborLists masked_adjacency(int n, const std::vector<graph::Edge>& edges,
                                    const std::vector<std::uint8_t>* keep);

struct ForwardResult {
  std::vector<num::Tensor> layer_features;  // one per layer, post-activation
  Prediction pred;
};

// Full pass over a graph with per-layer, per-relation masks
// (masks[layer][relation]); pass an empty masks vector for no filtering.
ForwardResult forward(num::Tape& tape, const num::Tensor& embeddings, const graph::Graph& g,
                      const std::vector<std::vector<filter::EdgeMask>>& masks,
                      const Backbone& backbone, const Head& head);

// Mean binary cross-entropy of the bot probability over node_set.
num::Tensor node_loss(num::Tape& tape, const num::Tensor& probs,
                      const std::vector<int>& labels, const std::vector<int>& node_set);

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  long tp = 0, fp = 0, fn = 0, tn = 0;  // bot = positive class
};

// Accuracy and bot-positive F1 over node_set from hard thresholded probs.
Metrics evaluate(const num::Tensor& probs, const std::vector<int>& labels,
                 const std::vector<int>& node_set);

}  // namespace rabot::backbones
