#pragma once

#include <vector>

#include "rabot/graph.hpp"
#include "rabot/rng.hpp"
#include "rabot/tensor.hpp"

namespace rabot::augment {

// One interpolated training example: embedding = (1-delta)*u[parent] + delta*u[neighbor].
struct SyntheticNode {
  int parent = -1;    // minority training node the sample is anchored on
  int neighbor = -1;  // one of the parent's k nearest minority training nodes
  double delta = 0.0;
};

struct AugmentedBatch {
  std::vector<SyntheticNode> nodes;
  num::Tensor embeddings;  // |nodes| x kappa, grad flows to the parents
  int label = -1;          // class every synthetic node carries
};

// Which class is under-represented among training nodes. Ties resolve to
// the positive (bot) class; throws if the training split has one class only.
int minority_class(const std::vector<int>& labels, const std::vector<graph::Split>& split);

// k nearest training-split nodes of `node`'s own class by Euclidean distance
// in the embedding values, ascending; exact ties break toward the smaller id.
// Never contains `node` itself.
std::vector<int> knn_same_class(const num::Tensor& embeddings, const std::vector<int>& labels,
                                const std::vector<graph::Split>& split, int node, int k);

// Deterministic sampling plan: round-robin over ascending minority training
// ids, one uniform neighbor pick and one delta ~ U(0,1) per synthetic node,
// enough nodes to balance the training classes exactly.
std::vector<SyntheticNode> plan(const num::Tensor& embeddings, const std::vector<int>& labels,
                                const std::vector<graph::Split>& split, int k, Rng& rng);

// Turns a plan into tape-connected embeddings (constant interpolation
// matrix times the live embedding matrix, so parents receive gradient).
AugmentedBatch materialize(num::Tape& tape, const num::Tensor& embeddings,
                           std::vector<SyntheticNode> nodes, int label);

AugmentedBatch synthesize(num::Tape& tape, const num::Tensor& embeddings,
                          const std::vector<int>& labels,
                          const std::vector<graph::Split>& split, int k, Rng& rng);

}  // namespace rabot::augment
