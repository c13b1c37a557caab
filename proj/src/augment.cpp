#include "rabot/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rabot/errors.hpp"

namespace rabot::augment {

namespace {

std::vector<int> train_ids_of_class(const std::vector<int>& labels,
                                    const std::vector<graph::Split>& split, int cls) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (split[i] == graph::Split::Train && labels[i] == cls) ids.push_back((int)i);
  return ids;
}

}  // namespace

int minority_class(const std::vector<int>& labels, const std::vector<graph::Split>& split) {
  if (labels.size() != split.size())
    throw ContractError("minority_class: labels/split size mismatch");
  long humans = 0, bots = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (split[i] != graph::Split::Train) continue;
    if (labels[i] == 0) ++humans;
    else if (labels[i] == 1) ++bots;
    else throw ContractError("minority_class: training node " + std::to_string(i) +
                             " is unlabeled");
  }
  if (humans == 0 && bots == 0) throw ContractError("minority_class: empty training split");
  if (humans == 0 || bots == 0)
    throw ContractError("minority_class: training split contains a single class; "
                        "oversampling needs both");
  return bots <= humans ? 1 : 0;
}

std::vector<int> knn_same_class(const num::Tensor& embeddings, const std::vector<int>& labels,
                                const std::vector<graph::Split>& split, int node, int k) {
  if (node < 0 || node >= (int)embeddings.rows())
    throw ContractError("knn_same_class: node out of range");
  if (k <= 0) throw ContractError("knn_same_class: k must be positive");
  if (split[node] != graph::Split::Train)
    throw ContractError("knn_same_class: anchor must be a training node");
  std::vector<int> cand = train_ids_of_class(labels, split, labels[node]);
  cand.erase(std::remove(cand.begin(), cand.end(), node), cand.end());
  if ((int)cand.size() < k)
    throw ContractError("knn_same_class: requested k=" + std::to_string(k) + " but only " +
                        std::to_string(cand.size()) +
                        " same-class training nodes are available; lower k");
  const std::size_t d = embeddings.cols();
  std::vector<std::pair<double, int>> scored;
  scored.reserve(cand.size());
  for (int j : cand) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      double diff = embeddings.at(node, c) - embeddings.at(j, c);
      s += diff * diff;
    }
    scored.emplace_back(s, j);
  }
  std::sort(scored.begin(), scored.end());  // pair orders by distance, then id
  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = scored[i].second;
  return out;
}

std::vector<SyntheticNode> plan(const num::Tensor& embeddings, const std::vector<int>& labels,
                                const std::vector<graph::Split>& split, int k, Rng& rng) {
  const int minority = minority_class(labels, split);
  std::vector<int> minor = train_ids_of_class(labels, split, minority);
  std::vector<int> major = train_ids_of_class(labels, split, 1 - minority);
  const long deficit = (long)major.size() - (long)minor.size();
  std::vector<SyntheticNode> out;
  if (deficit <= 0) return out;
  // Neighbor lists are stable within one call; fetch lazily per anchor.
  std::vector<std::vector<int>> nbrs(minor.size());
  out.reserve(deficit);
  for (long s = 0; s < deficit; ++s) {
    const std::size_t slot = (std::size_t)(s % (long)minor.size());
    const int anchor = minor[slot];
    if (nbrs[slot].empty())
      nbrs[slot] = knn_same_class(embeddings, labels, split, anchor, k);
    SyntheticNode node;
    node.parent = anchor;
    node.neighbor = nbrs[slot][rng.below((std::uint64_t)k)];
    node.delta = rng.uniform();
    out.push_back(node);
  }
  return out;
}

AugmentedBatch materialize(num::Tape& tape, const num::Tensor& embeddings,
                           std::vector<SyntheticNode> nodes, int label) {
  AugmentedBatch batch;
  batch.label = label;
  const std::size_t n = embeddings.rows();
  num::Tensor mix = num::Tensor::zeros(nodes.size(), n, "aug.mix");
  for (std::size_t s = 0; s < nodes.size(); ++s) {
    const SyntheticNode& sn = nodes[s];
    if (sn.parent < 0 || sn.parent >= (int)n || sn.neighbor < 0 || sn.neighbor >= (int)n)
      throw ContractError("materialize: parent index out of range");
    if (sn.parent == sn.neighbor)
      throw ContractError("materialize: synthetic node interpolates a node with itself");
    if (!(sn.delta >= 0.0 && sn.delta <= 1.0))
      throw ContractError("materialize: delta outside [0,1]");
    mix.at(s, sn.parent) = 1.0 - sn.delta;
    mix.at(s, sn.neighbor) = sn.delta;
  }
  batch.nodes = std::move(nodes);
  batch.embeddings = num::matmul(tape, mix, embeddings);
  return batch;
}

AugmentedBatch synthesize(num::Tape& tape, const num::Tensor& embeddings,
                          const std::vector<int>& labels,
                          const std::vector<graph::Split>& split, int k, Rng& rng) {
  const int minority = minority_class(labels, split);
  return materialize(tape, embeddings, plan(embeddings, labels, split, k, rng), minority);
}

}  // namespace rabot::augment
