#include "rabot/backbones.hpp"

#include <cmath>
#include <atomic>
#include <iostream>

#include "rabot/encoder.hpp"
#include "rabot/errors.hpp"

namespace rabot::backbones {

namespace {
constexpr double kProbEps = 1e-4;
constexpr double kAttnSlope = 0.2;  // scoring nonlinearity, steeper than feature updates
}  // namespace

BackboneKind backbone_kind_from(const std::string& name) {
  if (name == "gcn") return BackboneKind::Gcn;
  if (name == "attn") return BackboneKind::Attn;
  if (name == "relational") return BackboneKind::Relational;
  throw ConfigError("unknown backbone '" + name + "' (expected gcn, attn or relational)");
}

std::string backbone_kind_name(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::Gcn: return "gcn";
    case BackboneKind::Attn: return "attn";
    case BackboneKind::Relational: return "relational";
  }
  throw ContractError("unreachable backbone kind");
}

void BackboneConfig::validate() const {
  if (layers < 1) throw ConfigError("backbone needs at least one layer");
  if (hidden <= 0) throw ConfigError("backbone hidden dim must be positive");
  if (slope < 0.0) throw ConfigError("backbone slope must be >= 0");
}

Backbone::Backbone(const BackboneConfig& cfg, int in_dim, int relations, Rng& rng)
    : cfg_(cfg), relations_(relations), in_dim_(in_dim) {
  cfg_.validate();
  if (in_dim <= 0) throw ContractError("backbone input dim must be positive");
  if (relations < 1) throw ContractError("backbone needs at least one relation");
  for (int l = 0; l < cfg_.layers; ++l) {
    const int din = layer_in_dim(l);
    const std::string tag = "bb.l" + std::to_string(l);
    if (cfg_.kind == BackboneKind::Relational) {
      rel_weight.emplace_back();
      for (int r = 0; r < relations; ++r)
        rel_weight.back().push_back(
            encoder::glorot(din, cfg_.hidden, rng, tag + ".w.r" + std::to_string(r)));
    } else {
      weight.push_back(encoder::glorot(din, cfg_.hidden, rng, tag + ".w"));
    }
    if (cfg_.kind == BackboneKind::Attn) {
      attn_self.push_back(encoder::glorot(cfg_.hidden, 1, rng, tag + ".a_self"));
      attn_nbr.push_back(encoder::glorot(cfg_.hidden, 1, rng, tag + ".a_nbr"));
    }
    bias.push_back(num::Tensor::param(1, cfg_.hidden, std::vector<double>(cfg_.hidden, 0.0), tag + ".b"));
  }
}

num::Tensor Backbone::layer_forward(num::Tape& tape, const num::Tensor& h,
                                    const std::vector<num::NeighborLists>& adj,
                                    int layer) const {
  if (layer < 0 || layer >= cfg_.layers) throw ContractError("backbone layer out of range");
  if ((int)adj.size() != relations_)
    throw DimensionError("backbone: adjacency count " + std::to_string(adj.size()) +
                         " does not match relation count " + std::to_string(relations_));
  if ((int)h.cols() != layer_in_dim(layer))
    throw DimensionError("backbone layer " + std::to_string(layer) + " expects width " +
                         std::to_string(layer_in_dim(layer)) + ", got " +
                         std::to_string(h.cols()));
  const std::size_t n = h.rows();
  for (const num::NeighborLists& lists : adj)
    if (lists.size() != n)
      throw DimensionError("backbone: adjacency rows do not match feature rows");

  std::vector<num::Tensor> per_relation;
  per_relation.reserve(relations_);
  num::Tensor shared_wh;  // attn reuses the transformed features across relations
  if (cfg_.kind == BackboneKind::Attn)
    shared_wh = num::matmul(tape, h, weight[layer]);
  for (int r = 0; r < relations_; ++r) {
    switch (cfg_.kind) {
      case BackboneKind::Gcn: {
        num::Tensor agg = num::neighbor_mean(tape, h, adj[r]);
        per_relation.push_back(num::matmul(tape, agg, weight[layer]));
        break;
      }
      case BackboneKind::Relational: {
        num::Tensor agg = num::neighbor_mean(tape, h, adj[r]);
        per_relation.push_back(num::matmul(tape, agg, rel_weight[layer][r]));
        break;
      }
      case BackboneKind::Attn: {
        // Self entry goes first in every node's group so isolation reduces
        // to attention weight 1 on the node itself.
        std::vector<int> centers, sources, offsets;
        offsets.reserve(n + 1);
        offsets.push_back(0);
        for (std::size_t i = 0; i < n; ++i) {
          centers.push_back((int)i);
          sources.push_back((int)i);
          for (int j : adj[r][i]) {
            centers.push_back((int)i);
            sources.push_back(j);
          }
          offsets.push_back((int)sources.size());
        }
        num::Tensor s_self = num::matmul(tape, shared_wh, attn_self[layer]);
        num::Tensor s_nbr = num::matmul(tape, shared_wh, attn_nbr[layer]);
        num::Tensor raw = num::add(tape, num::gather_rows(tape, s_self, centers),
                                   num::gather_rows(tape, s_nbr, sources));
        num::Tensor scores = num::leaky_relu(tape, raw, kAttnSlope);
        num::Tensor alpha = num::segment_softmax(tape, scores, offsets);
        per_relation.push_back(num::weighted_sum_rows(tape, shared_wh, alpha, sources, offsets));
        break;
      }
    }
  }
  num::Tensor combined = per_relation[0];
  for (int r = 1; r < relations_; ++r) combined = num::add(tape, combined, per_relation[r]);
  if (relations_ > 1)
    combined = num::affine(tape, combined, 1.0 / (double)relations_, 0.0);
  return num::leaky_relu(tape, num::add_row(tape, combined, bias[layer]), cfg_.slope);
}

std::vector<num::Tensor> Backbone::parameters() const {
  std::vector<num::Tensor> ps;
  for (const num::Tensor& t : weight) ps.push_back(t);
  for (const auto& row : rel_weight)
    for (const num::Tensor& t : row) ps.push_back(t);
  for (const num::Tensor& t : attn_self) ps.push_back(t);
  for (const num::Tensor& t : attn_nbr) ps.push_back(t);
  for (const num::Tensor& t : bias) ps.push_back(t);
  return ps;
}

Head::Head(int in_dim, Rng& rng) {
  w = encoder::glorot(in_dim, 2, rng, "head.w");
  b = num::Tensor::param(1, 2, {0.0, 0.0}, "head.b");
}

num::Tensor Head::probs(num::Tape& tape, const num::Tensor& h) const {
  return num::softmax_rows(tape, num::add_row(tape, num::matmul(tape, h, w), b));
}

std::vector<num::Tensor> Head::parameters() const { return {w, b}; }

Prediction predict(num::Tape& tape, const Head& head, const num::Tensor& h) {
  Prediction out;
  out.probs = head.probs(tape, h);
  out.hard.resize(out.probs.rows());
  for (int i = 0; i < out.probs.rows(); ++i)
    out.hard[i] = out.probs.at(i, 1) >= 0.5 ? 1 : 0;
  return out;
}

num::NeighborLists masked_adjacency(int n, const std::vector<graph::Edge>& edges,
                                    const std::vector<std::uint8_t>* keep) {
  if (keep != nullptr && keep->size() != edges.size())
    throw DimensionError("masked_adjacency: keep flags do not match edge list");
  num::NeighborLists lists(n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (keep != nullptr && !(*keep)[e]) continue;
    const graph::Edge& ed = edges[e];
    if (ed.u >= n || ed.v >= n) throw ContractError("masked_adjacency: endpoint out of range");
    lists[ed.u].push_back(ed.v);
    lists[ed.v].push_back(ed.u);
  }
  return lists;
}

ForwardResult forward(num::Tape& tape, const num::Tensor& embeddings, const graph::Graph& g,
                      const std::vector<std::vector<filter::EdgeMask>>& masks,
                      const Backbone& backbone, const Head& head) {
  if ((int)g.relation_count() != backbone.relations())
    throw DimensionError("forward: graph relation count does not match backbone");
  if (!masks.empty() && (int)masks.size() != backbone.config().layers)
    throw DimensionError("forward: need one mask set per layer");
  ForwardResult out;
  num::Tensor h = embeddings;
  for (int l = 0; l < backbone.config().layers; ++l) {
    std::vector<num::NeighborLists> adj;
    adj.reserve(g.relation_count());
    for (std::size_t r = 0; r < g.relation_count(); ++r) {
      const std::vector<std::uint8_t>* keep = nullptr;
      if (!masks.empty()) {
        if (masks[l].size() != g.relation_count())
          throw DimensionError("forward: need one mask per relation");
        if (masks[l][r].keep.size() != g.relations[r].size())
          throw DimensionError("forward: mask length does not match relation edge list");
        keep = &masks[l][r].keep;
      }
      adj.push_back(masked_adjacency((int)g.n, g.relations[r], keep));
    }
    h = backbone.layer_forward(tape, h, adj, l);
    out.layer_features.push_back(h);
  }
  out.pred = predict(tape, head, h);
  return out;
}

num::Tensor node_loss(num::Tape& tape, const num::Tensor& probs,
                      const std::vector<int>& labels, const std::vector<int>& node_set) {
  if (node_set.empty()) throw ContractError("node_loss: empty node set");
  if (probs.cols() != 2) throw DimensionError("node_loss: expected two-class probabilities");
  std::vector<int> rows;
  rows.reserve(node_set.size());
  std::vector<double> y, comp;
  y.reserve(node_set.size());
  comp.reserve(node_set.size());
  for (int i : node_set) {
    if (i < 0 || i >= probs.rows()) throw ContractError("node_loss: node out of range");
    if (labels[i] != 0 && labels[i] != 1)
      throw ContractError("node_loss: node " + std::to_string(i) + " is unlabeled");
    rows.push_back(i);
    y.push_back((double)labels[i]);
    comp.push_back(1.0 - (double)labels[i]);
  }
  static const num::Tensor kBotColumn = num::Tensor::from(2, 1, {0.0, 1.0});
  num::Tensor sub = num::gather_rows(tape, probs, rows);
  num::Tensor pbot = num::matmul(tape, sub, kBotColumn);
  num::Tensor logp = num::safe_log(tape, pbot, kProbEps);
  num::Tensor pfalse = num::affine(tape, pbot, -1.0, 1.0);
  num::Tensor logq = num::safe_log(tape, pfalse, kProbEps);
  const int m = (int)y.size();
  num::Tensor ycol = num::Tensor::from(m, 1, std::move(y));
  num::Tensor ycomp = num::Tensor::from(m, 1, std::move(comp));
  num::Tensor ll = num::add(tape, num::mul(tape, logp, ycol), num::mul(tape, logq, ycomp));
  return num::affine(tape, num::mean_all(tape, ll), -1.0, 0.0);
}

Metrics evaluate(const num::Tensor& probs, const std::vector<int>& labels,
                 const std::vector<int>& node_set) {
  if (node_set.empty()) throw ContractError("evaluate: empty node set");
  long correct = 0, tp = 0, fp = 0, fn = 0;
  for (int i : node_set) {
    if (i < 0 || i >= probs.rows()) throw ContractError("evaluate: node out of range");
    if (labels[i] != 0 && labels[i] != 1)
      throw ContractError("evaluate: node " + std::to_string(i) + " is unlabeled");
    const int pred = probs.at(i, 1) >= 0.5 ? 1 : 0;
    if (pred == labels[i]) ++correct;
    if (pred == 1 && labels[i] == 1) ++tp;
    if (pred == 1 && labels[i] == 0) ++fp;
    if (pred == 0 && labels[i] == 1) ++fn;
  }
  Metrics m;
  m.accuracy = (double)correct / (double)node_set.size();
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = (long)node_set.size() - tp - fp - fn;
  if (tp == 0) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      std::cerr << "[metrics] no true positives; f1 has a zero denominator, reporting 0"
                   " (repeats suppressed)\n";
    m.f1 = 0.0;
  } else {
    const double precision = (double)tp / (double)(tp + fp);
    const double recall = (double)tp / (double)(tp + fn);
    m.f1 = 2.0 * precision * recall / (precision + recall);
  }
  return m;
}

}  // namespace rabot::backbones
