#include "rabot/edgefilter.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "rabot/encoder.hpp"
#include "rabot/errors.hpp"

namespace rabot::filter {

namespace {
// Floor inside the BCE logs: below this the log is linearly extended so the
// per-edge gradient stays <= 1/kProbEps even when a pair saturates.
constexpr double kProbEps = 1e-4;
}  // namespace

SimilarityPredictor::SimilarityPredictor(int in_dim, int hidden, Rng& rng) {
  if (in_dim <= 0 || hidden <= 0)
    throw ContractError("similarity predictor needs positive dimensions");
  w1 = encoder::glorot(in_dim, hidden, rng, "filt.w1");
  b1 = num::Tensor::param(1, hidden, std::vector<double>(hidden, 0.0), "filt.b1");
  w2 = encoder::glorot(hidden, 1, rng, "filt.w2");
  b2 = num::Tensor::param(1, 1, {0.0}, "filt.b2");
}

num::Tensor SimilarityPredictor::score_nodes(num::Tape& tape, const num::Tensor& h) const {
  num::Tensor z1 = num::leaky_relu(tape, num::add_row(tape, num::matmul(tape, h, w1), b1), 0.01);
  num::Tensor z2 = num::add_row(tape, num::matmul(tape, z1, w2), b2);
  return num::sigmoid(tape, z2);
}

std::vector<num::Tensor> SimilarityPredictor::parameters() const { return {w1, b1, w2, b2}; }

num::Tensor edge_similarity(num::Tape& tape, const num::Tensor& node_scores,
                            const std::vector<graph::Edge>& edges) {
  if (node_scores.cols() != 1)
    throw DimensionError("edge_similarity: node scores must be a single column");
  std::vector<int> us(edges.size()), vs(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].u >= node_scores.rows() || edges[e].v >= node_scores.rows())
      throw ContractError("edge_similarity: edge endpoint out of range");
    us[e] = edges[e].u;
    vs[e] = edges[e].v;
  }
  num::Tensor qu = num::gather_rows(tape, node_scores, us);
  num::Tensor qv = num::gather_rows(tape, node_scores, vs);
  num::Tensor dist = num::abs(tape, num::sub(tape, qu, qv));
  num::Tensor p = num::affine(tape, dist, -1.0, 1.0);  // p = 1 - |q_u - q_v|
  for (double pe : p.val())
    if (!(pe >= 0.0 && pe <= 1.0))
      throw ContractError("edge_similarity: similarity left [0,1]; node scores were not "
                          "sigmoid outputs");
  return p;
}

EdgeMask apply_mask(const std::vector<double>& similarities, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw ContractError("apply_mask: tau must lie in [0,1], got " + std::to_string(tau));
  EdgeMask mask;
  mask.tau = tau;
  mask.keep.resize(similarities.size());
  for (std::size_t e = 0; e < similarities.size(); ++e) {
    const bool keep = similarities[e] >= tau;
    mask.keep[e] = keep ? 1 : 0;
    if (keep) ++mask.kept;
    else ++mask.dropped;
  }
  return mask;
}

EdgeMask rank_mask(const std::vector<double>& similarities, double drop_rate) {
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0))
    throw ContractError("rank_mask: drop_rate must lie in [0,1]");
  EdgeMask mask;
  mask.keep.assign(similarities.size(), 1);
  const std::size_t want =
      std::min((std::size_t)std::llround(drop_rate * (double)similarities.size()),
               similarities.size());
  if (want > 0) {
    std::vector<std::size_t> order(similarities.size());
    std::iota(order.begin(), order.end(), (std::size_t)0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double ba = std::floor(similarities[a] * 1000.0);
      const double bb = std::floor(similarities[b] * 1000.0);
      if (ba != bb) return ba < bb;
      return a < b;
    });
    for (std::size_t i = 0; i < want; ++i) mask.keep[order[i]] = 0;
    mask.tau = similarities[order[want - 1]];
  }
  for (std::uint8_t k : mask.keep) (k ? ++mask.kept : ++mask.dropped);
  return mask;
}

EdgeMask random_mask(std::size_t edges, double drop_rate, Rng& rng) {
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0))
    throw ContractError("random_mask: drop_rate must lie in [0,1]");
  EdgeMask mask;
  mask.keep.assign(edges, 1);
  const std::size_t want =
      std::min((std::size_t)std::llround(drop_rate * (double)edges), edges);
  std::vector<std::size_t> order(edges);
  std::iota(order.begin(), order.end(), (std::size_t)0);
  rng.shuffle(order);
  for (std::size_t i = 0; i < want; ++i) mask.keep[order[i]] = 0;
  for (std::uint8_t k : mask.keep) (k ? ++mask.kept : ++mask.dropped);
  return mask;
}

double quantile_threshold(const std::vector<double>& similarities, double drop_rate) {
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0))
    throw ContractError("quantile_threshold: drop_rate must lie in [0,1]");
  if (similarities.empty()) return 0.0;
  const std::size_t want = (std::size_t)std::llround(drop_rate * (double)similarities.size());
  if (want == 0) return 0.0;
  std::vector<double> sorted = similarities;
  std::sort(sorted.begin(), sorted.end());
  if (want >= sorted.size()) return std::nextafter(sorted.back(), 2.0);
  return sorted[want];  // edges strictly below survive the >= test exactly want times or fewer on ties
}

num::Tensor edge_loss(num::Tape& tape, const std::vector<EdgeLossBatch>& batches,
                      const std::vector<int>& labels, const std::vector<graph::Split>& split) {
  std::vector<num::Tensor> sums;
  std::size_t count = 0;
  for (const EdgeLossBatch& batch : batches) {
    if (batch.edges == nullptr) throw ContractError("edge_loss: batch without edges");
    if ((std::size_t)batch.similarities.rows() != batch.edges->size())
      throw DimensionError("edge_loss: similarity column does not match edge list");
    std::vector<int> same, cross;
    for (std::size_t e = 0; e < batch.edges->size(); ++e) {
      const graph::Edge& ed = (*batch.edges)[e];
      if (split[ed.u] != graph::Split::Train || split[ed.v] != graph::Split::Train) continue;
      if (labels[ed.u] < 0 || labels[ed.v] < 0)
        throw ContractError("edge_loss: training node lacks a label");
      (labels[ed.u] == labels[ed.v] ? same : cross).push_back((int)e);
    }
    count += same.size() + cross.size();
    if (!same.empty()) {
      num::Tensor p = num::gather_rows(tape, batch.similarities, same);
      num::Tensor logp = num::safe_log(tape, p, kProbEps);
      sums.push_back(num::affine(tape, num::sum_all(tape, logp), -1.0, 0.0));
    }
    if (!cross.empty()) {
      num::Tensor p = num::gather_rows(tape, batch.similarities, cross);
      num::Tensor q = num::affine(tape, p, -1.0, 1.0);  // 1 - p
      num::Tensor logq = num::safe_log(tape, q, kProbEps);
      sums.push_back(num::affine(tape, num::sum_all(tape, logq), -1.0, 0.0));
    }
  }
  if (count == 0) {
    std::cerr << "[edge-loss] no training-training edges; edge supervision is inactive\n";
    return num::Tensor::scalar(0.0);
  }
  num::Tensor total = sums[0];
  for (std::size_t i = 1; i < sums.size(); ++i) total = num::add(tape, total, sums[i]);
  return num::affine(tape, total, 1.0 / (double)count, 0.0);
}

void ControllerConfig::validate() const {
  if (!(tau0 >= 0.05 && tau0 <= 0.95))
    throw ConfigError("controller tau0 must lie in [0.05, 0.95]");
  if (step <= 0.0) throw ConfigError("controller step must be positive");
  if (interval <= 0) throw ConfigError("controller interval must be positive");
  if (explore_std < 0.0) throw ConfigError("controller explore_std must be >= 0");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0))
    throw ConfigError("controller baseline_decay must lie in [0,1)");
  if (lr <= 0.0) throw ConfigError("controller lr must be positive");
  if (hidden <= 0) throw ConfigError("controller hidden must be positive");
}

Controller::Controller(const ControllerConfig& cfg, Rng& rng) : cfg_(cfg), tau_(cfg.tau0) {
  cfg_.validate();
  w1_ = encoder::glorot(4, cfg_.hidden, rng, "ctrl.w1");
  b1_ = num::Tensor::param(1, cfg_.hidden, std::vector<double>(cfg_.hidden, 0.0), "ctrl.b1");
  w2_ = encoder::glorot(cfg_.hidden, 1, rng, "ctrl.w2");
  b2_ = num::Tensor::param(1, 1, {0.0}, "ctrl.b2");
  opt_ = std::make_unique<num::Adam>(parameters(), cfg_.lr);
}

void Controller::set_tau(double tau) {
  if (!(tau >= 0.05 && tau <= 0.95))
    throw ContractError("controller tau must stay in [0.05, 0.95]");
  tau_ = tau;
}

std::array<double, 4> Controller::observe(const num::Tensor& embeddings, double val_acc,
                                          double total_loss) {
  if (embeddings.size() == 0) throw ContractError("controller observe: empty embeddings");
  const std::vector<double>& vals = embeddings.val();
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= (double)vals.size();
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= (double)vals.size();
  std::array<double, 4> state{mean, std::sqrt(var),
                              seen_ ? val_acc - prev_acc_ : 0.0,
                              seen_ ? total_loss - prev_loss_ : 0.0};
  prev_acc_ = val_acc;
  prev_loss_ = total_loss;
  seen_ = true;
  return state;
}

num::Tensor Controller::policy_forward(num::Tape& tape,
                                       const std::array<double, 4>& state) const {
  num::Tensor s = num::Tensor::from(1, 4, {state[0], state[1], state[2], state[3]});
  num::Tensor z1 =
      num::leaky_relu(tape, num::add_row(tape, num::matmul(tape, s, w1_), b1_), 0.01);
  num::Tensor z2 = num::add_row(tape, num::matmul(tape, z1, w2_), b2_);
  return num::sigmoid(tape, z2);
}

double Controller::policy_mean(const std::array<double, 4>& state) const {
  num::Tape tape;
  return policy_forward(tape, state).item();
}

double Controller::act(const std::array<double, 4>& state, Rng* explore) {
  double a = policy_mean(state);
  if (explore != nullptr && cfg_.explore_std > 0.0) {
    a = explore->normal(a, cfg_.explore_std);
    a = std::clamp(a, 1e-6, 1.0 - 1e-6);  // action space is the open interval (0,1)
  }
  tau_ = std::clamp(tau_ + (2.0 * a - 1.0) * cfg_.step, 0.05, 0.95);
  return a;
}

void Controller::update(const std::vector<ControllerStep>& trajectory) {
  if (trajectory.empty()) return;
  // Gaussian policy: ascending advantage * grad log N(a; mu, sigma) equals
  // descending advantage * (a - mu)^2 / (2 sigma^2) in mu. Advantages use
  // the pre-update baseline for every step so equal-and-opposite rewards
  // on the same (s, a) cancel exactly within one trajectory.
  const double sigma = cfg_.explore_std > 0.0 ? cfg_.explore_std : 1.0;
  num::Tape tape;
  num::Tensor loss;
  bool any = false;
  double reward_sum = 0.0;
  for (const ControllerStep& step : trajectory) {
    reward_sum += step.reward;
    const double advantage = step.reward - baseline_;
    if (advantage == 0.0) continue;
    num::Tensor mu = policy_forward(tape, step.state);
    num::Tensor diff = num::affine(tape, mu, -1.0, step.action);
    num::Tensor sq = num::mul(tape, diff, diff);
    num::Tensor term =
        num::affine(tape, num::sum_all(tape, sq), advantage / (2.0 * sigma * sigma), 0.0);
    loss = any ? num::add(tape, loss, term) : term;
    any = true;
  }
  if (any) {
    tape.backward(loss);
    opt_->step();
  }
  baseline_ = cfg_.baseline_decay * baseline_ +
              (1.0 - cfg_.baseline_decay) * (reward_sum / (double)trajectory.size());
}

std::vector<num::Tensor> Controller::parameters() const { return {w1_, b1_, w2_, b2_}; }

}  // namespace rabot::filter
