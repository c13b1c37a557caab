#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "rabot/graph.hpp"
#include "rabot/optimizer.hpp"
#include "rabot/rng.hpp"
#include "rabot/tensor.hpp"

namespace rabot::filter {

// Small per-layer label-likelihood head: sigmoid(MLP(h_i)) in (0,1).
// Edge similarity is 1 - |score_i - score_j|, so endpoints whose predicted
// labels agree keep their edge.
struct SimilarityPredictor {
  num::Tensor w1, b1, w2, b2;

  SimilarityPredictor() = default;
  SimilarityPredictor(int in_dim, int hidden, Rng& rng);

  // n x 1 column of node scores.
  num::Tensor score_nodes(num::Tape& tape, const num::Tensor& h) const;
  std::vector<num::Tensor> parameters() const;
};

// m x 1 column: p_e = 1 - |q_u - q_v| for each edge, in (0,1].
num::Tensor edge_similarity(num::Tape& tape, const num::Tensor& node_scores,
                            const std::vector<graph::Edge>& edges);

// Hard keep/drop decisions at threshold tau. Not differentiable; gradients
// reach the predictor only through the edge loss.
struct EdgeMask {
  std::vector<std::uint8_t> keep;  // 1 = edge survives
  double tau = 0.0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
};

EdgeMask apply_mask(const std::vector<double>& similarities, double tau);

// Threshold that drops round(drop_rate * m) edges when similarities are
// distinct (ties keep more). Used to pin a realized drop rate.
double quantile_threshold(const std::vector<double>& similarities, double drop_rate);

// Drops exactly round(drop_rate * m) lowest-similarity edges. Scores are
// bucketed at 1e-3 before ranking and ties break by edge index, so once the
// predictor saturates the dropped set stops churning between epochs; the mask
// stays hard and non-differentiable. tau reports the score at the cut.
EdgeMask rank_mask(const std::vector<double>& similarities, double drop_rate);

// Control variant: drops the same count chosen uniformly at random, ignoring
// the scores. Lets experiments isolate the value of the learned decision while
// every other part of the pipeline stays identical.
EdgeMask random_mask(std::size_t edges, double drop_rate, Rng& rng);

// Supervision for the predictor on training-training edges only: pull
// similarity up on same-label pairs, down on cross-label pairs.
// One entry per relation; edges and similarity columns must align.
struct EdgeLossBatch {
  const std::vector<graph::Edge>* edges = nullptr;
  num::Tensor similarities;  // m x 1, tape-connected
};

// Mean binary cross-entropy over all contributing edges of one layer.
// Returns a constant zero (with a stderr note) when no training-training
// edge exists.
num::Tensor edge_loss(num::Tape& tape, const std::vector<EdgeLossBatch>& batches,
                      const std::vector<int>& labels, const std::vector<graph::Split>& split);

// REINFORCE threshold controller. State: embedding mean, embedding std,
// change in validation accuracy, change in total loss. Action a in (0,1)
// nudges tau by (2a-1)*step, clamped to [0.05, 0.95].
struct ControllerConfig {
  double tau0 = 0.5;
  double step = 0.05;       // lambda in the tau update
  int interval = 5;         // epochs between actions
  double explore_std = 0.1; // Gaussian exploration around the policy mean
  double baseline_decay = 0.9;
  double lr = 0.01;
  int hidden = 8;

  void validate() const;
};

struct ControllerStep {
  std::array<double, 4> state{};
  double action = 0.0;
  double reward = 0.0;
};

class Controller {
 public:
  Controller() = default;
  Controller(const ControllerConfig& cfg, Rng& rng);

  double tau() const { return tau_; }
  void set_tau(double tau);

  // Builds the policy state from current embeddings and epoch metrics;
  // deltas are relative to the previous observe() call (zero on the first).
  std::array<double, 4> observe(const num::Tensor& embeddings, double val_acc,
                                double total_loss);

  // Policy mean sigma(MLP(state)), no exploration.
  double policy_mean(const std::array<double, 4>& state) const;

  // Draws an exploratory action (pass nullptr for the greedy mean), applies
  // the tau update, and returns the action taken.
  double act(const std::array<double, 4>& state, Rng* explore);

  // REINFORCE update over recorded (state, action, reward) steps with a
  // running-mean baseline.
  void update(const std::vector<ControllerStep>& trajectory);

  const ControllerConfig& config() const { return cfg_; }
  std::vector<num::Tensor> parameters() const;
  double baseline() const { return baseline_; }

 private:
  ControllerConfig cfg_;
  double tau_ = 0.5;
  double baseline_ = 0.0;
  bool seen_ = false;
  double prev_acc_ = 0.0, prev_loss_ = 0.0;
  num::Tensor w1_, b1_, w2_, b2_;
  std::unique_ptr<num::Adam> opt_;

  num::Tensor policy_forward(num::Tape& tape, const std::array<double, 4>& state) const;
};

}  // namespace rabot::filter
