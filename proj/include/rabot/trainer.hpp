#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rabot/backbones.hpp"
#include "rabot/edgefilter.hpp"
#include "rabot/encoder.hpp"
#include "rabot/graph.hpp"

namespace rabot::trainer {

struct TrainConfig {
  int epochs = 300;
  double lr = 0.001;
  double lambda_s = 0.5;  // weight of the synthetic-node loss term
  double lambda_e = 0.6;  // weight of the edge-retention loss term
  int k = 5;              // oversampling neighborhood size
  std::uint64_t seed = 1;

  bool enable_augment = true;
  bool enable_filter = true;
  bool enable_attention = true;
  bool enable_gnn = true;  // false: classifier reads fused embeddings directly
  bool dynamic_tau = true;
  double fixed_tau = 0.5;  // threshold when dynamic_tau is off

  // >= 0: per layer/relation, pick the threshold that drops this fraction
  // of edges instead of using a fixed/controlled tau. Used by the
  // drop-rate-matched comparison.
  double drop_rate = -1.0;
  // Ramp the quantile drop rate linearly from ~0 to drop_rate over this many
  // epochs, so masking phases in while the similarity scores are still
  // untrained. 0 applies the full rate from the first epoch.
  int drop_warmup = 0;
  // Control arm for drop-rate experiments: replace the learned drop decision
  // with a seeded uniform-random mask at the same rate. Scores and the edge
  // loss are still computed per config; only the mask source changes.
  bool random_mask = false;

  double train_fraction = 1.0;  // stratified subsample of training labels
  int filter_hidden = 64;       // similarity predictor hidden width

  encoder::EncoderConfig encoder;
  backbones::BackboneConfig backbone;
  filter::ControllerConfig controller;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss_total = 0, loss_gnn = 0, loss_aug = 0, loss_edge = 0;
  double val_acc = 0, val_f1 = 0;
  double tau = 0;
};

struct RunReport {
  std::vector<EpochRecord> curves;
  int best_epoch = -1;
  double best_val_accuracy = 0;
  double test_accuracy = 0;
  double test_f1 = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0;  // kept out of report_json so reports are reproducible
};

struct FilterLogEntry {
  int epoch = 0;
  int layer = 0;
  std::string relation;
  double tau = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  long cross_class_dropped = -1;  // -1 when true labels are unknown
};

struct AugmentLogEntry {
  int epoch = 0;
  int parent = 0;
  int neighbor = 0;
  double delta = 0;
};

struct TrainHooks {
  std::function<void(const FilterLogEntry&)> on_filter;
  std::function<void(const AugmentLogEntry&)> on_augment;
};

RunReport train(const graph::Graph& g, const TrainConfig& cfg,
                const TrainHooks* hooks = nullptr);

// Deterministic serializations. report_json omits wall_seconds so identical
// config + seed reproduce the file byte for byte.
std::string report_json(const RunReport& report);
std::string curves_csv(const RunReport& report);

struct SeedStats {
  double mean_acc = 0, std_acc = 0;
  double mean_f1 = 0, std_f1 = 0;
};

struct VariantResult {
  std::string name;
  std::vector<RunReport> runs;  // aligned with the shared seed list
  SeedStats stats;
};

SeedStats summarize(const std::vector<RunReport>& runs);

// Component knock-outs sharing one seed list: full, w/o MA (attention),
// w/o FA (oversampling), w/o EF (filtering + edge loss), w/o GC (message
// passing).
std::vector<VariantResult> ablate(const graph::Graph& g, const TrainConfig& cfg,
                                  const std::vector<std::uint64_t>& seeds);

// Fixed thresholds from `taus` plus one dynamic-controller setting.
std::vector<VariantResult> threshold_sweep(const graph::Graph& g, const TrainConfig& cfg,
                                           const std::vector<double>& taus,
                                           const std::vector<std::uint64_t>& seeds);

// Runs fn(0..count-1) across worker threads (RABOT_THREADS caps the count;
// single-threaded when 1). Results land in submission order regardless of
// scheduling, so downstream output is deterministic.
void run_indexed(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace rabot::trainer
