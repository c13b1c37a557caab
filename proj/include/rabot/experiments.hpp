#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rabot/graph.hpp"
#include "rabot/trainer.hpp"

namespace rabot::experiments {

// Learned filtering pinned to a drop rate vs uniform random edge removal
// of the same fraction, trained without any filter machinery.
struct DropArm {
  std::string method;  // "learned" | "random"
  double drop_rate = 0.0;
  std::vector<trainer::RunReport> runs;
  trainer::SeedStats stats;
};

std::vector<DropArm> random_drop(const graph::Graph& g, const trainer::TrainConfig& cfg,
                                 const std::vector<double>& rates,
                                 const std::vector<std::uint64_t>& seeds);

// Raw graph vs ground-truth cleaned graph under a filter-free model, for
// each requested backbone.
struct OracleArm {
  std::string graph_name;  // "raw" | "clean"
  std::string backbone;
  std::vector<trainer::RunReport> runs;
  trainer::SeedStats stats;
};

std::vector<OracleArm> oracle_clean(const graph::Graph& g, const trainer::TrainConfig& cfg,
                                    const std::vector<std::string>& backbones,
                                    const std::vector<std::uint64_t>& seeds);

// Label efficiency: retrain with the training labels subsampled.
struct FractionArm {
  double fraction = 1.0;
  std::vector<trainer::RunReport> runs;
  trainer::SeedStats stats;
};

std::vector<FractionArm> label_fraction(const graph::Graph& g,
                                        const trainer::TrainConfig& cfg,
                                        const std::vector<double>& fractions,
                                        const std::vector<std::uint64_t>& seeds);

// CSV bodies: header, one row per (arm, seed), per-arm mean/std rows, and a
// trailing `# config_hash=<hex>` comment.
std::string random_drop_csv(const std::vector<DropArm>& arms,
                            const std::vector<std::uint64_t>& seeds,
                            const std::string& config_hash);
std::string oracle_clean_csv(const std::vector<OracleArm>& arms,
                             const std::vector<std::uint64_t>& seeds,
                             const std::string& config_hash);
std::string label_fraction_csv(const std::vector<FractionArm>& arms,
                               const std::vector<std::uint64_t>& seeds,
                               const std::string& config_hash);
std::string variants_csv(const std::vector<trainer::VariantResult>& variants,
                         const std::vector<std::uint64_t>& seeds,
                         const std::string& config_hash);

}  // namespace rabot::experiments
