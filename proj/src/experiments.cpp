#include "rabot/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rabot/errors.hpp"
#include "rabot/rng.hpp"

namespace rabot::experiments {

namespace {

// Uniform edge deletion at the same realized rate as the learned filter:
// round(rate * E) edges removed per relation, chosen with a seeded shuffle,
// and the damaged graph trained filter-free. This is the classical "randomly
// remove the same proportion of edges" baseline.
graph::Graph delete_random_edges(const graph::Graph& g, double rate, std::uint64_t seed) {
  graph::Graph out = g;
  Rng rng(seed * 2654435761ULL + 17);
  for (std::size_t r = 0; r < out.relations.size(); ++r) {
    std::vector<graph::Edge>& edges = out.relations[r];
    const std::size_t remove =
        std::min((std::size_t)std::llround(rate * (double)edges.size()), edges.size());
    rng.shuffle(edges);
    edges.resize(edges.size() - remove);
    std::sort(edges.begin(), edges.end());
  }
  return out;
}

}  // namespace

std::vector<DropArm> random_drop(const graph::Graph& g, const trainer::TrainConfig& cfg,
                                 const std::vector<double>& rates,
                                 const std::vector<std::uint64_t>& seeds) {
  if (rates.empty()) throw ContractError("random_drop needs at least one rate");
  if (seeds.empty()) throw ContractError("random_drop needs at least one seed");
  std::vector<DropArm> arms;
  for (double rate : rates) {
    DropArm learned;
    learned.method = "learned";
    learned.drop_rate = rate;
    learned.runs.resize(seeds.size());
    arms.push_back(std::move(learned));
    DropArm random;
    random.method = "random";
    random.drop_rate = rate;
    random.runs.resize(seeds.size());
    arms.push_back(std::move(random));
  }
  // Learned arm: full pipeline filtering at the nominal rate (the rank mask
  // realizes it exactly). Random arm: the same proportion of edges deleted
  // uniformly up front, trained filter-free on the damaged graph.
  trainer::run_indexed(arms.size() * seeds.size(), [&](std::size_t idx) {
    const std::size_t a = idx / seeds.size();
    const std::size_t s = idx % seeds.size();
    DropArm& arm = arms[a];
    trainer::TrainConfig run_cfg = cfg;
    run_cfg.seed = seeds[s];
    run_cfg.dynamic_tau = false;
    if (arm.method == "learned") {
      run_cfg.enable_filter = true;
      run_cfg.drop_rate = arm.drop_rate;
      arm.runs[s] = trainer::train(g, run_cfg);
    } else {
      run_cfg.enable_filter = false;
      run_cfg.lambda_e = 0.0;
      arm.runs[s] = trainer::train(delete_random_edges(g, arm.drop_rate, seeds[s]), run_cfg);
    }
  });
  for (DropArm& arm : arms) arm.stats = trainer::summarize(arm.runs);
  return arms;
}

std::vector<OracleArm> oracle_clean(const graph::Graph& g, const trainer::TrainConfig& cfg,
                                    const std::vector<std::string>& backbones,
                                    const std::vector<std::uint64_t>& seeds) {
  if (backbones.empty()) throw ContractError("oracle_clean needs at least one backbone");
  if (seeds.empty()) throw ContractError("oracle_clean needs at least one seed");
  const graph::Graph cleaned = graph::remove_cross_class_edges(g);
  std::vector<OracleArm> arms;
  for (const std::string& bb : backbones) {
    for (const char* name : {"raw", "clean"}) {
      OracleArm arm;
      arm.graph_name = name;
      arm.backbone = bb;
      arm.runs.resize(seeds.size());
      arms.push_back(std::move(arm));
    }
  }
  trainer::run_indexed(arms.size() * seeds.size(), [&](std::size_t idx) {
    const std::size_t a = idx / seeds.size();
    const std::size_t s = idx % seeds.size();
    OracleArm& arm = arms[a];
    trainer::TrainConfig run_cfg = cfg;
    run_cfg.seed = seeds[s];
    run_cfg.enable_filter = false;
    run_cfg.dynamic_tau = false;
    run_cfg.lambda_e = 0.0;
    run_cfg.backbone.kind = backbones::backbone_kind_from(arm.backbone);
    arm.runs[s] = trainer::train(arm.graph_name == "raw" ? g : cleaned, run_cfg);
  });
  for (OracleArm& arm : arms) arm.stats = trainer::summarize(arm.runs);
  return arms;
}

std::vector<FractionArm> label_fraction(const graph::Graph& g,
                                        const trainer::TrainConfig& cfg,
                                        const std::vector<double>& fractions,
                                        const std::vector<std::uint64_t>& seeds) {
  if (fractions.empty()) throw ContractError("label_fraction needs at least one fraction");
  if (seeds.empty()) throw ContractError("label_fraction needs at least one seed");
  std::vector<FractionArm> arms(fractions.size());
  for (std::size_t f = 0; f < fractions.size(); ++f) {
    arms[f].fraction = fractions[f];
    arms[f].runs.resize(seeds.size());
  }
  trainer::run_indexed(arms.size() * seeds.size(), [&](std::size_t idx) {
    const std::size_t f = idx / seeds.size();
    const std::size_t s = idx % seeds.size();
    trainer::TrainConfig run_cfg = cfg;
    run_cfg.seed = seeds[s];
    run_cfg.train_fraction = arms[f].fraction;
    arms[f].runs[s] = trainer::train(g, run_cfg);
  });
  for (FractionArm& arm : arms) arm.stats = trainer::summarize(arm.runs);
  return arms;
}

namespace {

void append_runs(std::ostringstream& out, const std::string& prefix,
                 const std::vector<trainer::RunReport>& runs,
                 const trainer::SeedStats& stats,
                 const std::vector<std::uint64_t>& seeds) {
  for (std::size_t s = 0; s < runs.size(); ++s) {
    out << prefix << ',' << seeds[s] << ',' << graph::format_double(runs[s].test_accuracy)
        << ',' << graph::format_double(runs[s].test_f1) << '\n';
  }
  out << prefix << ",mean," << graph::format_double(stats.mean_acc) << ','
      << graph::format_double(stats.mean_f1) << '\n';
  out << prefix << ",std," << graph::format_double(stats.std_acc) << ','
      << graph::format_double(stats.std_f1) << '\n';
}

}  // namespace

std::string random_drop_csv(const std::vector<DropArm>& arms,
                            const std::vector<std::uint64_t>& seeds,
                            const std::string& config_hash) {
  std::ostringstream out;
  out << "method,drop_rate,seed,test_accuracy,test_f1\n";
  for (const DropArm& arm : arms)
    append_runs(out, arm.method + ',' + graph::format_double(arm.drop_rate), arm.runs,
                arm.stats, seeds);
  out << "# config_hash=" << config_hash << '\n';
  return out.str();
}

std::string oracle_clean_csv(const std::vector<OracleArm>& arms,
                             const std::vector<std::uint64_t>& seeds,
                             const std::string& config_hash) {
  std::ostringstream out;
  out << "graph,backbone,seed,test_accuracy,test_f1\n";
  for (const OracleArm& arm : arms)
    append_runs(out, arm.graph_name + ',' + arm.backbone, arm.runs, arm.stats, seeds);
  out << "# config_hash=" << config_hash << '\n';
  return out.str();
}

std::string label_fraction_csv(const std::vector<FractionArm>& arms,
                               const std::vector<std::uint64_t>& seeds,
                               const std::string& config_hash) {
  std::ostringstream out;
  out << "fraction,seed,test_accuracy,test_f1\n";
  for (const FractionArm& arm : arms)
    append_runs(out, graph::format_double(arm.fraction), arm.runs, arm.stats, seeds);
  out << "# config_hash=" << config_hash << '\n';
  return out.str();
}

std::string variants_csv(const std::vector<trainer::VariantResult>& variants,
                         const std::vector<std::uint64_t>& seeds,
                         const std::string& config_hash) {
  std::ostringstream out;
  out << "variant,seed,test_accuracy,test_f1\n";
  for (const trainer::VariantResult& v : variants)
    append_runs(out, v.name, v.runs, v.stats, seeds);
  out << "# config_hash=" << config_hash << '\n';
  return out.str();
}

}  // namespace rabot::experiments
