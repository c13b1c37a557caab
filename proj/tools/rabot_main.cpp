#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "rabot/config.hpp"
#include "rabot/errors.hpp"
#include "rabot/experiments.hpp"
#include "rabot/graph.hpp"
#include "rabot/synthgen.hpp"
#include "rabot/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace rabot;

namespace {

constexpr const char* kVersion = "0.3.1";

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool trace = false;
};

config::Options load_options(const CommonArgs& args) {
  config::Options opts =
      args.config_path.empty() ? config::defaults() : config::load_file(args.config_path);
  if (args.seed.has_value()) opts.set_seed(*args.seed);
  return opts;
}

void ensure_out_dir(const std::string& out, bool force, bool refuse_existing) {
  if (out.empty()) throw ConfigError("--out is required");
  if (fs::exists(out)) {
    if (refuse_existing && !force && !fs::is_empty(out))
      throw ConfigError("output directory '" + out +
                        "' exists and is not empty; pass --force to overwrite");
  } else {
    fs::create_directories(out);
  }
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << body;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const config::Options& opts, double wall_seconds) {
  json manifest{{"command", command},
                {"config_hash", config::config_hash_hex(opts)},
                {"seed", opts.train.seed},
                {"version", kVersion},
                {"wall_seconds", wall_seconds}};
  write_file(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
}

graph::Graph load_data(const CommonArgs& args) {
  if (args.data_dir.empty()) throw ConfigError("--data is required for this command");
  return graph::load_dataset(args.data_dir);
}

int cmd_generate(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  config::Options opts = load_options(args);
  ensure_out_dir(args.out_dir, args.force, true);
  synthgen::Generated gen = synthgen::generate(opts.gen);
  graph::save_dataset(gen.g, args.out_dir);
  write_file(fs::path(args.out_dir) / "edge_truth.tsv", synthgen::edge_truth_tsv(gen));
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(args.out_dir, "generate", opts, wall);
  long edges = gen.g.edge_count();
  long cross = 0;
  for (const synthgen::EdgeTruth& t : gen.truth)
    if (t.cross) ++cross;
  std::cout << "generated " << gen.g.n << " nodes, " << edges << " edges ("
            << graph::format_double(edges > 0 ? (double)cross / (double)edges : 0.0)
            << " cross fraction) -> " << args.out_dir << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  config::Options opts = load_options(args);
  graph::Graph g = load_data(args);
  ensure_out_dir(args.out_dir, args.force, false);

  std::ofstream filter_log, augment_log;
  trainer::TrainHooks hooks;
  if (args.trace) {
    filter_log.open(fs::path(args.out_dir) / "filter_log.jsonl", std::ios::trunc);
    augment_log.open(fs::path(args.out_dir) / "augment_trace.jsonl", std::ios::trunc);
    hooks.on_filter = [&filter_log](const trainer::FilterLogEntry& e) {
      json j{{"epoch", e.epoch},   {"relation", e.relation},      {"layer", e.layer},
             {"tau", e.tau},       {"kept_edges", e.kept},        {"dropped_edges", e.dropped}};
      if (e.cross_class_dropped >= 0) j["cross_class_dropped"] = e.cross_class_dropped;
      filter_log << j.dump() << "\n";
    };
    hooks.on_augment = [&augment_log](const trainer::AugmentLogEntry& e) {
      augment_log << json{{"epoch", e.epoch},
                          {"parents", json::array({e.parent, e.neighbor})},
                          {"delta", e.delta}}
                         .dump()
                  << "\n";
    };
  }

  trainer::RunReport report = trainer::train(g, opts.train, args.trace ? &hooks : nullptr);
  write_file(fs::path(args.out_dir) / "report.json", trainer::report_json(report));
  write_file(fs::path(args.out_dir) / "curves.csv", trainer::curves_csv(report));
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(args.out_dir, "train", opts, wall);
  std::cout << "test_accuracy=" << graph::format_double(report.test_accuracy)
            << " test_f1=" << graph::format_double(report.test_f1)
            << " best_epoch=" << report.best_epoch << "\n";
  return 0;
}

void print_variant_table(const std::vector<trainer::VariantResult>& variants) {
  for (const trainer::VariantResult& v : variants) {
    std::cout << "  " << v.name << ": acc " << graph::format_double(v.stats.mean_acc)
              << " +/- " << graph::format_double(v.stats.std_acc) << ", f1 "
              << graph::format_double(v.stats.mean_f1) << " +/- "
              << graph::format_double(v.stats.std_f1) << "\n";
  }
}

int cmd_experiment(const std::string& name, const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  config::Options opts = load_options(args);
  graph::Graph g = load_data(args);
  ensure_out_dir(args.out_dir, args.force, false);
  const std::string hash = config::config_hash_hex(opts);
  const std::vector<std::uint64_t> seeds = opts.experiment_seeds();
  const trainer::TrainConfig cfg = opts.experiment_train();

  std::string csv;
  if (name == "random-drop") {
    auto arms = experiments::random_drop(g, cfg, opts.drop_rates, seeds);
    csv = experiments::random_drop_csv(arms, seeds, hash);
    for (const auto& arm : arms)
      std::cout << "  " << arm.method << " @" << graph::format_double(arm.drop_rate)
                << ": acc " << graph::format_double(arm.stats.mean_acc) << "\n";
  } else if (name == "oracle-clean") {
    auto arms = experiments::oracle_clean(g, cfg, {"gcn", "relational"}, seeds);
    csv = experiments::oracle_clean_csv(arms, seeds, hash);
    for (const auto& arm : arms)
      std::cout << "  " << arm.graph_name << "/" << arm.backbone << ": acc "
                << graph::format_double(arm.stats.mean_acc) << "\n";
  } else if (name == "ablation") {
    auto variants = trainer::ablate(g, cfg, seeds);
    csv = experiments::variants_csv(variants, seeds, hash);
    print_variant_table(variants);
  } else if (name == "tau-sweep") {
    auto variants = trainer::threshold_sweep(g, cfg, opts.taus, seeds);
    csv = experiments::variants_csv(variants, seeds, hash);
    print_variant_table(variants);
  } else if (name == "label-fraction") {
    auto arms = experiments::label_fraction(g, cfg, opts.label_fractions, seeds);
    csv = experiments::label_fraction_csv(arms, seeds, hash);
    for (const auto& arm : arms)
      std::cout << "  " << graph::format_double(arm.fraction) << ": acc "
                << graph::format_double(arm.stats.mean_acc) << "\n";
  } else {
    throw ConfigError("unknown experiment '" + name +
                      "' (random-drop, oracle-clean, ablation, tau-sweep, label-fraction)");
  }
  write_file(fs::path(args.out_dir) / (name + ".csv"), csv);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(args.out_dir, "experiment " + name, opts, wall);
  return 0;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_data) {
  cmd->add_option("--config", args.config_path, "flat JSON config file");
  cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->add_option("--seed", args.seed, "override the base RNG seed");
  cmd->add_flag("--force", args.force, "overwrite existing outputs");
  cmd->add_flag("--trace", args.trace, "write per-epoch filter/augment logs");
  if (needs_data) cmd->add_option("--data", args.data_dir, "dataset directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rabot: bot-detection graph learning pipeline"};
  app.set_version_flag("--version", kVersion);
  app.footer(config::help_text());
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, exp_args;
  std::string experiment_name;

  CLI::App* generate = app.add_subcommand("generate", "synthesize a labeled graph dataset");
  add_common(generate, gen_args, false);
  CLI::App* train = app.add_subcommand("train", "train on a dataset directory");
  add_common(train, train_args, true);
  CLI::App* experiment = app.add_subcommand(
      "experiment", "run a named experiment (random-drop, oracle-clean, ablation, "
                    "tau-sweep, label-fraction)");
  experiment->add_option("name", experiment_name, "experiment name")->required();
  add_common(experiment, exp_args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen_args);
    if (train->parsed()) return cmd_train(train_args);
    if (experiment->parsed()) return cmd_experiment(experiment_name, exp_args);
    std::cerr << "no command given\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
