#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rabot/synthgen.hpp"
#include "rabot/trainer.hpp"

namespace rabot::config {

// Everything a run can configure, with benchmark defaults baked in.
// Config files are flat JSON objects whose keys use dots for nesting,
// e.g. {"train.epochs": 100, "gen.n": 200}.
struct Options {
  synthgen::GenSpec gen;
  trainer::TrainConfig train;

  int seed_count = 5;                    // experiments run seeds 1..seed_count
  int experiment_epochs = 0;             // 0: inherit train.epochs
  std::vector<double> drop_rates{0.1, 0.3, 0.5};
  std::vector<double> taus{0.2, 0.4, 0.6, 0.8};
  std::vector<double> label_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  std::vector<std::uint64_t> experiment_seeds() const;
  trainer::TrainConfig experiment_train() const;  // train with experiment_epochs applied

  // Push the global seed into every component that owns one.
  void set_seed(std::uint64_t seed);
};

Options defaults();

// Parses and validates a flat config object; unknown keys are an error.
Options parse(const nlohmann::json& flat);

Options load_file(const std::string& path);

// Every key with its effective value, alphabetically ordered.
nlohmann::json canonical(const Options& opts);

// FNV-1a 64 over the canonical serialization.
std::uint64_t config_hash(const Options& opts);
std::string config_hash_hex(const Options& opts);

// Key/default/description listing for --help.
std::string help_text();

}  // namespace rabot::config
