#include "rabot/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rabot/errors.hpp"
#include "rabot/rng.hpp"

namespace rabot::synthgen {

void GenSpec::validate() const {
  if (n < 10) throw ConfigError("generator needs n >= 10");
  if (!(bot_fraction > 0.0 && bot_fraction <= 0.5))
    throw ConfigError("bot_fraction must lie in (0, 0.5]");
  if (bot_count() < 2) throw ConfigError("spec yields fewer than 2 bots; raise n or bot_fraction");
  if (relations < 1) throw ConfigError("need at least one relation");
  if (!(intra_edge_prob >= 0.0 && intra_edge_prob <= 1.0))
    throw ConfigError("intra_edge_prob must lie in [0,1]");
  if (!(cross_edge_prob >= 0.0 && cross_edge_prob <= 1.0))
    throw ConfigError("cross_edge_prob must lie in [0,1]");
  if (d_numerical < 1 || d_boolean < 1 || d_description < 1 || d_tweet < 1)
    throw ConfigError("feature dims must be >= 1");
  if (max_tweets < 0) throw ConfigError("max_tweets must be >= 0");
  if (class_mean_separation < 0.0) throw ConfigError("class_mean_separation must be >= 0");
  if (!(camouflage_feature_fraction >= 0.0 && camouflage_feature_fraction <= 1.0))
    throw ConfigError("camouflage_feature_fraction must lie in [0,1]");
  const double split_sum = split.train + split.val + split.test;
  if (std::abs(split_sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

int GenSpec::bot_count() const { return (int)std::llround(bot_fraction * (double)n); }

namespace {

std::string relation_name(int r) {
  if (r == 0) return "follow";
  if (r == 1) return "friend";
  return "rel" + std::to_string(r);
}

}  // namespace

Generated generate(const GenSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  Rng label_rng = root.fork(1), camo_rng = root.fork(2), dir_rng = root.fork(3),
      feat_rng = root.fork(4), tweet_rng = root.fork(5);

  Generated out;
  graph::Graph& g = out.g;
  g.n = spec.n;

  // Class assignment: exactly round(bot_fraction * n) bots at shuffled ids.
  const int bots = spec.bot_count();
  std::vector<int> order(spec.n);
  for (int i = 0; i < spec.n; ++i) order[i] = i;
  label_rng.shuffle(order);
  g.labels.assign(spec.n, 0);
  for (int b = 0; b < bots; ++b) g.labels[order[b]] = 1;

  // Camouflaged bots take their features from the human centroid.
  std::vector<int> bot_ids;
  for (int i = 0; i < spec.n; ++i)
    if (g.labels[i] == 1) bot_ids.push_back(i);
  camo_rng.shuffle(bot_ids);
  const int camo = (int)std::llround(spec.camouflage_feature_fraction * (double)bots);
  std::vector<char> feature_human(spec.n, 1);
  for (std::size_t idx = 0; idx < bot_ids.size(); ++idx)
    feature_human[bot_ids[idx]] = idx < (std::size_t)camo ? 1 : 0;

  // Bot centroid sits class_mean_separation away from the human centroid
  // (origin) along one random unit direction through all feature dims.
  const int d_total = spec.d_numerical + spec.d_boolean + spec.d_description + spec.d_tweet;
  std::vector<double> dir(d_total);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : dir) {
      v = dir_rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
  } while (norm < 1e-12);
  for (double& v : dir) v = v / norm * spec.class_mean_separation;

  const int off_bool = spec.d_numerical;
  const int off_desc = off_bool + spec.d_boolean;
  const int off_tweet = off_desc + spec.d_description;

  num::Tensor numerical = num::Tensor::zeros(spec.n, spec.d_numerical);
  num::Tensor boolean_mat = num::Tensor::zeros(spec.n, spec.d_boolean);
  num::Tensor description = num::Tensor::zeros(spec.n, spec.d_description);
  g.features.tweets.assign(spec.n, {});
  g.features.tweet_dim = spec.d_tweet;

  for (int i = 0; i < spec.n; ++i) {
    const bool shifted = g.labels[i] == 1 && !feature_human[i];
    for (int j = 0; j < spec.d_numerical; ++j)
      numerical.at(i, j) = feat_rng.normal() + (shifted ? dir[j] : 0.0);
    for (int j = 0; j < spec.d_boolean; ++j) {
      const double z = feat_rng.normal() + (shifted ? dir[off_bool + j] : 0.0);
      boolean_mat.at(i, j) = z > 0.0 ? 1.0 : 0.0;
    }
    for (int j = 0; j < spec.d_description; ++j)
      description.at(i, j) = feat_rng.normal() + (shifted ? dir[off_desc + j] : 0.0);
    const std::uint64_t count = tweet_rng.below((std::uint64_t)spec.max_tweets + 1);
    auto& list = g.features.tweets[i];
    for (std::uint64_t t = 0; t < count; ++t) {
      std::vector<double> emb(spec.d_tweet);
      for (int j = 0; j < spec.d_tweet; ++j)
        emb[j] = tweet_rng.normal() + (shifted ? dir[off_tweet + j] : 0.0);
      list.push_back(std::move(emb));
    }
  }
  g.features.numerical = numerical;
  g.features.boolean_mat = boolean_mat;
  g.features.description = description;

  // Pool tweets exactly the way the loader does, so a save/load round trip
  // reproduces the in-memory graph bit for bit.
  {
    std::vector<double> pooled((std::size_t)spec.n * spec.d_tweet, 0.0);
    for (int i = 0; i < spec.n; ++i) {
      const auto& list = g.features.tweets[i];
      if (list.empty()) continue;
      double* row = pooled.data() + (std::size_t)i * spec.d_tweet;
      for (const auto& emb : list)
        for (int j = 0; j < spec.d_tweet; ++j) row[j] += emb[j];
      for (int j = 0; j < spec.d_tweet; ++j) row[j] /= (double)list.size();
    }
    g.features.tweet_mean = num::Tensor::from(spec.n, spec.d_tweet, std::move(pooled));
  }

  for (int r = 0; r < spec.relations; ++r) {
    Rng edge_rng = root.fork(16 + (std::uint64_t)r);
    g.relation_names.push_back(relation_name(r));
    std::vector<graph::Edge> edges;
    for (int i = 0; i < spec.n; ++i) {
      for (int j = i + 1; j < spec.n; ++j) {
        const bool cross = g.labels[i] != g.labels[j];
        const double p = cross ? spec.cross_edge_prob : spec.intra_edge_prob;
        if (edge_rng.uniform() < p) {
          edges.push_back(graph::Edge{i, j});
          out.truth.push_back(EdgeTruth{r, graph::Edge{i, j}, cross});
        }
      }
    }
    g.relations.push_back(std::move(edges));
  }

  graph::SplitSpec split = spec.split;
  split.seed = Rng(spec.seed).fork(32).next();
  g.split.assign(spec.n, graph::Split::Train);
  g = graph::assign_splits(g, split);
  return out;
}

std::string edge_truth_tsv(const Generated& gen) {
  std::ostringstream out;
  for (const EdgeTruth& t : gen.truth) {
    out << gen.g.relation_names[t.relation] << '\t' << t.e.u << '\t' << t.e.v << '\t'
        << (t.cross ? "cross" : "intra") << '\n';
  }
  return out.str();
}

}  // namespace rabot::synthgen
