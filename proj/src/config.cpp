#include "rabot/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "rabot/errors.hpp"

namespace rabot::config {

using json = nlohmann::json;

std::vector<std::uint64_t> Options::experiment_seeds() const {
  std::vector<std::uint64_t> seeds;
  for (int s = 1; s <= seed_count; ++s) seeds.push_back((std::uint64_t)s);
  return seeds;
}

trainer::TrainConfig Options::experiment_train() const {
  trainer::TrainConfig cfg = train;
  if (experiment_epochs > 0) cfg.epochs = experiment_epochs;
  return cfg;
}

void Options::set_seed(std::uint64_t seed) {
  gen.seed = seed;
  train.seed = seed;
}

namespace {

struct KeySpec {
  std::string key;
  std::string doc;
  std::function<json(const Options&)> get;
  std::function<void(Options&, const json&)> set;
};

template <typename T>
T expect(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type (value: " + v.dump() + ")");
  }
}

// One row per key keeps parsing, hashing and --help in lockstep.
const std::vector<KeySpec>& registry() {
  static const std::vector<KeySpec> keys = [] {
    std::vector<KeySpec> ks;
    auto add = [&ks](std::string key, std::string doc, std::function<json(const Options&)> get,
                     std::function<void(Options&, const json&)> set) {
      ks.push_back(KeySpec{std::move(key), std::move(doc), std::move(get), std::move(set)});
    };
    add("seed", "base RNG seed for generate/train",
        [](const Options& o) { return json(o.train.seed); },
        [](Options& o, const json& v) { o.set_seed(expect<std::uint64_t>(v, "seed")); });

    add("gen.n", "node count", [](const Options& o) { return json(o.gen.n); },
        [](Options& o, const json& v) { o.gen.n = expect<int>(v, "gen.n"); });
    add("gen.bot_fraction", "fraction of nodes labeled bot",
        [](const Options& o) { return json(o.gen.bot_fraction); },
        [](Options& o, const json& v) {
          o.gen.bot_fraction = expect<double>(v, "gen.bot_fraction");
        });
    add("gen.relations", "relation (edge type) count",
        [](const Options& o) { return json(o.gen.relations); },
        [](Options& o, const json& v) { o.gen.relations = expect<int>(v, "gen.relations"); });
    add("gen.intra_edge_prob", "same-class edge probability (default tunes mean degree ~8)",
        [](const Options& o) { return json(o.gen.intra_edge_prob); },
        [](Options& o, const json& v) {
          o.gen.intra_edge_prob = expect<double>(v, "gen.intra_edge_prob");
        });
    add("gen.cross_edge_prob", "cross-class edge probability (default tunes ~25% cross edges)",
        [](const Options& o) { return json(o.gen.cross_edge_prob); },
        [](Options& o, const json& v) {
          o.gen.cross_edge_prob = expect<double>(v, "gen.cross_edge_prob");
        });
    add("gen.dims.numerical", "numerical feature width",
        [](const Options& o) { return json(o.gen.d_numerical); },
        [](Options& o, const json& v) {
          o.gen.d_numerical = expect<int>(v, "gen.dims.numerical");
        });
    add("gen.dims.boolean", "boolean feature width",
        [](const Options& o) { return json(o.gen.d_boolean); },
        [](Options& o, const json& v) { o.gen.d_boolean = expect<int>(v, "gen.dims.boolean"); });
    add("gen.dims.description", "description embedding width",
        [](const Options& o) { return json(o.gen.d_description); },
        [](Options& o, const json& v) {
          o.gen.d_description = expect<int>(v, "gen.dims.description");
        });
    add("gen.dims.tweet", "tweet embedding width",
        [](const Options& o) { return json(o.gen.d_tweet); },
        [](Options& o, const json& v) { o.gen.d_tweet = expect<int>(v, "gen.dims.tweet"); });
    add("gen.max_tweets", "per-node tweet count is uniform on {0..max}",
        [](const Options& o) { return json(o.gen.max_tweets); },
        [](Options& o, const json& v) { o.gen.max_tweets = expect<int>(v, "gen.max_tweets"); });
    add("gen.class_mean_separation", "centroid distance in per-dim std units",
        [](const Options& o) { return json(o.gen.class_mean_separation); },
        [](Options& o, const json& v) {
          o.gen.class_mean_separation = expect<double>(v, "gen.class_mean_separation");
        });
    add("gen.camouflage_feature_fraction",
        "fraction of bots drawing features from the human centroid",
        [](const Options& o) { return json(o.gen.camouflage_feature_fraction); },
        [](Options& o, const json& v) {
          o.gen.camouflage_feature_fraction =
              expect<double>(v, "gen.camouflage_feature_fraction");
        });
    add("gen.split.train", "train fraction", [](const Options& o) { return json(o.gen.split.train); },
        [](Options& o, const json& v) { o.gen.split.train = expect<double>(v, "gen.split.train"); });
    add("gen.split.val", "validation fraction",
        [](const Options& o) { return json(o.gen.split.val); },
        [](Options& o, const json& v) { o.gen.split.val = expect<double>(v, "gen.split.val"); });
    add("gen.split.test", "test fraction", [](const Options& o) { return json(o.gen.split.test); },
        [](Options& o, const json& v) { o.gen.split.test = expect<double>(v, "gen.split.test"); });

    add("train.epochs", "training epochs", [](const Options& o) { return json(o.train.epochs); },
        [](Options& o, const json& v) { o.train.epochs = expect<int>(v, "train.epochs"); });
    add("train.lr", "learning rate", [](const Options& o) { return json(o.train.lr); },
        [](Options& o, const json& v) { o.train.lr = expect<double>(v, "train.lr"); });
    add("train.lambda_s", "synthetic loss weight in [0,1]",
        [](const Options& o) { return json(o.train.lambda_s); },
        [](Options& o, const json& v) { o.train.lambda_s = expect<double>(v, "train.lambda_s"); });
    add("train.lambda_e", "edge retention loss weight",
        [](const Options& o) { return json(o.train.lambda_e); },
        [](Options& o, const json& v) { o.train.lambda_e = expect<double>(v, "train.lambda_e"); });
    add("train.k", "oversampling neighborhood size",
        [](const Options& o) { return json(o.train.k); },
        [](Options& o, const json& v) { o.train.k = expect<int>(v, "train.k"); });
    add("train.augment", "enable minority oversampling",
        [](const Options& o) { return json(o.train.enable_augment); },
        [](Options& o, const json& v) {
          o.train.enable_augment = expect<bool>(v, "train.augment");
        });
    add("train.filter", "enable edge filtering",
        [](const Options& o) { return json(o.train.enable_filter); },
        [](Options& o, const json& v) {
          o.train.enable_filter = expect<bool>(v, "train.filter");
        });
    add("train.attention", "enable multi-head fusion attention",
        [](const Options& o) { return json(o.train.enable_attention); },
        [](Options& o, const json& v) {
          o.train.enable_attention = expect<bool>(v, "train.attention");
        });
    add("train.gnn", "enable message passing (off: classify fused embeddings)",
        [](const Options& o) { return json(o.train.enable_gnn); },
        [](Options& o, const json& v) { o.train.enable_gnn = expect<bool>(v, "train.gnn"); });
    add("train.dynamic_tau", "adapt the threshold with the controller",
        [](const Options& o) { return json(o.train.dynamic_tau); },
        [](Options& o, const json& v) {
          o.train.dynamic_tau = expect<bool>(v, "train.dynamic_tau");
        });
    add("train.fixed_tau", "threshold when dynamic_tau is false",
        [](const Options& o) { return json(o.train.fixed_tau); },
        [](Options& o, const json& v) {
          o.train.fixed_tau = expect<double>(v, "train.fixed_tau");
        });
    add("train.drop_rate", "quantile drop rate per layer (-1: threshold mode)",
        [](const Options& o) { return json(o.train.drop_rate); },
        [](Options& o, const json& v) {
          o.train.drop_rate = expect<double>(v, "train.drop_rate");
        });
    add("train.drop_warmup", "epochs to ramp the quantile drop rate in from zero",
        [](const Options& o) { return json(o.train.drop_warmup); },
        [](Options& o, const json& v) {
          o.train.drop_warmup = expect<int>(v, "train.drop_warmup");
        });
    add("train.random_mask", "drop uniformly at random instead of by score (control arm)",
        [](const Options& o) { return json(o.train.random_mask); },
        [](Options& o, const json& v) {
          o.train.random_mask = expect<bool>(v, "train.random_mask");
        });
    add("train.train_fraction", "stratified subsample of training labels",
        [](const Options& o) { return json(o.train.train_fraction); },
        [](Options& o, const json& v) {
          o.train.train_fraction = expect<double>(v, "train.train_fraction");
        });
    add("train.filter_hidden", "similarity predictor hidden width",
        [](const Options& o) { return json(o.train.filter_hidden); },
        [](Options& o, const json& v) {
          o.train.filter_hidden = expect<int>(v, "train.filter_hidden");
        });
    add("train.encoder.latent_dim", "fused embedding width (divisible by 4 and heads)",
        [](const Options& o) { return json(o.train.encoder.latent_dim); },
        [](Options& o, const json& v) {
          o.train.encoder.latent_dim = expect<int>(v, "train.encoder.latent_dim");
        });
    add("train.encoder.heads", "attention head count",
        [](const Options& o) { return json(o.train.encoder.heads); },
        [](Options& o, const json& v) {
          o.train.encoder.heads = expect<int>(v, "train.encoder.heads");
        });
    add("train.encoder.scope", "attention scope: modality | global",
        [](const Options& o) {
          return json(o.train.encoder.scope == encoder::AttentionScope::Modality ? "modality"
                                                                                 : "global");
        },
        [](Options& o, const json& v) {
          const std::string s = expect<std::string>(v, "train.encoder.scope");
          if (s == "modality") o.train.encoder.scope = encoder::AttentionScope::Modality;
          else if (s == "global") o.train.encoder.scope = encoder::AttentionScope::Global;
          else throw ConfigError("train.encoder.scope must be 'modality' or 'global'");
        });
    add("train.backbone.kind", "gcn | attn | relational",
        [](const Options& o) {
          return json(backbones::backbone_kind_name(o.train.backbone.kind));
        },
        [](Options& o, const json& v) {
          o.train.backbone.kind =
              backbones::backbone_kind_from(expect<std::string>(v, "train.backbone.kind"));
        });
    add("train.backbone.layers", "message passing depth",
        [](const Options& o) { return json(o.train.backbone.layers); },
        [](Options& o, const json& v) {
          o.train.backbone.layers = expect<int>(v, "train.backbone.layers");
        });
    add("train.backbone.hidden", "hidden width (0: match encoder latent_dim)",
        [](const Options& o) { return json(o.train.backbone.hidden); },
        [](Options& o, const json& v) {
          o.train.backbone.hidden = expect<int>(v, "train.backbone.hidden");
        });
    add("train.controller.tau0", "initial threshold",
        [](const Options& o) { return json(o.train.controller.tau0); },
        [](Options& o, const json& v) {
          o.train.controller.tau0 = expect<double>(v, "train.controller.tau0");
        });
    add("train.controller.step", "threshold step size per action",
        [](const Options& o) { return json(o.train.controller.step); },
        [](Options& o, const json& v) {
          o.train.controller.step = expect<double>(v, "train.controller.step");
        });
    add("train.controller.interval", "epochs between controller actions",
        [](const Options& o) { return json(o.train.controller.interval); },
        [](Options& o, const json& v) {
          o.train.controller.interval = expect<int>(v, "train.controller.interval");
        });
    add("train.controller.explore_std", "Gaussian exploration std",
        [](const Options& o) { return json(o.train.controller.explore_std); },
        [](Options& o, const json& v) {
          o.train.controller.explore_std = expect<double>(v, "train.controller.explore_std");
        });
    add("train.controller.baseline_decay", "running reward baseline decay",
        [](const Options& o) { return json(o.train.controller.baseline_decay); },
        [](Options& o, const json& v) {
          o.train.controller.baseline_decay =
              expect<double>(v, "train.controller.baseline_decay");
        });
    add("train.controller.lr", "policy learning rate",
        [](const Options& o) { return json(o.train.controller.lr); },
        [](Options& o, const json& v) {
          o.train.controller.lr = expect<double>(v, "train.controller.lr");
        });
    add("train.controller.hidden", "policy hidden width",
        [](const Options& o) { return json(o.train.controller.hidden); },
        [](Options& o, const json& v) {
          o.train.controller.hidden = expect<int>(v, "train.controller.hidden");
        });

    add("experiment.seeds", "experiments run seeds 1..N",
        [](const Options& o) { return json(o.seed_count); },
        [](Options& o, const json& v) { o.seed_count = expect<int>(v, "experiment.seeds"); });
    add("experiment.epochs", "epochs per experiment run (0: train.epochs)",
        [](const Options& o) { return json(o.experiment_epochs); },
        [](Options& o, const json& v) {
          o.experiment_epochs = expect<int>(v, "experiment.epochs");
        });
    add("experiment.drop_rates", "drop-rate grid for the random-drop comparison",
        [](const Options& o) { return json(o.drop_rates); },
        [](Options& o, const json& v) {
          o.drop_rates = expect<std::vector<double>>(v, "experiment.drop_rates");
        });
    add("experiment.taus", "fixed-threshold grid for the sweep",
        [](const Options& o) { return json(o.taus); },
        [](Options& o, const json& v) {
          o.taus = expect<std::vector<double>>(v, "experiment.taus");
        });
    add("experiment.label_fractions", "training label fractions",
        [](const Options& o) { return json(o.label_fractions); },
        [](Options& o, const json& v) {
          o.label_fractions = expect<std::vector<double>>(v, "experiment.label_fractions");
        });
    return ks;
  }();
  return keys;
}

void post_validate(Options& opts) {
  if (opts.train.backbone.hidden == 0)
    opts.train.backbone.hidden = opts.train.encoder.latent_dim;
  if (opts.seed_count < 1) throw ConfigError("experiment.seeds must be >= 1");
  if (opts.experiment_epochs < 0) throw ConfigError("experiment.epochs must be >= 0");
  for (double r : opts.drop_rates)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("experiment.drop_rates must lie in [0,1]");
  for (double t : opts.taus)
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("experiment.taus must lie in [0,1]");
  for (double f : opts.label_fractions)
    if (!(f > 0.0 && f <= 1.0))
      throw ConfigError("experiment.label_fractions must lie in (0,1]");
  opts.gen.validate();
  opts.train.validate();
}

}  // namespace

Options defaults() {
  Options opts;
  post_validate(opts);
  return opts;
}

Options parse(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object");
  Options opts;
  for (const auto& [key, value] : flat.items()) {
    bool known = false;
    for (const KeySpec& spec : registry()) {
      if (spec.key == key) {
        spec.set(opts, value);
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown config key '" + key + "' (see --help for the list)");
  }
  post_validate(opts);
  return opts;
}

Options load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json flat;
  try {
    in >> flat;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse(flat);
}

json canonical(const Options& opts) {
  json out = json::object();
  for (const KeySpec& spec : registry()) out[spec.key] = spec.get(opts);
  return out;
}

std::uint64_t config_hash(const Options& opts) {
  const std::string dump = canonical(opts).dump();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash_hex(const Options& opts) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)config_hash(opts));
  return std::string(buf);
}

std::string help_text() {
  const Options base;
  std::ostringstream out;
  out << "Config keys (flat JSON, dotted names), with defaults:\n";
  for (const KeySpec& spec : registry())
    out << "  " << spec.key << " = " << spec.get(base).dump() << "\n      " << spec.doc << "\n";
  return out.str();
}

}  // namespace rabot::config
