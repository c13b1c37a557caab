#include "rabot/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rabot/augment.hpp"
#include "rabot/errors.hpp"
#include "rabot/optimizer.hpp"

namespace rabot::trainer {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (!(lambda_s >= 0.0 && lambda_s <= 1.0)) throw ConfigError("lambda_s must lie in [0,1]");
  if (lambda_e < 0.0) throw ConfigError("lambda_e must be >= 0");
  if (k < 1) throw ConfigError("oversampling k must be >= 1");
  if (!(fixed_tau >= 0.0 && fixed_tau <= 1.0)) throw ConfigError("fixed_tau must lie in [0,1]");
  if (drop_rate > 1.0) throw ConfigError("drop_rate must lie in [0,1]");
  if (drop_warmup < 0) throw ConfigError("drop_warmup must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw ConfigError("train_fraction must lie in (0,1]");
  if (filter_hidden < 1) throw ConfigError("filter_hidden must be >= 1");
  encoder.validate();
  backbone.validate();
  controller.validate();
}

namespace {

struct ModelState {
  std::vector<std::vector<double>> values;
  double tau = 0.5;
  double rate = -1.0;   // effective quantile drop rate at the checkpoint
  int mask_epoch = -1;  // epoch whose mask stream the checkpoint was built on
};

std::vector<std::vector<double>> snapshot(const std::vector<num::Tensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const num::Tensor& p : params) out.push_back(p.val());
  return out;
}

void restore(const std::vector<num::Tensor>& params,
             const std::vector<std::vector<double>>& vals) {
  if (params.size() != vals.size()) throw ContractError("checkpoint/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    num::Tensor p = params[i];  // shares storage
    p.load_values(vals[i]);
  }
}

}  // namespace

RunReport train(const graph::Graph& g, const TrainConfig& cfg, const TrainHooks* hooks) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  if (g.n == 0) throw DataError("cannot train on an empty graph");
  const int n = (int)g.n;
  const int relations = (int)g.relation_count();

  // Supervision split: a train_fraction < 1 hides part of the training
  // labels (stratified), leaving validation/test untouched.
  std::vector<graph::Split> sup_split = g.split;
  if (cfg.train_fraction < 1.0) {
    Rng frac_rng = Rng(cfg.seed).fork(8);
    for (int cls = 0; cls <= 1; ++cls) {
      std::vector<int> ids;
      for (int i = 0; i < n; ++i)
        if (g.split[i] == graph::Split::Train && g.labels[i] == cls) ids.push_back(i);
      const long keep =
          std::max<long>(1, std::llround(cfg.train_fraction * (double)ids.size()));
      frac_rng.shuffle(ids);
      for (std::size_t j = (std::size_t)keep; j < ids.size(); ++j)
        sup_split[ids[j]] = graph::Split::Test;  // hidden from every loss term
    }
  }
  std::vector<int> train_ids, val_ids, test_ids;
  for (int i = 0; i < n; ++i) {
    if (g.split[i] == graph::Split::Train && sup_split[i] == graph::Split::Train)
      train_ids.push_back(i);
    if (g.split[i] == graph::Split::Val) val_ids.push_back(i);
    if (g.split[i] == graph::Split::Test) test_ids.push_back(i);
  }
  if (train_ids.empty()) throw DataError("training split is empty");
  if (val_ids.empty()) throw DataError("validation split is empty");
  if (test_ids.empty()) throw DataError("test split is empty");
  for (int i : train_ids)
    if (g.labels[i] < 0) throw DataError("training node " + std::to_string(i) + " is unlabeled");
  for (int i : val_ids)
    if (g.labels[i] < 0)
      throw DataError("validation node " + std::to_string(i) + " is unlabeled");
  for (int i : test_ids)
    if (g.labels[i] < 0) throw DataError("test node " + std::to_string(i) + " is unlabeled");

  // Components draw initial weights from forked streams so toggling one
  // component never perturbs another's starting point.
  Rng root(cfg.seed);
  Rng enc_rng = root.fork(1), pred_rng = root.fork(2), bb_rng = root.fork(3),
      head_rng = root.fork(4), ctrl_rng = root.fork(5), aug_rng = root.fork(6),
      explore_rng = root.fork(7);

  encoder::EncoderConfig enc_cfg = cfg.encoder;
  enc_cfg.attention = cfg.enable_attention;
  const graph::RawFeatures& feats = g.features;
  encoder::Encoder enc(enc_cfg, (int)feats.numerical.cols(), (int)feats.boolean_mat.cols(),
                       (int)feats.description.cols(), (int)feats.tweet_mean.cols(), enc_rng);

  const bool want_edge_scores = cfg.enable_gnn && (cfg.enable_filter || cfg.lambda_e > 0.0);
  std::vector<filter::SimilarityPredictor> predictors;
  if (want_edge_scores)
    for (int l = 0; l < cfg.backbone.layers; ++l)
      predictors.emplace_back(l == 0 ? cfg.encoder.latent_dim : cfg.backbone.hidden,
                              cfg.filter_hidden, pred_rng);

  backbones::Backbone backbone;
  if (cfg.enable_gnn)
    backbone = backbones::Backbone(cfg.backbone, cfg.encoder.latent_dim, relations, bb_rng);
  backbones::Head head(cfg.enable_gnn ? cfg.backbone.hidden : cfg.encoder.latent_dim, head_rng);

  filter::Controller controller(cfg.controller, ctrl_rng);

  std::vector<num::Tensor> params = enc.parameters();
  for (const auto& p : predictors)
    for (const num::Tensor& t : p.parameters()) params.push_back(t);
  if (cfg.enable_gnn)
    for (const num::Tensor& t : backbone.parameters()) params.push_back(t);
  for (const num::Tensor& t : head.parameters()) params.push_back(t);
  num::Adam opt(params, cfg.lr);

  double tau = cfg.dynamic_tau ? controller.tau() : cfg.fixed_tau;

  RunReport report;
  report.seed = cfg.seed;
  std::optional<filter::ControllerStep> pending;
  double pending_acc = 0.0;
  ModelState best;
  bool has_best = false;
  double best_val_f1 = 0.0;

  struct PassStats {
    std::vector<num::Tensor> edge_losses;  // one per layer that had scored edges
    double tau_eff_sum = 0.0;
    int tau_eff_count = 0;
  };

  // Message-passing pass shared by training epochs (with the synthetic
  // rows riding along through the same layers, edgeless) and the final
  // checkpoint evaluation. epoch < 0 disables telemetry.
  auto run_layers = [&](num::Tape& tape, num::Tensor h, num::Tensor* h_syn, double tau_now,
                        double rate_now, int epoch, PassStats* stats) -> num::Tensor {
    if (!cfg.enable_gnn) return h;
    for (int l = 0; l < cfg.backbone.layers; ++l) {
      num::Tensor scores;
      if (want_edge_scores) scores = predictors[l].score_nodes(tape, h);
      std::vector<num::NeighborLists> adj;
      std::vector<filter::EdgeLossBatch> batches;
      for (int r = 0; r < relations; ++r) {
        const std::vector<graph::Edge>& edges = g.relations[r];
        num::Tensor p;
        std::vector<double> pv;
        if (want_edge_scores && !edges.empty()) {
          p = filter::edge_similarity(tape, scores, edges);
          pv = p.val();
        }
        if (cfg.enable_filter && !edges.empty()) {
          filter::EdgeMask mask;
          if (rate_now >= 0.0 && cfg.random_mask) {
            // Control arm: fresh uniform mask per (epoch, layer, relation),
            // reproducible so the checkpoint evaluation can replay it.
            Rng mask_rng(((cfg.seed + 1) * 1000003ULL + (std::uint64_t)(epoch + 1)) * 131ULL +
                         (std::uint64_t)(l * relations + r + 1));
            mask = filter::random_mask(edges.size(), rate_now, mask_rng);
          } else if (rate_now >= 0.0) {
            mask = filter::rank_mask(pv, rate_now);
          } else {
            mask = filter::apply_mask(pv, tau_now);
          }
          if (stats != nullptr) {
            stats->tau_eff_sum += mask.tau;
            ++stats->tau_eff_count;
          }
          if (hooks != nullptr && hooks->on_filter && stats != nullptr && epoch >= 0) {
            FilterLogEntry entry;
            entry.epoch = epoch;
            entry.layer = l;
            entry.relation = g.relation_names[r];
            entry.tau = mask.tau;
            entry.kept = mask.kept;
            entry.dropped = mask.dropped;
            if (g.fully_labeled()) {
              long cross = 0;
              for (std::size_t e = 0; e < edges.size(); ++e)
                if (!mask.keep[e] && g.labels[edges[e].u] != g.labels[edges[e].v]) ++cross;
              entry.cross_class_dropped = cross;
            }
            hooks->on_filter(entry);
          }
          adj.push_back(backbones::masked_adjacency(n, edges, &mask.keep));
        } else {
          adj.push_back(backbones::masked_adjacency(n, edges, nullptr));
        }
        if (stats != nullptr && cfg.lambda_e > 0.0 && want_edge_scores && !edges.empty())
          batches.push_back(filter::EdgeLossBatch{&edges, p});
      }
      if (stats != nullptr && !batches.empty())
        stats->edge_losses.push_back(filter::edge_loss(tape, batches, g.labels, sup_split));
      h = backbone.layer_forward(tape, h, adj, l);
      if (h_syn != nullptr && h_syn->rows() > 0) {
        std::vector<num::NeighborLists> syn_adj(relations,
                                                num::NeighborLists(h_syn->rows()));
        *h_syn = backbone.layer_forward(tape, *h_syn, syn_adj, l);
      }
    }
    return h;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    num::Tape tape;
    num::Tensor emb = enc.encode(tape, g);

    augment::AugmentedBatch batch;
    if (cfg.enable_augment)
      batch = augment::synthesize(tape, emb, g.labels, sup_split, cfg.k, aug_rng);
    if (hooks != nullptr && hooks->on_augment)
      for (const augment::SyntheticNode& sn : batch.nodes)
        hooks->on_augment(AugmentLogEntry{epoch, sn.parent, sn.neighbor, sn.delta});
    const bool have_syn = !batch.nodes.empty();
    num::Tensor h_syn = batch.embeddings;

    double rate_now = cfg.drop_rate;
    if (cfg.drop_rate >= 0.0 && cfg.drop_warmup > 0 && epoch < cfg.drop_warmup)
      rate_now = cfg.drop_rate * (double)(epoch + 1) / (double)cfg.drop_warmup;

    PassStats stats;
    num::Tensor h =
        run_layers(tape, emb, have_syn ? &h_syn : nullptr, tau, rate_now, epoch, &stats);

    num::Tensor probs = head.probs(tape, h);
    num::Tensor loss_gnn = backbones::node_loss(tape, probs, g.labels, train_ids);

    num::Tensor loss_aug;
    if (have_syn) {
      num::Tensor probs_syn = head.probs(tape, h_syn);
      std::vector<int> syn_labels(batch.nodes.size(), batch.label);
      std::vector<int> syn_ids(batch.nodes.size());
      for (std::size_t i = 0; i < syn_ids.size(); ++i) syn_ids[i] = (int)i;
      loss_aug = backbones::node_loss(tape, probs_syn, syn_labels, syn_ids);
    }

    num::Tensor loss_edge;
    const bool have_edge = !stats.edge_losses.empty();
    if (have_edge) {
      loss_edge = stats.edge_losses[0];
      for (std::size_t i = 1; i < stats.edge_losses.size(); ++i)
        loss_edge = num::add(tape, loss_edge, stats.edge_losses[i]);
      if (stats.edge_losses.size() > 1)
        loss_edge =
            num::affine(tape, loss_edge, 1.0 / (double)stats.edge_losses.size(), 0.0);
    }

    const double ls = have_syn ? cfg.lambda_s : 0.0;
    num::Tensor total = num::affine(tape, loss_gnn, 1.0 - ls, 0.0);
    if (have_syn && ls > 0.0)
      total = num::add(tape, total, num::affine(tape, loss_aug, ls, 0.0));
    if (have_edge && cfg.lambda_e > 0.0)
      total = num::add(tape, total, num::affine(tape, loss_edge, cfg.lambda_e, 0.0));

    const double total_v = total.item();
    if (!std::isfinite(total_v))
      throw NumericError("total loss is not finite at epoch " + std::to_string(epoch));

    backbones::Metrics val = backbones::evaluate(probs, g.labels, val_ids);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_total = total_v;
    rec.loss_gnn = loss_gnn.item();
    rec.loss_aug = have_syn ? loss_aug.item() : 0.0;
    rec.loss_edge = have_edge ? loss_edge.item() : 0.0;
    rec.val_acc = val.accuracy;
    rec.val_f1 = val.f1;
    rec.tau = (cfg.enable_filter && cfg.drop_rate >= 0.0 && stats.tau_eff_count > 0)
                  ? stats.tau_eff_sum / (double)stats.tau_eff_count
                  : tau;
    report.curves.push_back(rec);

    // Accuracy ties are common with a 100-node validation split, so break
    // them by validation F1 (bot recall matters at 15% prevalence), then by
    // recency: later epochs carry a better-trained similarity predictor.
    const bool better =
        !has_best || val.accuracy > report.best_val_accuracy ||
        (val.accuracy == report.best_val_accuracy && val.f1 >= best_val_f1);
    if (better) {
      report.best_val_accuracy = val.accuracy;
      best_val_f1 = val.f1;
      report.best_epoch = epoch;
      best.values = snapshot(params);
      best.tau = tau;
      best.rate = rate_now;
      best.mask_epoch = epoch;
      has_best = true;
    }

    tape.backward(total);
    opt.step();

    if (cfg.dynamic_tau && (epoch + 1) % cfg.controller.interval == 0) {
      if (pending.has_value()) {
        pending->reward = val.accuracy - pending_acc;
        controller.update({*pending});
      }
      std::array<double, 4> state = controller.observe(emb, val.accuracy, total_v);
      const double action = controller.act(state, &explore_rng);
      pending = filter::ControllerStep{state, action, 0.0};
      pending_acc = val.accuracy;
      tau = controller.tau();
    }
  }

  // Test metrics come from the best-validation checkpoint, re-run through
  // the same forward pass (synthetic nodes play no role at evaluation).
  restore(params, best.values);
  {
    num::Tape tape;
    num::Tensor emb = enc.encode(tape, g);
    num::Tensor h = run_layers(tape, emb, nullptr, best.tau, best.rate, best.mask_epoch, nullptr);
    num::Tensor probs = head.probs(tape, h);
    backbones::Metrics test = backbones::evaluate(probs, g.labels, test_ids);
    report.test_accuracy = test.accuracy;
    report.test_f1 = test.f1;
    if (std::getenv("RABOT_DEBUG_EVAL") != nullptr) {
      backbones::Metrics v = backbones::evaluate(probs, g.labels, val_ids);
      std::cerr << "[eval] best_epoch=" << report.best_epoch << " val tp=" << v.tp
                << " fp=" << v.fp << " fn=" << v.fn << " | test tp=" << test.tp
                << " fp=" << test.fp << " fn=" << test.fn << "\n";
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string report_json(const RunReport& report) {
  json curves = json::array();
  for (const EpochRecord& r : report.curves) {
    curves.push_back(json{{"epoch", r.epoch},
                          {"loss_total", r.loss_total},
                          {"loss_gnn", r.loss_gnn},
                          {"loss_aug", r.loss_aug},
                          {"loss_edge", r.loss_edge},
                          {"val_acc", r.val_acc},
                          {"val_f1", r.val_f1},
                          {"tau", r.tau}});
  }
  json j{{"best_epoch", report.best_epoch},
         {"best_val_accuracy", report.best_val_accuracy},
         {"curves", std::move(curves)},
         {"seed", report.seed},
         {"test_accuracy", report.test_accuracy},
         {"test_f1", report.test_f1}};
  return j.dump(2) + "\n";
}

std::string curves_csv(const RunReport& report) {
  std::ostringstream out;
  out << "epoch,loss_total,loss_gnn,loss_aug,loss_edge,val_acc,val_f1,tau\n";
  for (const EpochRecord& r : report.curves) {
    out << r.epoch << ',' << graph::format_double(r.loss_total) << ','
        << graph::format_double(r.loss_gnn) << ',' << graph::format_double(r.loss_aug) << ','
        << graph::format_double(r.loss_edge) << ',' << graph::format_double(r.val_acc) << ','
        << graph::format_double(r.val_f1) << ',' << graph::format_double(r.tau) << '\n';
  }
  return out.str();
}

SeedStats summarize(const std::vector<RunReport>& runs) {
  SeedStats s;
  if (runs.empty()) return s;
  for (const RunReport& r : runs) {
    s.mean_acc += r.test_accuracy;
    s.mean_f1 += r.test_f1;
  }
  s.mean_acc /= (double)runs.size();
  s.mean_f1 /= (double)runs.size();
  for (const RunReport& r : runs) {
    s.std_acc += (r.test_accuracy - s.mean_acc) * (r.test_accuracy - s.mean_acc);
    s.std_f1 += (r.test_f1 - s.mean_f1) * (r.test_f1 - s.mean_f1);
  }
  s.std_acc = std::sqrt(s.std_acc / (double)runs.size());
  s.std_f1 = std::sqrt(s.std_f1 / (double)runs.size());
  return s;
}

void run_indexed(std::size_t count, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  if (const char* env = std::getenv("RABOT_THREADS")) {
    char* end = nullptr;
    const long parsed = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || parsed < 1)
      throw ConfigError("RABOT_THREADS must be a positive integer, got '" + std::string(env) +
                        "'");
    workers = (std::size_t)parsed;
  }
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

std::vector<VariantResult> run_variants(
    const graph::Graph& g, const std::vector<std::pair<std::string, TrainConfig>>& variants,
    const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ContractError("seed list must not be empty");
  std::vector<VariantResult> out(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) {
    out[v].name = variants[v].first;
    out[v].runs.resize(seeds.size());
  }
  run_indexed(variants.size() * seeds.size(), [&](std::size_t idx) {
    const std::size_t v = idx / seeds.size();
    const std::size_t s = idx % seeds.size();
    TrainConfig cfg = variants[v].second;
    cfg.seed = seeds[s];
    out[v].runs[s] = train(g, cfg);
  });
  for (VariantResult& r : out) r.stats = summarize(r.runs);
  return out;
}

}  // namespace

std::vector<VariantResult> ablate(const graph::Graph& g, const TrainConfig& cfg,
                                  const std::vector<std::uint64_t>& seeds) {
  std::vector<std::pair<std::string, TrainConfig>> variants;
  variants.emplace_back("full", cfg);

  TrainConfig no_ma = cfg;
  no_ma.enable_attention = false;
  variants.emplace_back("wo_ma", no_ma);

  TrainConfig no_fa = cfg;
  no_fa.enable_augment = false;
  variants.emplace_back("wo_fa", no_fa);

  TrainConfig no_ef = cfg;
  no_ef.enable_filter = false;
  no_ef.lambda_e = 0.0;
  no_ef.dynamic_tau = false;
  variants.emplace_back("wo_ef", no_ef);

  TrainConfig no_gc = cfg;
  no_gc.enable_gnn = false;
  no_gc.enable_filter = false;
  no_gc.lambda_e = 0.0;
  no_gc.dynamic_tau = false;
  variants.emplace_back("wo_gc", no_gc);

  return run_variants(g, variants, seeds);
}

std::vector<VariantResult> threshold_sweep(const graph::Graph& g, const TrainConfig& cfg,
                                           const std::vector<double>& taus,
                                           const std::vector<std::uint64_t>& seeds) {
  if (taus.empty()) throw ContractError("threshold sweep needs at least one tau");
  std::vector<std::pair<std::string, TrainConfig>> variants;
  for (double t : taus) {
    TrainConfig fixed = cfg;
    fixed.enable_filter = true;
    fixed.dynamic_tau = false;
    fixed.fixed_tau = t;
    variants.emplace_back("fixed_" + graph::format_double(t), fixed);
  }
  TrainConfig dyn = cfg;
  dyn.enable_filter = true;
  dyn.dynamic_tau = true;
  variants.emplace_back("dynamic", dyn);
  return run_variants(g, variants, seeds);
}

}  // namespace rabot::trainer
