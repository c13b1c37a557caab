#include "rabot/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "rabot/errors.hpp"

namespace rabot::encoder {

void EncoderConfig::validate() const {
  if (latent_dim <= 0) throw ConfigError("encoder latent_dim must be positive");
  if (heads <= 0) throw ConfigError("encoder heads must be positive");
  if (latent_dim % 4 != 0)
    throw ConfigError("encoder latent_dim must be divisible by 4 (one slice per modality)");
  if (latent_dim % heads != 0)
    throw ConfigError("encoder latent_dim must be divisible by heads");
}

num::Tensor glorot(int rows, int cols, Rng& rng, const std::string& name) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::vector<double> vals((std::size_t)rows * (std::size_t)cols);
  for (double& v : vals) v = rng.uniform(-bound, bound);
  return num::Tensor::param(rows, cols, std::move(vals), name);
}

Encoder::Encoder(const EncoderConfig& cfg, int d_numerical, int d_boolean,
                 int d_description, int d_tweet, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  if (d_numerical <= 0 || d_boolean <= 0 || d_description <= 0 || d_tweet <= 0)
    throw ContractError("encoder: every modality needs at least one input dimension");
  const int md = cfg_.modality_dim();
  proj_numerical = glorot(d_numerical, md, rng, "enc.proj_numerical");
  proj_boolean = glorot(d_boolean, md, rng, "enc.proj_boolean");
  proj_description = glorot(d_description, md, rng, "enc.proj_description");
  proj_tweet = glorot(d_tweet, md, rng, "enc.proj_tweet");
  fuse_weight = glorot(cfg_.latent_dim, cfg_.latent_dim, rng, "enc.fuse_weight");
  if (cfg_.attention) {
    if (cfg_.scope == AttentionScope::Modality)
      token_lift = glorot(md, cfg_.latent_dim, rng, "enc.token_lift");
    const int dk = cfg_.head_dim();
    for (int c = 0; c < cfg_.heads; ++c) {
      head_q.push_back(glorot(cfg_.latent_dim, dk, rng, "enc.q" + std::to_string(c)));
      head_k.push_back(glorot(cfg_.latent_dim, dk, rng, "enc.k" + std::to_string(c)));
      head_v.push_back(glorot(cfg_.latent_dim, dk, rng, "enc.v" + std::to_string(c)));
    }
  }
}

std::array<num::Tensor, 4> Encoder::project_modalities(num::Tape& tape,
                                                       const graph::Graph& g) const {
  const graph::RawFeatures& f = g.features;
  if (f.numerical.cols() != proj_numerical.rows())
    throw DimensionError("encoder: numerical feature width " +
                         std::to_string(f.numerical.cols()) + " does not match encoder (" +
                         std::to_string(proj_numerical.rows()) + ")");
  if (f.boolean_mat.cols() != proj_boolean.rows())
    throw DimensionError("encoder: boolean feature width mismatch");
  if (f.description.cols() != proj_description.rows())
    throw DimensionError("encoder: description width mismatch");
  if (f.tweet_mean.cols() != proj_tweet.rows())
    throw DimensionError("encoder: tweet embedding width mismatch");
  return {num::matmul(tape, f.numerical, proj_numerical),
          num::matmul(tape, f.boolean_mat, proj_boolean),
          num::matmul(tape, f.description, proj_description),
          num::matmul(tape, f.tweet_mean, proj_tweet)};
}

FusedEmbedding Encoder::fuse(num::Tape& tape, const std::array<num::Tensor, 4>& mods,
                             std::vector<num::Tensor>* attn_out) const {
  const int md = cfg_.modality_dim();
  for (const auto& m : mods)
    if (m.cols() != md)
      throw DimensionError("encoder fuse: modality slice has width " +
                           std::to_string(m.cols()) + ", expected " + std::to_string(md));
  num::Tensor cat = num::concat_cols(tape, {mods[0], mods[1], mods[2], mods[3]});
  num::Tensor u = num::matmul(tape, cat, fuse_weight);  // n x kappa
  if (!cfg_.attention) return u;

  num::Tensor tokens;  // rows attend within fixed-size blocks
  int block = 0;
  if (cfg_.scope == AttentionScope::Modality) {
    // Re-split each user's latent vector into its 4 modality slices and
    // lift every slice back to kappa so heads see full-width tokens.
    num::Tensor slices = num::reshape_rows(tape, u, md);  // (4n) x kappa/4
    tokens = num::matmul(tape, slices, token_lift);       // (4n) x kappa
    block = 4;
  } else {
    tokens = u;
    block = u.rows();
  }
  std::vector<num::Tensor> heads;
  heads.reserve(head_q.size());
  for (std::size_t c = 0; c < head_q.size(); ++c) {
    num::Tensor q = num::matmul(tape, tokens, head_q[c]);
    num::Tensor k = num::matmul(tape, tokens, head_k[c]);
    num::Tensor v = num::matmul(tape, tokens, head_v[c]);
    heads.push_back(num::blockwise_attention(tape, q, k, v, block, attn_out));
  }
  num::Tensor mix = heads.size() == 1 ? heads[0] : num::concat_cols(tape, heads);
  if (cfg_.scope == AttentionScope::Modality)
    return num::row_block_mean(tape, mix, 4);  // fold the 4 tokens back to one user row
  return mix;
}

FusedEmbedding Encoder::encode(num::Tape& tape, const graph::Graph& g,
                               std::vector<num::Tensor>* attn_out) const {
  return fuse(tape, project_modalities(tape, g), attn_out);
}

std::vector<num::Tensor> Encoder::parameters() const {
  std::vector<num::Tensor> ps = {proj_numerical, proj_boolean, proj_description,
                                 proj_tweet, fuse_weight};
  if (cfg_.attention) {
    if (cfg_.scope == AttentionScope::Modality) ps.push_back(token_lift);
    for (std::size_t c = 0; c < head_q.size(); ++c) {
      ps.push_back(head_q[c]);
      ps.push_back(head_k[c]);
      ps.push_back(head_v[c]);
    }
  }
  return ps;
}

}  // namespace rabot::encoder
