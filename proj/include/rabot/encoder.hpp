#pragma once

#include <array>
#include <vector>

#include "rabot/graph.hpp"
#include "rabot/rng.hpp"
#include "rabot/tensor.hpp"

namespace rabot::encoder {

// Where self-attention runs during fusion: over the four modality tokens
// of each user (linear in n), or over all users jointly (quadratic in n,
// the literal stacked-matrix reading).
enum class AttentionScope { Modality, Global };

struct EncoderConfig {
  int latent_dim = 128;  // kappa; each modality projects to kappa/4
  int heads = 4;
  bool attention = true;  // false: fused output is the plain linear projection
  AttentionScope scope = AttentionScope::Modality;

  int head_dim() const { return latent_dim / heads; }
  int modality_dim() const { return latent_dim / 4; }
  void validate() const;
};

// Per-user fused embedding matrix (n x kappa).
using FusedEmbedding = num::Tensor;

// Projects the four raw modalities into a shared latent space and fuses
// them per user with multi-head scaled dot-product attention.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, int d_numerical, int d_boolean, int d_description,
          int d_tweet, Rng& rng);

  // Four n x kappa/4 matrices: numerical, boolean, description, tweets
  // (tweets already mean-pooled by the loader).
  std::array<num::Tensor, 4> project_modalities(num::Tape& tape,
                                                const graph::Graph& g) const;

  // attn_out, when given, receives the forward attention matrices (one
  // per block and head, row-stochastic), detached from the tape.
  FusedEmbedding fuse(num::Tape& tape, const std::array<num::Tensor, 4>& modalities,
                      std::vector<num::Tensor>* attn_out = nullptr) const;

  FusedEmbedding encode(num::Tape& tape, const graph::Graph& g,
                        std::vector<num::Tensor>* attn_out = nullptr) const;

  std::vector<num::Tensor> parameters() const;

  const EncoderConfig& config() const { return cfg_; }

  // Modality projections W_v, W_b, W_d, W_t.
  num::Tensor proj_numerical, proj_boolean, proj_description, proj_tweet;
  num::Tensor fuse_weight;   // kappa x kappa applied to the concatenation
  num::Tensor token_lift;    // kappa/4 x kappa, shared per-token lift (modality scope)
  std::vector<num::Tensor> head_q, head_k, head_v;  // kappa x head_dim each

 private:
  EncoderConfig cfg_;
};

// Glorot-uniform initialized parameter.
num::Tensor glorot(int rows, int cols, Rng& rng, const std::string& name);

}  // namespace rabot::encoder
