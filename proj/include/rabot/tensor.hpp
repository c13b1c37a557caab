#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rabot/errors.hpp"

namespace rabot::num {

// Dense row-major float64 matrix with an optional gradient buffer.
// Copies are shallow (shared storage); use clone() for a deep copy.
// Scalars are 1x1, vectors 1xd or dx1.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor from(int rows, int cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v);
  // A learnable parameter: requires_grad with a zeroed gradient buffer.
  static Tensor param(int rows, int cols, std::vector<double> values,
                      std::string name);

  bool defined() const { return d_ != nullptr; }
  int rows() const { return d_->shape[0]; }
  int cols() const { return d_->shape[1]; }
  size_t size() const { return d_->value.size(); }
  const std::vector<int>& shape() const { return d_->shape; }
  std::string shape_str() const;
  bool same_shape(const Tensor& other) const;

  double at(int i, int j) const { return d_->value[static_cast<size_t>(i) * cols() + j]; }
  double& at(int i, int j) { return d_->value[static_cast<size_t>(i) * cols() + j]; }

  const std::vector<double>& val() const { return d_->value; }
  std::vector<double>& val() { return d_->value; }

  bool requires_grad() const { return d_->requires_grad; }
  bool has_grad() const { return !d_->grad.empty(); }
  const std::vector<double>& grad() const { return d_->grad; }
  std::vector<double>& grad() { return d_->grad; }
  void zero_grad();
  // Allocates the grad buffer if absent, then adds g element-wise.
  void accumulate_grad(const std::vector<double>& g);

  const std::string& name() const { return d_->name; }

  // Value of a 1x1 tensor.
  double item() const;

  // Deep copy detached from any tape; keeps requires_grad and name.
  Tensor clone() const;
  // Overwrite values in place (shape must match). Used to restore checkpoints.
  void load_values(const std::vector<double>& values);

  bool identical(const Tensor& other) const { return d_ == other.d_; }

 private:
  struct Data {
    std::vector<int> shape;  // {rows, cols}
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::string name;
  };
  std::shared_ptr<Data> d_;
};

// Records the backward closure of every primitive executed in a forward
// pass. backward() replays them once, in reverse order; a second call
// without a fresh forward is rejected.
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }
  size_t op_count() const { return ops_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates gradients to every
  // participating tensor with requires_grad.
  void backward(Tensor& loss);

 private:
  std::vector<std::function<void()>> ops_;
  bool backward_run_ = false;
};

// ---- primitive ops -------------------------------------------------------
// Each op computes its forward value eagerly and records the matching
// backward closure on the tape.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// alpha * x + beta, element-wise.
Tensor affine(Tape& tape, const Tensor& x, double alpha, double beta);
// x (n x d) + bias (1 x d), broadcast over rows.
Tensor add_row(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor leaky_relu(Tape& tape, const Tensor& x, double slope);
Tensor log(Tape& tape, const Tensor& x);
Tensor abs(Tape& tape, const Tensor& x);
// log(x) for x >= eps; linear extension below keeps the gradient bounded by
// 1/eps instead of exploding or dying when probabilities saturate.
Tensor safe_log(Tape& tape, const Tensor& x, double eps);
// Clamp to [lo, hi]; gradient passes only through unclamped entries.
Tensor clip(Tape& tape, const Tensor& x, double lo, double hi);
// Row-wise softmax, stabilized by row-max subtraction.
Tensor softmax_rows(Tape& tape, const Tensor& x);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
// Same buffer reinterpreted with new_cols columns (size preserved).
Tensor reshape_rows(Tape& tape, const Tensor& x, int new_cols);
Tensor gather_rows(Tape& tape, const Tensor& x, const std::vector<int>& ids);
Tensor sum_all(Tape& tape, const Tensor& x);
Tensor mean_all(Tape& tape, const Tensor& x);
// Mean of each group of `block` consecutive rows: (b*n x d) -> (n x d).
Tensor row_block_mean(Tape& tape, const Tensor& x, int block);
// sum |a - b| as a 1x1 tensor.
Tensor l1_distance(Tape& tape, const Tensor& a, const Tensor& b);

// Scaled dot-product attention applied independently to each block of
// `block` consecutive rows of q/k/v: out = softmax(q k^T / sqrt(d_k)) v
// per block. When `weights_out` is non-null it receives the forward
// attention matrices, one (block x block) tensor per block, detached.
Tensor blockwise_attention(Tape& tape, const Tensor& q, const Tensor& k,
                           const Tensor& v, int block,
                           std::vector<Tensor>* weights_out = nullptr);

// Neighborhood structure used by aggregation ops: for each node, the list
// of neighbor indices. The node itself is handled by the op (self path),
// so lists must not contain i itself.
using NeighborLists = std::vector<std::vector<int>>;

// out[i] = (sum_{j in nbrs[i]} x[j] + x[i]) / (|nbrs[i]| + 1).
Tensor neighbor_mean(Tape& tape, const Tensor& x, const NeighborLists& nbrs);

// Softmax over consecutive segments of a column vector. offsets has
// n_segments+1 entries delimiting each segment in x (len x 1).
Tensor segment_softmax(Tape& tape, const Tensor& x,
                       const std::vector<int>& offsets);

// out[i] = sum_{e in [offsets[i], offsets[i+1])} alpha[e] * x[src[e]].
// x is (n x d), alpha (m x 1); returns (n_segments x d).
Tensor weighted_sum_rows(Tape& tape, const Tensor& x, const Tensor& alpha,
                         const std::vector<int>& src,
                         const std::vector<int>& offsets);

}  // namespace rabot::num
