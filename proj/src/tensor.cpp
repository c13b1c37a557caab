#include "rabot/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace rabot::num {

namespace {

std::string dims(int r, int c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  return from(rows, cols, std::vector<double>(static_cast<size_t>(rows) * cols, 0.0),
              requires_grad);
}

Tensor Tensor::from(int rows, int cols, std::vector<double> values, bool requires_grad) {
  if (rows < 0 || cols < 0 ||
      values.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols)) {
    throw DimensionError("tensor value count " + std::to_string(values.size()) +
                         " does not match shape " + dims(rows, cols));
  }
  Tensor t;
  t.d_ = std::make_shared<Data>();
  t.d_->shape = {rows, cols};
  t.d_->value = std::move(values);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v) { return from(1, 1, {v}); }

Tensor Tensor::param(int rows, int cols, std::vector<double> values, std::string name) {
  Tensor t = from(rows, cols, std::move(values), true);
  t.d_->grad.assign(t.size(), 0.0);
  t.d_->name = std::move(name);
  return t;
}

std::string Tensor::shape_str() const { return dims(rows(), cols()); }

bool Tensor::same_shape(const Tensor& other) const {
  return rows() == other.rows() && cols() == other.cols();
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
  if (g.size() != size()) {
    throw DimensionError("gradient size mismatch for " + shape_str());
  }
  if (d_->grad.empty()) d_->grad.assign(size(), 0.0);
  for (size_t i = 0; i < g.size(); ++i) d_->grad[i] += g[i];
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() requires a 1x1 tensor, got " + shape_str());
  }
  return d_->value[0];
}

Tensor Tensor::clone() const {
  Tensor t = from(rows(), cols(), d_->value, d_->requires_grad);
  if (!d_->grad.empty()) t.d_->grad = d_->grad;
  t.d_->name = d_->name;
  return t;
}

void Tensor::load_values(const std::vector<double>& values) {
  if (values.size() != size()) {
    throw DimensionError("load_values size mismatch for " + shape_str());
  }
  d_->value = values;
}

void Tape::backward(Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + loss.shape_str());
  }
  if (backward_run_) {
    throw ContractError("backward called twice on the same tape; record a new forward pass");
  }
  backward_run_ = true;
  loss.accumulate_grad({1.0});
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

namespace {

// Shared wiring for every primitive: outputs carry requires_grad when any
// input does, and a backward closure is recorded only in that case.
bool any_rg(std::initializer_list<Tensor> ts) {
  for (const auto& t : ts) {
    if (t.requires_grad()) return true;
  }
  return false;
}

Tensor make_out(int r, int c, std::vector<double> v, bool rg) {
  return Tensor::from(r, c, std::move(v), rg);
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner dimensions disagree: " + a.shape_str() +
                         " x " + b.shape_str());
  }
  const int n = a.rows(), m = a.cols(), p = b.cols();
  std::vector<double> out(static_cast<size_t>(n) * p, 0.0);
  const double* av = a.val().data();
  const double* bv = b.val().data();
  for (int i = 0; i < n; ++i) {
    const double* arow = av + static_cast<size_t>(i) * m;
    double* orow = out.data() + static_cast<size_t>(i) * p;
    for (int k = 0; k < m; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = bv + static_cast<size_t>(k) * p;
      for (int j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  Tensor c = make_out(n, p, std::move(out), any_rg({a, b}));
  if (c.requires_grad()) {
    Tensor ac = a, bc = b, cc = c;
    tape.record([ac, bc, cc, n, m, p]() mutable {
      if (!cc.has_grad()) return;
      const double* g = cc.grad().data();
      if (ac.requires_grad()) {
        if (!ac.has_grad()) ac.grad().assign(ac.size(), 0.0);
        double* ga = ac.grad().data();
        const double* bv = bc.val().data();
        // dA = dC * B^T
        for (int i = 0; i < n; ++i) {
          const double* grow = g + static_cast<size_t>(i) * p;
          double* garow = ga + static_cast<size_t>(i) * m;
          for (int k = 0; k < m; ++k) {
            const double* brow = bv + static_cast<size_t>(k) * p;
            double s = 0.0;
            for (int j = 0; j < p; ++j) s += grow[j] * brow[j];
            garow[k] += s;
          }
        }
      }
      if (bc.requires_grad()) {
        if (!bc.has_grad()) bc.grad().assign(bc.size(), 0.0);
        double* gb = bc.grad().data();
        const double* av = ac.val().data();
        // dB = A^T * dC
        for (int i = 0; i < n; ++i) {
          const double* arow = av + static_cast<size_t>(i) * m;
          const double* grow = g + static_cast<size_t>(i) * p;
          for (int k = 0; k < m; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            double* gbrow = gb + static_cast<size_t>(k) * p;
            for (int j = 0; j < p; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return c;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor elementwise2(Tape& tape, const Tensor& a, const Tensor& b, const char* opname,
                    Fwd fwd, Bwd bwd) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(opname) + " shape mismatch: " + a.shape_str() +
                         " vs " + b.shape_str());
  }
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.val()[i], b.val()[i]);
  Tensor c = make_out(a.rows(), a.cols(), std::move(out), any_rg({a, b}));
  if (c.requires_grad()) {
    Tensor ac = a, bc = b, cc = c;
    tape.record([ac, bc, cc, bwd]() mutable {
      if (!cc.has_grad()) return;
      const auto& g = cc.grad();
      const bool ra = ac.requires_grad(), rb = bc.requires_grad();
      if (ra && !ac.has_grad()) ac.grad().assign(ac.size(), 0.0);
      if (rb && !bc.has_grad()) bc.grad().assign(bc.size(), 0.0);
      for (size_t i = 0; i < g.size(); ++i) {
        auto [da, db] = bwd(ac.val()[i], bc.val()[i], g[i]);
        if (ra) ac.grad()[i] += da;
        if (rb) bc.grad()[i] += db;
      }
    });
  }
  return c;
}

template <typename Fwd, typename Bwd>
Tensor elementwise1(Tape& tape, const Tensor& x, Fwd fwd, Bwd bwd) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(x.val()[i]);
  Tensor y = make_out(x.rows(), x.cols(), std::move(out), x.requires_grad());
  if (y.requires_grad()) {
    Tensor xc = x, yc = y;
    tape.record([xc, yc, bwd]() mutable {
      if (!yc.has_grad()) return;
      if (!xc.has_grad()) xc.grad().assign(xc.size(), 0.0);
      for (size_t i = 0; i < yc.size(); ++i) {
        xc.grad()[i] += bwd(xc.val()[i], yc.val()[i], yc.grad()[i]);
      }
    });
  }
  return y;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return elementwise2(
      tape, a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair<double, double>{g, g}; });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return elementwise2(
      tape, a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair<double, double>{g, -g}; });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return elementwise2(
      tape, a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair<double, double>{g * y, g * x}; });
}

Tensor affine(Tape& tape, const Tensor& x, double alpha, double beta) {
  return elementwise1(
      tape, x, [alpha, beta](double v) { return alpha * v + beta; },
      [alpha](double, double, double g) { return alpha * g; });
}

Tensor add_row(Tape& tape, const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row bias must be 1x" + std::to_string(x.cols()) +
                         ", got " + bias.shape_str());
  }
  const int n = x.rows(), d = x.cols();
  std::vector<double> out(x.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] = x.at(i, j) + bias.at(0, j);
  }
  Tensor y = make_out(n, d, std::move(out), any_rg({x, bias}));
  if (y.requires_grad()) {
    Tensor xc = x, bc = bias, yc = y;
    tape.record([xc, bc, yc, n, d]() mutable {
      if (!yc.has_grad()) return;
      const auto& g = yc.grad();
      if (xc.requires_grad()) xc.accumulate_grad(g);
      if (bc.requires_grad()) {
        if (!bc.has_grad()) bc.grad().assign(bc.size(), 0.0);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) bc.grad()[j] += g[static_cast<size_t>(i) * d + j];
        }
      }
    });
  }
  return y;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return elementwise1(
      tape, x,
      [](double v) {
        // Branch keeps exp() argument negative to avoid overflow.
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y, double g) { return g * y * (1.0 - y); });
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
  return elementwise1(
      tape, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double, double g) { return v > 0.0 ? g : slope * g; });
}

Tensor log(Tape& tape, const Tensor& x) {
  return elementwise1(
      tape, x, [](double v) { return std::log(v); },
      [](double v, double, double g) { return g / v; });
}

Tensor abs(Tape& tape, const Tensor& x) {
  return elementwise1(
      tape, x, [](double v) { return std::fabs(v); },
      [](double v, double, double g) { return v > 0.0 ? g : (v < 0.0 ? -g : 0.0); });
}

Tensor safe_log(Tape& tape, const Tensor& x, double eps) {
  const double log_eps = std::log(eps);
  return elementwise1(
      tape, x,
      [eps, log_eps](double v) { return v >= eps ? std::log(v) : log_eps + (v - eps) / eps; },
      [eps](double v, double, double g) { return v >= eps ? g / v : g / eps; });
}

Tensor clip(Tape& tape, const Tensor& x, double lo, double hi) {
  return elementwise1(
      tape, x, [lo, hi](double v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](double v, double, double g) { return (v >= lo && v <= hi) ? g : 0.0; });
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  const int n = x.rows(), d = x.cols();
  std::vector<double> out(x.size());
  for (int i = 0; i < n; ++i) {
    const double* row = x.val().data() + static_cast<size_t>(i) * d;
    double* orow = out.data() + static_cast<size_t>(i) * d;
    double mx = row[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < d; ++j) orow[j] /= sum;
  }
  Tensor y = make_out(n, d, std::move(out), x.requires_grad());
  if (y.requires_grad()) {
    Tensor xc = x, yc = y;
    tape.record([xc, yc, n, d]() mutable {
      if (!yc.has_grad()) return;
      if (!xc.has_grad()) xc.grad().assign(xc.size(), 0.0);
      for (int i = 0; i < n; ++i) {
        const double* yv = yc.val().data() + static_cast<size_t>(i) * d;
        const double* gy = yc.grad().data() + static_cast<size_t>(i) * d;
        double* gx = xc.grad().data() + static_cast<size_t>(i) * d;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += gy[j] * yv[j];
        for (int j = 0; j < d; ++j) gx[j] += yv[j] * (gy[j] - dot);
      }
    });
  }
  return y;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols needs at least one tensor");
  const int n = parts[0].rows();
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != n) {
      throw DimensionError("concat_cols row mismatch: " + parts[0].shape_str() +
                           " vs " + p.shape_str());
    }
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  std::vector<double> out(static_cast<size_t>(n) * total);
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p.cols(); ++j) {
        out[static_cast<size_t>(i) * total + off + j] = p.at(i, j);
      }
    }
    off += p.cols();
  }
  Tensor y = make_out(n, total, std::move(out), rg);
  if (rg) {
    std::vector<Tensor> pc = parts;
    Tensor yc = y;
    tape.record([pc, yc, n, total]() mutable {
      if (!yc.has_grad()) return;
      int off = 0;
      for (auto& p : pc) {
        if (p.requires_grad()) {
          if (!p.has_grad()) p.grad().assign(p.size(), 0.0);
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < p.cols(); ++j) {
              p.grad()[static_cast<size_t>(i) * p.cols() + j] +=
                  yc.grad()[static_cast<size_t>(i) * total + off + j];
            }
          }
        }
        off += p.cols();
      }
    });
  }
  return y;
}

Tensor reshape_rows(Tape& tape, const Tensor& x, int new_cols) {
  if (new_cols <= 0 || x.size() % new_cols != 0) {
    throw DimensionError("cannot reshape " + x.shape_str() + " to " +
                         std::to_string(new_cols) + " columns");
  }
  const int new_rows = static_cast<int>(x.size()) / new_cols;
  Tensor y = make_out(new_rows, new_cols, x.val(), x.requires_grad());
  if (y.requires_grad()) {
    Tensor xc = x, yc = y;
    tape.record([xc, yc]() mutable {
      if (!yc.has_grad()) return;
      xc.accumulate_grad(yc.grad());
    });
  }
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& x, const std::vector<int>& ids) {
  const int d = x.cols();
  std::vector<double> out(ids.size() * static_cast<size_t>(d));
  for (size_t r = 0; r < ids.size(); ++r) {
    const int i = ids[r];
    if (i < 0 || i >= x.rows()) {
      throw ContractError("gather_rows index " + std::to_string(i) +
                          " out of range for " + x.shape_str());
    }
    std::copy_n(x.val().data() + static_cast<size_t>(i) * d, d,
                out.data() + r * static_cast<size_t>(d));
  }
  Tensor y = make_out(static_cast<int>(ids.size()), d, std::move(out), x.requires_grad());
  if (y.requires_grad()) {
    Tensor xc = x, yc = y;
    std::vector<int> idc = ids;
    tape.record([xc, yc, idc, d]() mutable {
      if (!yc.has_grad()) return;
      if (!xc.has_grad()) xc.grad().assign(xc.size(), 0.0);
      for (size_t r = 0; r < idc.size(); ++r) {
        const double* g = yc.grad().data() + r * static_cast<size_t>(d);
        double* gx = xc.grad().data() + static_cast<size_t>(idc[r]) * d;
        for (int j = 0; j < d; ++j) gx[j] += g[j];
      }
    });
  }
  return y;
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.val()) s += v;
  Tensor y = make_out(1, 1, {s}, x.requires_grad());
  if (y.requires_grad()) {
    Tensor xc = x, yc = y;
    tape.record([xc, yc]() mutable {
      if (!yc.has_grad()) return;
      if (!xc.has_grad()) xc.grad().assign(xc.size(), 0.0);
      const double g = yc.grad()[0];
      for (auto& gv : xc.grad()) gv += g;
    });
  }
  return y;
}

Tensor mean_all(Tape& tape, const Tensor& x) {
  return affine(tape, sum_all(tape, x), 1.0 / static_cast<double>(x.size()), 0.0);
}

Tensor row_block_mean(Tape& tape, const Tensor& x, int block) {
  if (block <= 0 || x.rows() % block != 0) {
    throw DimensionError("row_block_mean: " + std::to_string(x.rows()) +
                         " rows not divisible by block " + std::to_string(block));
  }
  const int n = x.rows() / block, d = x.cols();
  std::vector<double> out(static_cast<size_t>(n) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < block; ++t) {
      const double* row = x.val().data() + static_cast<size_t>(i * block + t) * d;
      for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] += row[j];
    }
  }
  const double inv = 1.0 / block;
  for (auto& v : out) v *= inv;
  Tensor y = make_out(n, d, std::move(out), x.requires_grad());
  if (y.requires_grad()) {
    Tensor xc = x, yc = y;
    tape.record([xc, yc, n, d, block, inv]() mutable {
      if (!yc.has_grad()) return;
      if (!xc.has_grad()) xc.grad().assign(xc.size(), 0.0);
      for (int i = 0; i < n; ++i) {
        const double* g = yc.grad().data() + static_cast<size_t>(i) * d;
        for (int t = 0; t < block; ++t) {
          double* gx = xc.grad().data() + static_cast<size_t>(i * block + t) * d;
          for (int j = 0; j < d; ++j) gx[j] += g[j] * inv;
        }
      }
    });
  }
  return y;
}

Tensor l1_distance(Tape& tape, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("l1_distance shape mismatch: " + a.shape_str() + " vs " +
                         b.shape_str());
  }
  return sum_all(tape, abs(tape, sub(tape, a, b)));
}

Tensor blockwise_attention(Tape& tape, const Tensor& q, const Tensor& k,
                           const Tensor& v, int block,
                           std::vector<Tensor>* weights_out) {
  if (!q.same_shape(k) || !q.same_shape(v)) {
    throw DimensionError("attention q/k/v shapes disagree: " + q.shape_str() + ", " +
                         k.shape_str() + ", " + v.shape_str());
  }
  if (block <= 0 || q.rows() % block != 0) {
    throw DimensionError("attention rows " + std::to_string(q.rows()) +
                         " not divisible by block " + std::to_string(block));
  }
  const int nblocks = q.rows() / block, d = q.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> out(q.size(), 0.0);
  // Attention matrices are kept for the backward pass.
  auto attn = std::make_shared<std::vector<double>>(
      static_cast<size_t>(nblocks) * block * block, 0.0);
  if (weights_out) weights_out->clear();
  for (int bi = 0; bi < nblocks; ++bi) {
    const double* qb = q.val().data() + static_cast<size_t>(bi) * block * d;
    const double* kb = k.val().data() + static_cast<size_t>(bi) * block * d;
    const double* vb = v.val().data() + static_cast<size_t>(bi) * block * d;
    double* ab = attn->data() + static_cast<size_t>(bi) * block * block;
    for (int i = 0; i < block; ++i) {
      double* arow = ab + static_cast<size_t>(i) * block;
      double mx = -1e300;
      for (int j = 0; j < block; ++j) {
        double s = 0.0;
        for (int t = 0; t < d; ++t) {
          s += qb[static_cast<size_t>(i) * d + t] * kb[static_cast<size_t>(j) * d + t];
        }
        arow[j] = s * scale;
        mx = std::max(mx, arow[j]);
      }
      double sum = 0.0;
      for (int j = 0; j < block; ++j) {
        arow[j] = std::exp(arow[j] - mx);
        sum += arow[j];
      }
      double* orow = out.data() + (static_cast<size_t>(bi) * block + i) * d;
      for (int j = 0; j < block; ++j) {
        arow[j] /= sum;
        for (int t = 0; t < d; ++t) orow[t] += arow[j] * vb[static_cast<size_t>(j) * d + t];
      }
    }
    if (weights_out) {
      weights_out->push_back(Tensor::from(
          block, block, std::vector<double>(ab, ab + static_cast<size_t>(block) * block)));
    }
  }
  Tensor y = make_out(q.rows(), d, std::move(out), any_rg({q, k, v}));
  if (y.requires_grad()) {
    Tensor qc = q, kc = k, vc = v, yc = y;
    tape.record([qc, kc, vc, yc, attn, nblocks, block, d, scale]() mutable {
      if (!yc.has_grad()) return;
      if (qc.requires_grad() && !qc.has_grad()) qc.grad().assign(qc.size(), 0.0);
      if (kc.requires_grad() && !kc.has_grad()) kc.grad().assign(kc.size(), 0.0);
      if (vc.requires_grad() && !vc.has_grad()) vc.grad().assign(vc.size(), 0.0);
      std::vector<double> dattn(static_cast<size_t>(block) * block);
      std::vector<double> dscore(static_cast<size_t>(block) * block);
      for (int bi = 0; bi < nblocks; ++bi) {
        const size_t roff = static_cast<size_t>(bi) * block * d;
        const double* go = yc.grad().data() + roff;
        const double* ab = attn->data() + static_cast<size_t>(bi) * block * block;
        const double* vb = vc.val().data() + roff;
        // dV += A^T dO ; dA = dO V^T
        for (int i = 0; i < block; ++i) {
          for (int j = 0; j < block; ++j) {
            double s = 0.0;
            for (int t = 0; t < d; ++t) {
              s += go[static_cast<size_t>(i) * d + t] * vb[static_cast<size_t>(j) * d + t];
            }
            dattn[static_cast<size_t>(i) * block + j] = s;
          }
        }
        if (vc.requires_grad()) {
          double* gv = vc.grad().data() + roff;
          for (int j = 0; j < block; ++j) {
            for (int i = 0; i < block; ++i) {
              const double a = ab[static_cast<size_t>(i) * block + j];
              if (a == 0.0) continue;
              for (int t = 0; t < d; ++t) {
                gv[static_cast<size_t>(j) * d + t] += a * go[static_cast<size_t>(i) * d + t];
              }
            }
          }
        }
        // Softmax backward per row: dS = A * (dA - rowdot(dA, A)).
        for (int i = 0; i < block; ++i) {
          const double* arow = ab + static_cast<size_t>(i) * block;
          const double* darow = dattn.data() + static_cast<size_t>(i) * block;
          double dot = 0.0;
          for (int j = 0; j < block; ++j) dot += darow[j] * arow[j];
          for (int j = 0; j < block; ++j) {
            dscore[static_cast<size_t>(i) * block + j] = arow[j] * (darow[j] - dot) * scale;
          }
        }
        const double* qb = qc.val().data() + roff;
        const double* kb = kc.val().data() + roff;
        if (qc.requires_grad()) {
          double* gq = qc.grad().data() + roff;
          for (int i = 0; i < block; ++i) {
            for (int j = 0; j < block; ++j) {
              const double s = dscore[static_cast<size_t>(i) * block + j];
              if (s == 0.0) continue;
              for (int t = 0; t < d; ++t) {
                gq[static_cast<size_t>(i) * d + t] += s * kb[static_cast<size_t>(j) * d + t];
              }
            }
          }
        }
        if (kc.requires_grad()) {
          double* gk = kc.grad().data() + roff;
          for (int i = 0; i < block; ++i) {
            for (int j = 0; j < block; ++j) {
              const double s = dscore[static_cast<size_t>(i) * block + j];
              if (s == 0.0) continue;
              for (int t = 0; t < d; ++t) {
                gk[static_cast<size_t>(j) * d + t] += s * qb[static_cast<size_t>(i) * d + t];
              }
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor neighbor_mean(Tape& tape, const Tensor& x, const NeighborLists& nbrs) {
  const int n = x.rows(), d = x.cols();
  if (static_cast<int>(nbrs.size()) != n) {
    throw DimensionError("neighbor_mean: " + std::to_string(nbrs.size()) +
                         " neighbor lists for " + std::to_string(n) + " rows");
  }
  std::vector<double> out(x.size());
  for (int i = 0; i < n; ++i) {
    double* orow = out.data() + static_cast<size_t>(i) * d;
    const double* self = x.val().data() + static_cast<size_t>(i) * d;
    std::copy_n(self, d, orow);
    for (int j : nbrs[i]) {
      const double* row = x.val().data() + static_cast<size_t>(j) * d;
      for (int t = 0; t < d; ++t) orow[t] += row[t];
    }
    const double inv = 1.0 / (1.0 + static_cast<double>(nbrs[i].size()));
    for (int t = 0; t < d; ++t) orow[t] *= inv;
  }
  Tensor y = make_out(n, d, std::move(out), x.requires_grad());
  if (y.requires_grad()) {
    Tensor xc = x, yc = y;
    auto nb = std::make_shared<NeighborLists>(nbrs);
    tape.record([xc, yc, nb, n, d]() mutable {
      if (!yc.has_grad()) return;
      if (!xc.has_grad()) xc.grad().assign(xc.size(), 0.0);
      for (int i = 0; i < n; ++i) {
        const double inv = 1.0 / (1.0 + static_cast<double>((*nb)[i].size()));
        const double* g = yc.grad().data() + static_cast<size_t>(i) * d;
        double* gself = xc.grad().data() + static_cast<size_t>(i) * d;
        for (int t = 0; t < d; ++t) gself[t] += g[t] * inv;
        for (int j : (*nb)[i]) {
          double* gj = xc.grad().data() + static_cast<size_t>(j) * d;
          for (int t = 0; t < d; ++t) gj[t] += g[t] * inv;
        }
      }
    });
  }
  return y;
}

Tensor segment_softmax(Tape& tape, const Tensor& x, const std::vector<int>& offsets) {
  if (x.cols() != 1) {
    throw DimensionError("segment_softmax expects a column vector, got " + x.shape_str());
  }
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != x.rows()) {
    throw ContractError("segment_softmax offsets must start at 0 and end at row count");
  }
  std::vector<double> out(x.size());
  for (size_t s = 0; s + 1 < offsets.size(); ++s) {
    const int lo = offsets[s], hi = offsets[s + 1];
    if (lo == hi) continue;
    double mx = x.val()[lo];
    for (int i = lo + 1; i < hi; ++i) mx = std::max(mx, x.val()[i]);
    double sum = 0.0;
    for (int i = lo; i < hi; ++i) {
      out[i] = std::exp(x.val()[i] - mx);
      sum += out[i];
    }
    for (int i = lo; i < hi; ++i) out[i] /= sum;
  }
  Tensor y = make_out(x.rows(), 1, std::move(out), x.requires_grad());
  if (y.requires_grad()) {
    Tensor xc = x, yc = y;
    std::vector<int> offc = offsets;
    tape.record([xc, yc, offc]() mutable {
      if (!yc.has_grad()) return;
      if (!xc.has_grad()) xc.grad().assign(xc.size(), 0.0);
      for (size_t s = 0; s + 1 < offc.size(); ++s) {
        const int lo = offc[s], hi = offc[s + 1];
        double dot = 0.0;
        for (int i = lo; i < hi; ++i) dot += yc.grad()[i] * yc.val()[i];
        for (int i = lo; i < hi; ++i) {
          xc.grad()[i] += yc.val()[i] * (yc.grad()[i] - dot);
        }
      }
    });
  }
  return y;
}

Tensor weighted_sum_rows(Tape& tape, const Tensor& x, const Tensor& alpha,
                         const std::vector<int>& src, const std::vector<int>& offsets) {
  if (alpha.cols() != 1 || alpha.rows() != static_cast<int>(src.size())) {
    throw DimensionError("weighted_sum_rows: alpha " + alpha.shape_str() + " vs " +
                         std::to_string(src.size()) + " sources");
  }
  if (offsets.empty() || offsets.front() != 0 ||
      offsets.back() != static_cast<int>(src.size())) {
    throw ContractError("weighted_sum_rows offsets must start at 0 and end at source count");
  }
  const int nseg = static_cast<int>(offsets.size()) - 1, d = x.cols();
  std::vector<double> out(static_cast<size_t>(nseg) * d, 0.0);
  for (int i = 0; i < nseg; ++i) {
    double* orow = out.data() + static_cast<size_t>(i) * d;
    for (int e = offsets[i]; e < offsets[i + 1]; ++e) {
      const double a = alpha.val()[e];
      const double* row = x.val().data() + static_cast<size_t>(src[e]) * d;
      for (int t = 0; t < d; ++t) orow[t] += a * row[t];
    }
  }
  Tensor y = make_out(nseg, d, std::move(out), any_rg({x, alpha}));
  if (y.requires_grad()) {
    Tensor xc = x, ac = alpha, yc = y;
    std::vector<int> srcc = src, offc = offsets;
    tape.record([xc, ac, yc, srcc, offc, nseg, d]() mutable {
      if (!yc.has_grad()) return;
      if (xc.requires_grad() && !xc.has_grad()) xc.grad().assign(xc.size(), 0.0);
      if (ac.requires_grad() && !ac.has_grad()) ac.grad().assign(ac.size(), 0.0);
      for (int i = 0; i < nseg; ++i) {
        const double* g = yc.grad().data() + static_cast<size_t>(i) * d;
        for (int e = offc[i]; e < offc[i + 1]; ++e) {
          const double* row = xc.val().data() + static_cast<size_t>(srcc[e]) * d;
          if (ac.requires_grad()) {
            double s = 0.0;
            for (int t = 0; t < d; ++t) s += g[t] * row[t];
            ac.grad()[e] += s;
          }
          if (xc.requires_grad()) {
            const double a = ac.val()[e];
            double* gx = xc.grad().data() + static_cast<size_t>(srcc[e]) * d;
            for (int t = 0; t < d; ++t) gx[t] += a * g[t];
          }
        }
      }
    });
  }
  return y;
}

}  // namespace rabot::num
