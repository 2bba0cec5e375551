#pragma once

// Reverse-mode differentiation for the fixed operator set used by the
// Geom-GCN computation graph. Not a general autodiff engine: every op is
// written out by hand, forward and backward.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "geomgcn/rng.hpp"
#include "geomgcn/tensor.hpp"

namespace geomgcn {

struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  /// Leaf that owns its value.
  Var leaf(Tensor2 value, bool requires_grad = false) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  /// Leaf that aliases an external tensor; the tensor must outlive the tape.
  Var leaf_ref(const Tensor2& value, bool requires_grad = false) {
    Node n;
    n.ref = &value;
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  /// Records the result of an op. `backward` is only stored (and later run)
  /// when at least one input requires a gradient.
  Var record(Tensor2 value, bool requires_grad, Backward backward) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const Tensor2& value(Var v) const { return node(v).value(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient of the last backward() target w.r.t. `v`; zeros when `v` did
  /// not participate.
  Tensor2 grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty() && n.value().size() != 0) return Tensor2(n.value().rows(), n.value().cols());
    return n.grad;
  }

  /// Accumulation buffer for an op's input; allocated on first use.
  Tensor2& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = Tensor2(n.value().rows(), n.value().cols());
    return n.grad;
  }
  const Tensor2& grad_of(std::size_t id) const { return nodes_.at(id).grad; }

  /// Backpropagates from a 1x1 output, visiting recorded ops in exact
  /// reverse order.
  void backward(Var output) {
    const Node& out = node(output);
    if (out.value().rows() != 1 || out.value().cols() != 1)
      throw std::invalid_argument("Tape::backward: output must be 1x1, got " + out.value().shape_string());
    for (auto& n : nodes_) n.grad = Tensor2();
    grad_buffer(output.id)(0, 0) = 1.0;
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, i);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor2 owned;
    const Tensor2* ref = nullptr;
    Tensor2 grad;
    bool requires_grad = false;
    Backward backward;
    const Tensor2& value() const { return ref ? *ref : owned; }
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("Tape: invalid variable");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
};

inline Var matmul(Tape& tape, Var a, Var b) {
  Tensor2 out = matmul_plain(tape.value(a), tape.value(b));
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad_of(self);
    if (t.requires_grad(a)) t.grad_buffer(a.id) += matmul_a_bt(g, t.value(b));
    if (t.requires_grad(b)) t.grad_buffer(b.id) += matmul_at_b(t.value(a), g);
  });
}

inline Var relu(Tape& tape, Var a) {
  Tensor2 out = tape.value(a);
  for (double& x : out.flat()) x = x > 0.0 ? x : 0.0;
  return tape.record(std::move(out), tape.requires_grad(a), [a](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad_of(self);
    const Tensor2& in = t.value(a);
    Tensor2& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in.flat()[i] > 0.0) ga.flat()[i] += g.flat()[i];
  });
}

/// Inverted dropout. The keep decision for element (r, c) is a pure function
/// of the generator key, the row key and the column, so masks are
/// reproducible and follow nodes under relabeling. An empty `row_keys` uses
/// the row index.
inline Var dropout(Tape& tape, Var a, double rate, bool train_mode, const CounterRng& rng,
                   std::span<const std::uint64_t> row_keys = {}) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (!train_mode || rate == 0.0) return a;
  const Tensor2& in = tape.value(a);
  if (!row_keys.empty() && row_keys.size() != in.rows())
    throw std::invalid_argument("dropout: row key count does not match rows");
  const double scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(in.size());
  Tensor2 out(in.rows(), in.cols());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const std::uint64_t key = row_keys.empty() ? r : row_keys[r];
    const std::uint64_t row_counter = mix64(key);
    for (std::size_t c = 0; c < in.cols(); ++c) {
      const std::size_t i = r * in.cols() + c;
      const double keep = rng.uniform_at(hash_combine(row_counter, c)) >= rate ? scale : 0.0;
      (*mask)[i] = keep;
      out.flat()[i] = in.flat()[i] * keep;
    }
  }
  return tape.record(std::move(out), tape.requires_grad(a), [a, mask](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad_of(self);
    Tensor2& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga.flat()[i] += g.flat()[i] * (*mask)[i];
  });
}

/// dropout(X) * W for a constant sparse X. Dropout follows the same keyed
/// masks as `dropout`; only stored entries are drawn, since dropped zeros stay
/// zero. Gradient flows to W only.
inline Var sparse_dropout_matmul(Tape& tape, const SparseRows& x, Var w, double rate, bool train_mode,
                                 const CounterRng& rng, std::span<const std::uint64_t> row_keys = {}) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
  const Tensor2& wv = tape.value(w);
  if (x.cols != wv.rows())
    throw std::invalid_argument("matmul: shape mismatch " + std::to_string(x.rows) + "x" + std::to_string(x.cols) +
                                " * " + wv.shape_string());
  if (!row_keys.empty() && row_keys.size() != x.rows)
    throw std::invalid_argument("dropout: row key count does not match rows");
  const bool drop = train_mode && rate > 0.0;
  const double scale = drop ? 1.0 / (1.0 - rate) : 1.0;
  auto kept = std::make_shared<std::vector<double>>(x.values);
  if (drop) {
    for (std::size_t r = 0; r < x.rows; ++r) {
      const std::uint64_t row_counter = mix64(row_keys.empty() ? r : row_keys[r]);
      for (std::size_t i = x.offsets[r]; i < x.offsets[r + 1]; ++i)
        (*kept)[i] *= rng.uniform_at(hash_combine(row_counter, x.indices[i])) >= rate ? scale : 0.0;
    }
  }
  const std::size_t n = wv.cols();
  Tensor2 out(x.rows, n);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double* o = out.row(r).data();
    for (std::size_t i = x.offsets[r]; i < x.offsets[r + 1]; ++i) {
      const double v = (*kept)[i];
      if (v == 0.0) continue;
      const double* wr = wv.row(x.indices[i]).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += v * wr[j];
    }
  }
  return tape.record(std::move(out), tape.requires_grad(w), [&x, w, kept](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad_of(self);
    Tensor2& gw = t.grad_buffer(w.id);
    const std::size_t n = g.cols();
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double* gr = g.row(r).data();
      for (std::size_t i = x.offsets[r]; i < x.offsets[r + 1]; ++i) {
        const double v = (*kept)[i];
        if (v == 0.0) continue;
        double* o = gw.row(x.indices[i]).data();
        for (std::size_t j = 0; j < n; ++j) o[j] += v * gr[j];
      }
    }
  });
}

inline Var concat_cols(Tape& tape, std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = tape.value(parts[0]).rows();
  std::size_t cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (tape.value(p).rows() != rows) throw std::invalid_argument("concat_cols: unequal row counts");
    cols += tape.value(p).cols();
    rg = rg || tape.requires_grad(p);
  }
  Tensor2 out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor2& v = tape.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), rg, [inputs](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad_of(self);
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t w = t.value(p).cols();
      if (t.requires_grad(p)) {
        Tensor2& gp = t.grad_buffer(p.id);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, off + c);
      }
      off += w;
    }
  });
}

/// Mean over `block_count` equal-width column blocks.
inline Var mean_blocks(Tape& tape, Var a, std::size_t block_count) {
  const Tensor2& in = tape.value(a);
  if (block_count == 0 || in.cols() % block_count != 0)
    throw std::invalid_argument("mean_blocks: " + std::to_string(in.cols()) + " columns not divisible by " +
                                std::to_string(block_count));
  const std::size_t w = in.cols() / block_count;
  Tensor2 out(in.rows(), w);
  for (std::size_t r = 0; r < in.rows(); ++r)
    for (std::size_t b = 0; b < block_count; ++b)
      for (std::size_t c = 0; c < w; ++c) out(r, c) += in(r, b * w + c);
  const double inv = 1.0 / static_cast<double>(block_count);
  for (double& x : out.flat()) x *= inv;
  return tape.record(std::move(out), tape.requires_grad(a), [a, block_count, w, inv](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad_of(self);
    Tensor2& ga = t.grad_buffer(a.id);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t b = 0; b < block_count; ++b)
        for (std::size_t c = 0; c < w; ++c) ga(r, b * w + c) += g(r, c) * inv;
  });
}

/// Mean cross-entropy of row-wise softmax over the rows listed in `rows`.
inline Var masked_softmax_xent(Tape& tape, Var logits, std::span<const int> labels,
                               std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("masked_softmax_xent: empty mask");
  const Tensor2& z = tape.value(logits);
  if (labels.size() != z.rows())
    throw std::invalid_argument("masked_softmax_xent: label count does not match logits rows");
  auto probs = std::make_shared<Tensor2>(rows.size(), z.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto zr = z.row(rows[i]);
    const int y = labels[rows[i]];
    if (y < 0 || static_cast<std::size_t>(y) >= z.cols())
      throw std::invalid_argument("masked_softmax_xent: label out of range");
    double mx = zr[0];
    for (double x : zr) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : zr) s += std::exp(x - mx);
    const double log_s = std::log(s);
    for (std::size_t c = 0; c < z.cols(); ++c) (*probs)(i, c) = std::exp(zr[c] - mx - log_s);
    loss += -(zr[static_cast<std::size_t>(y)] - mx - log_s);
  }
  loss /= static_cast<double>(rows.size());
  std::vector<std::size_t> row_ids(rows.begin(), rows.end());
  std::vector<int> ys;
  ys.reserve(rows.size());
  for (std::size_t r : rows) ys.push_back(labels[r]);
  return tape.record(Tensor2(1, 1, loss), tape.requires_grad(logits),
                     [logits, probs, row_ids = std::move(row_ids), ys = std::move(ys)](Tape& t, std::size_t self) {
                       const double g = t.grad_of(self)(0, 0) / static_cast<double>(row_ids.size());
                       Tensor2& gz = t.grad_buffer(logits.id);
                       for (std::size_t i = 0; i < row_ids.size(); ++i) {
                         for (std::size_t c = 0; c < gz.cols(); ++c) {
                           const double target = static_cast<std::size_t>(ys[i]) == c ? 1.0 : 0.0;
                           gz(row_ids[i], c) += g * ((*probs)(i, c) - target);
                         }
                       }
                     });
}

/// Sparse weighted gather used by neighborhood aggregation. Output row v,
/// bucket k, is the weighted sum over the (source, weight) entries stored for
/// (v, k), summed in stored order.
struct BucketOperator {
  std::size_t num_rows = 0;
  std::size_t num_buckets = 0;
  std::vector<std::size_t> offsets;  // num_rows * num_buckets + 1
  std::vector<std::size_t> sources;
  std::vector<double> weights;

  std::size_t slot(std::size_t row, std::size_t bucket) const noexcept { return row * num_buckets + bucket; }
  std::size_t begin(std::size_t row, std::size_t bucket) const noexcept { return offsets[slot(row, bucket)]; }
  std::size_t end(std::size_t row, std::size_t bucket) const noexcept { return offsets[slot(row, bucket) + 1]; }
  std::size_t nnz() const noexcept { return sources.size(); }
};

enum class BucketMode {
  /// src has B*w columns; bucket k reads and writes column block k.
  Blockwise,
  /// src has w columns; output concatenates the B bucket sums (B*w columns).
  ConcatShared,
  /// src has w columns; output is the mean of the B bucket sums (w columns).
  MeanShared,
};

inline Var bucket_aggregate(Tape& tape, Var src, const BucketOperator& op, BucketMode mode) {
  const Tensor2& in = tape.value(src);
  const std::size_t B = op.num_buckets;
  if (op.offsets.size() != op.num_rows * B + 1) throw std::invalid_argument("bucket_aggregate: malformed operator");
  std::size_t w = in.cols();
  if (mode == BucketMode::Blockwise) {
    if (in.cols() % B != 0) throw std::invalid_argument("bucket_aggregate: source width not divisible by buckets");
    w = in.cols() / B;
  }
  const std::size_t out_cols = mode == BucketMode::MeanShared ? w : B * w;
  const double inv_b = 1.0 / static_cast<double>(B);
  Tensor2 out(op.num_rows, out_cols);
  for (std::size_t v = 0; v < op.num_rows; ++v) {
    double* orow = out.row(v).data();
    for (std::size_t k = 0; k < B; ++k) {
      const std::size_t src_off = mode == BucketMode::Blockwise ? k * w : 0;
      const std::size_t dst_off = mode == BucketMode::MeanShared ? 0 : k * w;
      const double scale = mode == BucketMode::MeanShared ? inv_b : 1.0;
      for (std::size_t e = op.begin(v, k); e < op.end(v, k); ++e) {
        const double c = op.weights[e] * scale;
        const double* srow = in.row(op.sources[e]).data() + src_off;
        for (std::size_t j = 0; j < w; ++j) orow[dst_off + j] += c * srow[j];
      }
    }
  }
  return tape.record(std::move(out), tape.requires_grad(src), [src, &op, mode, w, inv_b](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad_of(self);
    Tensor2& gs = t.grad_buffer(src.id);
    const std::size_t B = op.num_buckets;
    for (std::size_t v = 0; v < op.num_rows; ++v) {
      const double* grow = g.row(v).data();
      for (std::size_t k = 0; k < B; ++k) {
        const std::size_t src_off = mode == BucketMode::Blockwise ? k * w : 0;
        const std::size_t dst_off = mode == BucketMode::MeanShared ? 0 : k * w;
        const double scale = mode == BucketMode::MeanShared ? inv_b : 1.0;
        for (std::size_t e = op.begin(v, k); e < op.end(v, k); ++e) {
          const double c = op.weights[e] * scale;
          double* srow = gs.row(op.sources[e]).data() + src_off;
          for (std::size_t j = 0; j < w; ++j) srow[j] += c * grow[dst_off + j];
        }
      }
    }
  });
}

struct AdamConfig {
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<Tensor2> m;
  std::vector<Tensor2> v;
  std::size_t step = 0;
};

/// One Adam update with bias correction. Weight decay is added to the
/// gradient as an L2 term before the moment updates. Gradients are checked
/// for finiteness before any parameter is touched.
inline void adam_step(std::span<Tensor2> params, std::span<const Tensor2> grads, AdamState& state,
                      const AdamConfig& cfg, std::span<const std::string> names = {}) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].require_same_shape(grads[i], "adam_step");
    if (!grads[i].all_finite()) {
      const std::string name = i < names.size() ? names[i] : "param[" + std::to_string(i) + "]";
      throw std::runtime_error("adam_step: non-finite gradient in " + name);
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.rows(), p.cols());
      state.v.emplace_back(p.rows(), p.cols());
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].flat();
    auto g = grads[i].flat();
    auto m = state.m[i].flat();
    auto v = state.v[i].flat();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j] + cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace geomgcn
