#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "geomgcn/embedding.hpp"
#include "geomgcn/graph.hpp"
#include "geomgcn/rng.hpp"
#include "geomgcn/tensor.hpp"

namespace geomgcn {

/// Dense n x n matrix with compact element storage.
template <class T>
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, T fill = T{}) : n_(n), data_(n * n, fill) {}
  SquareMatrix(std::initializer_list<std::initializer_list<T>> rows) : n_(rows.size()) {
    data_.reserve(n_ * n_);
    for (const auto& r : rows) {
      if (r.size() != n_) throw std::invalid_argument("SquareMatrix: not square");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  std::size_t size() const noexcept { return n_; }
  T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
  T operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }
  const T* row(std::size_t i) const noexcept { return data_.data() + i * n_; }

 private:
  std::size_t n_ = 0;
  std::vector<T> data_;
};

using HopMatrix = SquareMatrix<std::uint16_t>;

/// Unweighted all-pairs hop distances by one BFS per source. Pairs in
/// different components get (largest finite distance + 1).
inline HopMatrix bfs_all_pairs(const Graph& g) {
  constexpr std::uint16_t unreached = std::numeric_limits<std::uint16_t>::max();
  const std::size_t n = g.num_nodes();
  HopMatrix d(n, unreached);
  std::vector<NodeId> frontier;
  std::uint16_t max_finite = 0;
  bool disconnected = false;
  for (std::size_t s = 0; s < n; ++s) {
    d(s, s) = 0;
    frontier.assign(1, static_cast<NodeId>(s));
    std::size_t head = 0;
    while (head < frontier.size()) {
      const NodeId u = frontier[head++];
      const std::uint16_t du = d(s, u);
      if (du + 1 >= unreached) throw std::overflow_error("bfs_all_pairs: hop distance exceeds 65534");
      for (NodeId w : g.neighbors(u)) {
        if (d(s, w) == unreached) {
          d(s, w) = static_cast<std::uint16_t>(du + 1);
          max_finite = std::max<std::uint16_t>(max_finite, du + 1);
          frontier.push_back(w);
        }
      }
    }
    disconnected = disconnected || frontier.size() < n;
  }
  if (disconnected) {
    const auto fill = static_cast<std::uint16_t>(max_finite + 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (d(i, j) == unreached) d(i, j) = fill;
  }
  return d;
}

struct MdsOptions {
  std::size_t max_iterations = 1000;
  double tolerance = 1e-9;
  std::uint64_t seed = 0x150a4a9;
};

struct Eigenpair {
  double value = 0.0;
  std::vector<double> vector;
};

namespace detail {

using LinearOp = std::function<void(const std::vector<double>&, std::vector<double>&)>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Dominant (largest-magnitude) eigenpair of a symmetric operator. Stops when
/// the Rayleigh quotient changes by less than tol * max(1, |lambda|).
inline Eigenpair power_iteration(const LinearOp& op, std::size_t n, const MdsOptions& opt, std::uint64_t stream) {
  CounterRng rng = CounterRng(opt.seed).fork(stream);
  std::vector<double> x(n), y(n);
  for (double& xi : x) xi = rng.uniform(-1.0, 1.0);
  double norm = std::sqrt(dot(x, x));
  for (double& xi : x) xi /= norm;
  double lambda = 0.0;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    op(x, y);
    const double next = dot(x, y);
    norm = std::sqrt(dot(y, y));
    if (norm == 0.0) return {0.0, x};
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / norm;
    const bool done = it > 0 && std::abs(next - lambda) <= opt.tolerance * std::max(1.0, std::abs(next));
    lambda = next;
    if (done) break;
  }
  return {lambda, x};
}

/// Largest algebraic eigenpair: a dominant negative eigenvalue triggers a
/// second run on the operator shifted by its magnitude.
inline Eigenpair top_algebraic(const LinearOp& op, std::size_t n, const MdsOptions& opt, std::uint64_t stream) {
  Eigenpair p = power_iteration(op, n, opt, stream);
  if (p.value >= 0.0) return p;
  const double shift = -p.value;
  LinearOp shifted = [&](const std::vector<double>& x, std::vector<double>& y) {
    op(x, y);
    for (std::size_t i = 0; i < n; ++i) y[i] += shift * x[i];
  };
  Eigenpair q = power_iteration(shifted, n, opt, stream + 0x51);
  q.value -= shift;
  return q;
}

inline void fix_sign(std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (!v.empty() && v[best] < 0.0)
    for (double& x : v) x = -x;
}

}  // namespace detail

/// Classical multidimensional scaling. B = -1/2 J D^2 J is applied
/// implicitly; the top `dim` eigenpairs come from power iteration with
/// deflation. Coordinate k is sqrt(lambda_k) * v_k, zero when lambda_k is not
/// positive relative to round-off (<= 1e-10 * lambda_1).
/// Each eigenvector is oriented so its largest-magnitude entry is positive.
template <class T>
Tensor2 classical_mds(const SquareMatrix<T>& D, std::size_t dim, const MdsOptions& opt = {}) {
  const std::size_t n = D.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (D(i, i) != T{}) throw std::invalid_argument("classical_mds: nonzero diagonal at " + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j)
      if (D(i, j) != D(j, i))
        throw std::invalid_argument("classical_mds: distance matrix not symmetric at (" + std::to_string(i) + ", " +
                                    std::to_string(j) + ")");
  }
  Tensor2 coords(n, dim);
  if (n == 0) return coords;

  std::vector<double> centered(n);
  detail::LinearOp op_b = [&](const std::vector<double>& x, std::vector<double>& y) {
    double mean = 0.0;
    for (double xi : x) mean += xi;
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = x[i] - mean;
    double ymean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = D.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double dij = static_cast<double>(row[j]);
        s += dij * dij * centered[j];
      }
      y[i] = s;
      ymean += s;
    }
    ymean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = -0.5 * (y[i] - ymean);
  };

  std::vector<Eigenpair> found;
  for (std::size_t k = 0; k < dim; ++k) {
    detail::LinearOp deflated = [&](const std::vector<double>& x, std::vector<double>& y) {
      op_b(x, y);
      for (const auto& p : found) {
        const double c = p.value * detail::dot(p.vector, x);
        for (std::size_t i = 0; i < n; ++i) y[i] -= c * p.vector[i];
      }
    };
    Eigenpair p = detail::top_algebraic(deflated, n, opt, k);
    if (p.value <= 0.0 || (!found.empty() && p.value <= 1e-10 * found.front().value)) break;
    detail::fix_sign(p.vector);
    const double scale = std::sqrt(p.value);
    for (std::size_t i = 0; i < n; ++i) coords(i, k) = scale * p.vector[i];
    found.push_back(std::move(p));
  }
  return coords;
}

inline Embedding isomap_embed(const Graph& g, std::size_t dim = 2, const MdsOptions& opt = {}) {
  Embedding e;
  e.space = Space::Euclidean;
  e.method = EmbedMethod::Isomap;
  e.coords = classical_mds(bfs_all_pairs(g), dim, opt);
  return e;
}

}  // namespace geomgcn
