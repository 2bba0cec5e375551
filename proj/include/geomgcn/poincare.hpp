#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "geomgcn/embedding.hpp"
#include "geomgcn/graph.hpp"
#include "geomgcn/rng.hpp"

namespace geomgcn {

struct PoincareConfig {
  std::size_t dim = 2;
  std::size_t epochs = 300;
  double learning_rate = 0.5;
  std::size_t burn_in_epochs = 20;
  double burn_in_lr_factor = 0.01;
  std::size_t negatives_per_positive = 10;
  double max_norm = 1.0 - 1e-5;
  double init_range = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("PoincareConfig: learning_rate must be > 0");
    if (!(max_norm > 0.0 && max_norm < 1.0)) throw std::invalid_argument("PoincareConfig: max_norm must be in (0,1)");
    if (dim == 0) throw std::invalid_argument("PoincareConfig: dim must be > 0");
  }
};

inline constexpr double kArcoshClamp = 1.0 + 1e-12;

inline double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline void require_in_ball(std::span<const double> x, const char* who) {
  if (!(squared_norm(x) < 1.0)) throw std::domain_error(std::string(who) + ": point on or outside the unit ball");
}

/// Geodesic distance in the Poincare ball.
inline double poincare_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("poincare_distance: dimension mismatch");
  require_in_ball(u, "poincare_distance");
  require_in_ball(v, "poincare_distance");
  double diff = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) diff += (u[i] - v[i]) * (u[i] - v[i]);
  const double arg = 1.0 + 2.0 * diff / ((1.0 - squared_norm(u)) * (1.0 - squared_norm(v)));
  return std::acosh(std::max(arg, kArcoshClamp));
}

inline void project_to_ball(std::span<double> u, double max_norm) {
  const double norm = std::sqrt(squared_norm(u));
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& x : u) x *= s;
  }
}

/// Euclidean gradients of poincare_distance(u, v) w.r.t. u and v, written
/// into grad_u / grad_v.
inline double poincare_distance_grad(std::span<const double> u, std::span<const double> v, std::span<double> grad_u,
                                     std::span<double> grad_v) {
  const double uu = squared_norm(u), vv = squared_norm(v);
  double uv = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    diff += (u[i] - v[i]) * (u[i] - v[i]);
  }
  const double alpha = 1.0 - uu, beta = 1.0 - vv;
  const double gamma = std::max(1.0 + 2.0 * diff / (alpha * beta), kArcoshClamp);
  const double root = std::sqrt(gamma * gamma - 1.0);
  const double cu = 4.0 / (beta * root), cv = 4.0 / (alpha * root);
  for (std::size_t i = 0; i < u.size(); ++i) {
    grad_u[i] = cu * ((vv - 2.0 * uv + 1.0) / (alpha * alpha) * u[i] - v[i] / alpha);
    grad_v[i] = cv * ((uu - 2.0 * uv + 1.0) / (beta * beta) * v[i] - u[i] / beta);
  }
  return std::acosh(gamma);
}

/// Riemannian SGD on the ranking loss
///   -log( exp(-d(u,v)) / sum_{w in {v} + negatives} exp(-d(u,w)) )
/// over both orientations of every edge. Updates rescale the Euclidean
/// gradient by (1 - |z|^2)^2 / 4 and retract onto the ball.
inline Embedding poincare_embed(const Graph& g, const PoincareConfig& cfg = {}) {
  cfg.validate();
  if (g.num_edges() == 0) throw std::invalid_argument("poincare_embed: graph has no edges");
  const std::size_t n = g.num_nodes(), d = cfg.dim;
  CounterRng init = CounterRng(cfg.seed).fork(1);
  Tensor2 z(n, d);
  for (double& x : z.flat()) x = init.uniform(-cfg.init_range, cfg.init_range);

  std::vector<std::pair<NodeId, NodeId>> pairs;
  pairs.reserve(2 * g.num_edges());
  for (auto [u, v] : g.edges()) {
    pairs.emplace_back(u, v);
    pairs.emplace_back(v, u);
  }
  const std::size_t k = cfg.negatives_per_positive;
  std::vector<std::size_t> cand(k + 1);
  std::vector<double> dist(k + 1), grad_u(d), grad_w(d), acc_u(d);
  std::vector<double> gw((k + 1) * d), gu((k + 1) * d);
  CounterRng rng = CounterRng(cfg.seed).fork(2);

  auto riemannian_step = [&](std::size_t node, std::span<const double> grad, double lr) {
    auto row = z.row(node);
    const double scale = (1.0 - squared_norm(row)) * (1.0 - squared_norm(row)) / 4.0;
    for (std::size_t i = 0; i < d; ++i) row[i] -= lr * scale * grad[i];
    project_to_ball(row, cfg.max_norm);
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch < cfg.burn_in_epochs ? cfg.learning_rate * cfg.burn_in_lr_factor : cfg.learning_rate;
    shuffle(pairs, rng);
    for (auto [u, v] : pairs) {
      cand[0] = v;
      for (std::size_t j = 1; j <= k; ++j) {
        std::size_t w = rng.below(n - 1);
        if (w >= u) ++w;
        cand[j] = w;
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j <= k; ++j) {
        dist[j] = poincare_distance_grad(z.row(u), z.row(cand[j]), grad_u, grad_w);
        mx = std::max(mx, -dist[j]);
        std::copy(grad_w.begin(), grad_w.end(), gw.begin() + static_cast<std::ptrdiff_t>(j * d));
        std::copy(grad_u.begin(), grad_u.end(), gu.begin() + static_cast<std::ptrdiff_t>(j * d));
      }
      double denom = 0.0;
      for (std::size_t j = 0; j <= k; ++j) denom += std::exp(-dist[j] - mx);
      // dL/dd_j = [j == 0] - softmax_j(-d)
      std::fill(acc_u.begin(), acc_u.end(), 0.0);
      for (std::size_t j = 0; j <= k; ++j) {
        const double coef = (j == 0 ? 1.0 : 0.0) - std::exp(-dist[j] - mx) / denom;
        for (std::size_t i = 0; i < d; ++i) {
          acc_u[i] += coef * gu[j * d + i];
          gw[j * d + i] *= coef;
        }
      }
      for (std::size_t j = 0; j <= k; ++j)
        riemannian_step(cand[j], std::span<const double>(gw.data() + j * d, d), lr);
      riemannian_step(u, acc_u, lr);
    }
  }
  Embedding e;
  e.coords = std::move(z);
  e.space = Space::Hyperbolic;
  e.method = EmbedMethod::Poincare;
  e.validate();
  return e;
}

}  // namespace geomgcn
