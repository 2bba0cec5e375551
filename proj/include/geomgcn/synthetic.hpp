#pragma once

// Graph generators for tests, demos, and the data-free acceptance checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "geomgcn/graph.hpp"
#include "geomgcn/rng.hpp"

namespace geomgcn::synthetic {

/// Erdos-Renyi graph with Gaussian-ish features and uniform labels.
inline Graph random_graph(std::size_t n, double edge_prob, std::size_t feature_dim, std::size_t num_classes,
                          std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.uniform() < edge_prob) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  Tensor2 x(n, feature_dim);
  for (double& e : x.flat()) e = rng.uniform(-1.0, 1.0);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % num_classes);
  return Graph::build(n, edges, std::move(x), std::move(labels));
}

/// Two dense clusters joined by a single bridge; features are linearly
/// separable by cluster (+1 / -1 in the first coordinate, small noise).
inline Graph two_cluster_graph(std::size_t n_per_cluster = 10, std::uint64_t seed = 7) {
  CounterRng rng(seed);
  const std::size_t n = 2 * n_per_cluster;
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t c = 0; c < 2; ++c) {
    const std::size_t base = c * n_per_cluster;
    for (std::size_t i = 0; i < n_per_cluster; ++i)
      for (std::size_t j = i + 1; j < n_per_cluster; ++j)
        if (j == i + 1 || rng.uniform() < 0.4)
          edges.emplace_back(static_cast<NodeId>(base + i), static_cast<NodeId>(base + j));
  }
  edges.emplace_back(0, static_cast<NodeId>(n_per_cluster));
  Tensor2 x(n, 4);
  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) {
    labels[v] = v < n_per_cluster ? 0 : 1;
    x(v, 0) = labels[v] == 0 ? 1.0 : -1.0;
    for (std::size_t c = 1; c < 4; ++c) x(v, c) = rng.uniform(-0.1, 0.1);
  }
  return Graph::build(n, edges, std::move(x), std::move(labels));
}

struct RoleGraphConfig {
  std::size_t nodes_per_class = 100;
  /// Target degree of class c is degrees[c]; edges only join different classes.
  std::vector<std::size_t> degrees = {2, 4, 7, 11, 16};
  std::size_t feature_dim = 32;
  double signal = 0.3;
  double noise = 1.0;
  std::uint64_t seed = 11;
};

/// Disassortative graph whose classes are structural roles: class c nodes
/// have degree close to degrees[c] and edges never join two nodes of the same
/// class. Features are a weak class signal buried in noise, so a node's label
/// is hard to read off its own features or its (other-class) neighbors, but
/// nodes of equal role are structurally alike.
inline Graph role_graph(const RoleGraphConfig& cfg = {}) {
  CounterRng rng(cfg.seed);
  const std::size_t C = cfg.degrees.size();
  const std::size_t n = C * cfg.nodes_per_class;
  std::vector<int> labels(n);
  std::vector<NodeId> stubs;
  for (std::size_t v = 0; v < n; ++v) {
    labels[v] = static_cast<int>(v % C);
    for (std::size_t k = 0; k < cfg.degrees[v % C]; ++k) stubs.push_back(static_cast<NodeId>(v));
  }
  std::set<std::pair<NodeId, NodeId>> edges;
  for (int pass = 0; pass < 8 && stubs.size() > 1; ++pass) {
    shuffle(stubs, rng);
    std::vector<NodeId> left;
    for (std::size_t i = 0; i + 1 < stubs.size(); i += 2) {
      const NodeId a = stubs[i], b = stubs[i + 1];
      const auto e = std::minmax(a, b);
      if (a == b || labels[a] == labels[b] || edges.count({e.first, e.second})) {
        left.push_back(a);
        left.push_back(b);
      } else {
        edges.insert({e.first, e.second});
      }
    }
    if (stubs.size() % 2) left.push_back(stubs.back());
    stubs = std::move(left);
  }
  std::vector<std::vector<double>> means(C, std::vector<double>(cfg.feature_dim));
  for (auto& m : means)
    for (double& x : m) x = rng.uniform() < 0.5 ? -cfg.signal : cfg.signal;
  Tensor2 x(n, cfg.feature_dim);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < cfg.feature_dim; ++j) {
      // Sum of uniforms: roughly Gaussian with unit variance.
      double z = 0.0;
      for (int t = 0; t < 12; ++t) z += rng.uniform();
      x(v, j) = means[static_cast<std::size_t>(labels[v])][j] + cfg.noise * (z - 6.0);
    }
  const std::vector<std::pair<NodeId, NodeId>> edge_list(edges.begin(), edges.end());
  return Graph::build(n, edge_list, std::move(x), std::move(labels));
}

/// Sparse-binary-feature graph with the size profile of a citation network
/// (used for cost measurements, not accuracy).
inline Graph citation_like_graph(std::size_t n = 2708, std::size_t num_edges = 5429, std::size_t feature_dim = 1433,
                                 std::size_t num_classes = 7, std::size_t words_per_node = 18,
                                 std::uint64_t seed = 3) {
  CounterRng rng(seed);
  std::vector<int> labels(n);
  for (auto& y : labels) y = static_cast<int>(rng.below(num_classes));
  std::set<std::pair<NodeId, NodeId>> edges;
  while (edges.size() < num_edges) {
    const auto u = static_cast<NodeId>(rng.below(n));
    auto v = static_cast<NodeId>(rng.below(n));
    if (rng.uniform() < 0.8) {
      // Prefer a same-label partner.
      for (int tries = 0; tries < 16 && labels[v] != labels[u]; ++tries) v = static_cast<NodeId>(rng.below(n));
    }
    if (u != v) edges.insert(std::minmax(u, v));
  }
  Tensor2 x(n, feature_dim);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t w = 0; w < words_per_node; ++w) x(v, rng.below(feature_dim)) = 1.0;
  const std::vector<std::pair<NodeId, NodeId>> edge_list(edges.begin(), edges.end());
  return Graph::build(n, edge_list, std::move(x), std::move(labels));
}

}  // namespace geomgcn::synthetic
