#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "geomgcn/embedding.hpp"
#include "geomgcn/graph.hpp"
#include "geomgcn/rng.hpp"

namespace geomgcn {

struct Struc2vecConfig {
  std::size_t max_layer = 2;
  std::size_t walks_per_node = 10;
  std::size_t walk_length = 80;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t sg_epochs = 5;
  double sg_lr = 0.025;
  std::size_t dim = 2;
  double stay_probability = 0.3;
  /// 0 = every node pair. Otherwise each node is compared with this many
  /// degree-nearest nodes, which bounds memory on large graphs.
  std::size_t max_partners = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (walk_length <= window) throw std::invalid_argument("Struc2vecConfig: walk_length must exceed window");
    if (dim == 0) throw std::invalid_argument("Struc2vecConfig: dim must be > 0");
    if (!(stay_probability >= 0.0 && stay_probability <= 1.0))
      throw std::invalid_argument("Struc2vecConfig: stay_probability must be in [0,1]");
  }
};

/// Sorted degrees of the nodes at exactly `k` hops from `v`.
inline std::vector<std::size_t> ring_degree_seq(const Graph& g, std::size_t v, std::size_t k) {
  g.check_node(v);
  std::vector<std::size_t> depth(g.num_nodes(), std::numeric_limits<std::size_t>::max());
  std::vector<NodeId> frontier{static_cast<NodeId>(v)};
  depth[v] = 0;
  for (std::size_t level = 0; level < k && !frontier.empty(); ++level) {
    std::vector<NodeId> next;
    for (NodeId u : frontier)
      for (NodeId w : g.neighbors(u))
        if (depth[w] == std::numeric_limits<std::size_t>::max()) {
          depth[w] = level + 1;
          next.push_back(w);
        }
    frontier = std::move(next);
  }
  std::vector<std::size_t> out;
  out.reserve(frontier.size());
  for (NodeId u : frontier) out.push_back(g.degree(u));
  std::sort(out.begin(), out.end());
  return out;
}

/// All rings 0..max_layer of `v` from a single depth-limited BFS.
inline std::vector<std::vector<std::size_t>> ring_profile(const Graph& g, std::size_t v, std::size_t max_layer,
                                                          std::vector<std::size_t>& depth_scratch) {
  constexpr auto unseen = std::numeric_limits<std::size_t>::max();
  depth_scratch.assign(g.num_nodes(), unseen);
  std::vector<std::vector<std::size_t>> rings(max_layer + 1);
  std::vector<NodeId> frontier{static_cast<NodeId>(v)};
  depth_scratch[v] = 0;
  for (std::size_t level = 0; level <= max_layer && !frontier.empty(); ++level) {
    for (NodeId u : frontier) rings[level].push_back(g.degree(u));
    std::sort(rings[level].begin(), rings[level].end());
    if (level == max_layer) break;
    std::vector<NodeId> next;
    for (NodeId u : frontier)
      for (NodeId w : g.neighbors(u))
        if (depth_scratch[w] == unseen) {
          depth_scratch[w] = level + 1;
          next.push_back(w);
        }
    frontier = std::move(next);
  }
  return rings;
}

/// Element cost max/min - 1. A zero degree is compared on a shifted scale so
/// isolated nodes stay finite: cost(0, b) = b.
inline double degree_cost(std::size_t a, std::size_t b) {
  const auto lo = static_cast<double>(std::min(a, b)), hi = static_cast<double>(std::max(a, b));
  if (lo == 0.0) return hi;
  return hi / lo - 1.0;
}

/// Dynamic time warping with degree_cost as the local cost.
inline double dtw_distance(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw_distance: sequences must be non-empty");
  const std::size_t m = b.size();
  std::vector<double> prev(m), cur(m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double c = degree_cost(a[i], b[j]);
      double best;
      if (i == 0 && j == 0) best = 0.0;
      else if (i == 0) best = cur[j - 1];
      else if (j == 0) best = prev[j];
      else best = std::min({prev[j], cur[j - 1], prev[j - 1]});
      cur[j] = c + best;
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

/// Ring comparison used by the layered distance: an empty ring is matched
/// against [1]; two empty rings cost nothing.
inline double ring_distance(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  static const std::size_t unit[1] = {1};
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty()) return dtw_distance(unit, b);
  if (b.empty()) return dtw_distance(a, unit);
  return dtw_distance(a, b);
}

/// Layered structural distances over a fixed partner structure (CSR).
/// distance[k][e] is f_k between node u and partners[e] for e in u's range.
struct StructuralDistances {
  std::size_t num_nodes = 0;
  std::size_t num_layers = 0;
  std::vector<std::size_t> offsets;
  std::vector<NodeId> partners;
  std::vector<std::vector<float>> distance;

  std::span<const NodeId> partners_of(std::size_t u) const {
    return {partners.data() + offsets[u], offsets[u + 1] - offsets[u]};
  }
  /// f_k(u, v), or +inf if v is not a partner of u.
  double at(std::size_t layer, std::size_t u, std::size_t v) const {
    const auto p = partners_of(u);
    const auto it = std::lower_bound(p.begin(), p.end(), static_cast<NodeId>(v));
    if (it == p.end() || *it != v) return std::numeric_limits<double>::infinity();
    return distance[layer][offsets[u] + static_cast<std::size_t>(it - p.begin())];
  }
};

inline std::vector<std::vector<NodeId>> partner_lists(const Graph& g, std::size_t max_partners) {
  const std::size_t n = g.num_nodes();
  std::vector<std::vector<NodeId>> lists(n);
  if (max_partners == 0 || max_partners + 1 >= n) {
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = 0; v < n; ++v)
        if (u != v) lists[u].push_back(static_cast<NodeId>(v));
    return lists;
  }
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) { return g.degree(a) < g.degree(b); });
  const std::size_t half = std::max<std::size_t>(1, max_partners / 2);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0, hi = std::min(n - 1, i + half);
    for (std::size_t j = lo; j <= hi; ++j)
      if (j != i) {
        lists[order[i]].push_back(order[j]);
        lists[order[j]].push_back(order[i]);
      }
  }
  for (auto& l : lists) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return lists;
}

/// f_k(u,v) = f_{k-1}(u,v) + ring_distance(ring_k(u), ring_k(v)), k = 0..max_layer.
inline StructuralDistances structural_distances(const Graph& g, std::size_t max_layer, std::size_t max_partners = 0) {
  const std::size_t n = g.num_nodes();
  StructuralDistances sd;
  sd.num_nodes = n;
  sd.num_layers = max_layer + 1;
  std::vector<std::vector<std::vector<std::size_t>>> rings(n);
  std::vector<std::size_t> scratch;
  for (std::size_t v = 0; v < n; ++v) rings[v] = ring_profile(g, v, max_layer, scratch);

  const auto lists = partner_lists(g, max_partners);
  sd.offsets.assign(n + 1, 0);
  for (std::size_t u = 0; u < n; ++u) sd.offsets[u + 1] = sd.offsets[u] + lists[u].size();
  sd.partners.reserve(sd.offsets.back());
  for (const auto& l : lists) sd.partners.insert(sd.partners.end(), l.begin(), l.end());
  sd.distance.assign(sd.num_layers, std::vector<float>(sd.partners.size()));

  // Each unordered pair is evaluated once and mirrored.
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t e = sd.offsets[u]; e < sd.offsets[u + 1]; ++e) {
      const std::size_t v = sd.partners[e];
      if (v < u) continue;
      const auto back = sd.partners_of(v);
      const std::size_t e_back =
          sd.offsets[v] + static_cast<std::size_t>(std::lower_bound(back.begin(), back.end(), static_cast<NodeId>(u)) -
                                                   back.begin());
      double f = 0.0;
      for (std::size_t k = 0; k <= max_layer; ++k) {
        f += ring_distance(rings[u][k], rings[v][k]);
        sd.distance[k][e] = static_cast<float>(f);
        sd.distance[k][e_back] = static_cast<float>(f);
      }
    }
  }
  return sd;
}

/// Vose alias table for O(1) sampling from a discrete distribution.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(std::span<const double> weights) {
    const std::size_t n = weights.size();
    prob_.assign(n, 0.0f);
    alias_.assign(n, 0);
    if (n == 0) return;
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = total > 0.0 ? weights[i] * static_cast<double>(n) / total : 1.0;
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
      const auto s = small.back(), l = large.back();
      small.pop_back();
      prob_[s] = static_cast<float>(scaled[s]);
      alias_[s] = l;
      scaled[l] -= 1.0 - scaled[s];
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto i : large) prob_[i] = 1.0f;
    for (auto i : small) prob_[i] = 1.0f;
  }

  std::size_t size() const noexcept { return prob_.size(); }

  std::size_t sample(CounterRng& rng) const {
    const std::size_t i = rng.below(prob_.size());
    return rng.uniform() < prob_[i] ? i : alias_[i];
  }

 private:
  std::vector<float> prob_;
  std::vector<std::uint32_t> alias_;
};

/// Biased walks over the multilayer context graph. Within layer k a step from
/// u picks partner v with probability proportional to exp(-f_k(u,v)); with
/// probability 1 - stay_probability the walker instead moves one layer up
/// (weight log(Gamma_k(u) + e), Gamma = partners heavier than the layer mean)
/// or down (weight 1). Only in-layer steps emit nodes.
inline std::vector<std::vector<NodeId>> struc2vec_walks(const StructuralDistances& sd, const Struc2vecConfig& cfg) {
  const std::size_t n = sd.num_nodes, L = sd.num_layers;
  std::vector<std::vector<AliasTable>> tables(L, std::vector<AliasTable>(n));
  std::vector<std::vector<double>> up_prob(L, std::vector<double>(n, 0.0));
  std::vector<double> w;
  for (std::size_t k = 0; k < L; ++k) {
    double mean = 0.0;
    for (float f : sd.distance[k]) mean += std::exp(-static_cast<double>(f));
    mean = sd.distance[k].empty() ? 0.0 : mean / static_cast<double>(sd.distance[k].size());
    for (std::size_t u = 0; u < n; ++u) {
      w.clear();
      std::size_t gamma = 0;
      for (std::size_t e = sd.offsets[u]; e < sd.offsets[u + 1]; ++e) {
        const double we = std::exp(-static_cast<double>(sd.distance[k][e]));
        w.push_back(we);
        gamma += we > mean;
      }
      tables[k][u] = AliasTable(w);
      const double up = std::log(static_cast<double>(gamma) + std::exp(1.0));
      up_prob[k][u] = up / (up + 1.0);
    }
  }

  std::vector<std::vector<NodeId>> walks;
  walks.reserve(n * cfg.walks_per_node);
  const CounterRng base = CounterRng(cfg.seed).fork(0x57a1);
  std::vector<NodeId> starts(n);
  for (std::size_t round = 0; round < cfg.walks_per_node; ++round) {
    std::iota(starts.begin(), starts.end(), NodeId{0});
    CounterRng order_rng = base.fork(round);
    shuffle(starts, order_rng);
    for (NodeId s : starts) {
      CounterRng rng = base.fork(0x10000 + round * n + s);
      std::vector<NodeId> walk{s};
      std::size_t u = s, layer = 0;
      std::size_t guard = 0;
      while (walk.size() < cfg.walk_length && guard++ < 64 * cfg.walk_length) {
        if (tables[layer][u].size() == 0) break;
        if (L == 1 || rng.uniform() < cfg.stay_probability) {
          u = sd.partners[sd.offsets[u] + tables[layer][u].sample(rng)];
          walk.push_back(static_cast<NodeId>(u));
        } else if (layer == 0) {
          layer = 1;
        } else if (layer + 1 == L) {
          --layer;
        } else {
          layer = rng.uniform() < up_prob[layer][u] ? layer + 1 : layer - 1;
        }
      }
      walks.push_back(std::move(walk));
    }
  }
  return walks;
}

/// Skip-gram with negative sampling over walk windows; returns the input
/// vectors (num_nodes x dim). Learning rate decays linearly to 1e-4 of its
/// start value.
inline Tensor2 skipgram_embed(std::span<const std::vector<NodeId>> walks, std::size_t num_nodes,
                              const Struc2vecConfig& cfg) {
  const std::size_t d = cfg.dim;
  CounterRng rng = CounterRng(cfg.seed).fork(0x5c9a);
  Tensor2 in(num_nodes, d), out(num_nodes, d);
  for (double& x : in.flat()) x = rng.uniform(-0.5, 0.5) / static_cast<double>(d);

  std::vector<double> counts(num_nodes, 0.0);
  std::size_t total_positions = 0;
  for (const auto& walk : walks) {
    for (NodeId v : walk) counts[v] += 1.0;
    total_positions += walk.size();
  }
  for (double& c : counts) c = std::pow(c, 0.75);
  const AliasTable noise(counts);

  const double total_steps = static_cast<double>(cfg.sg_epochs * total_positions);
  double step = 0.0;
  std::vector<double> grad_in(d);
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  for (std::size_t epoch = 0; epoch < cfg.sg_epochs; ++epoch) {
    for (const auto& walk : walks) {
      for (std::size_t i = 0; i < walk.size(); ++i, step += 1.0) {
        const double lr = cfg.sg_lr * std::max(1e-4, 1.0 - step / std::max(1.0, total_steps));
        const std::size_t center = walk[i];
        const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
        const std::size_t hi = std::min(walk.size() - 1, i + cfg.window);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          const std::size_t context = walk[j];
          auto ctx = in.row(context);
          std::fill(grad_in.begin(), grad_in.end(), 0.0);
          for (std::size_t s = 0; s <= cfg.negatives; ++s) {
            std::size_t target = center;
            double label = 1.0;
            if (s > 0) {
              target = noise.sample(rng);
              if (target == center) continue;
              label = 0.0;
            }
            auto tgt = out.row(target);
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += ctx[c] * tgt[c];
            const double g = (label - sigmoid(dot)) * lr;
            for (std::size_t c = 0; c < d; ++c) {
              grad_in[c] += g * tgt[c];
              tgt[c] += g * ctx[c];
            }
          }
          for (std::size_t c = 0; c < d; ++c) ctx[c] += grad_in[c];
        }
      }
    }
  }
  return in;
}

inline Embedding struc2vec_embed(const Graph& g, const Struc2vecConfig& cfg = {}) {
  cfg.validate();
  Embedding e;
  e.space = Space::Euclidean;
  e.method = EmbedMethod::Struc2vec;
  if (g.num_nodes() < 2) {
    e.coords = Tensor2(g.num_nodes(), cfg.dim);
    return e;
  }
  const auto sd = structural_distances(g, cfg.max_layer, cfg.max_partners);
  const auto walks = struc2vec_walks(sd, cfg);
  e.coords = skipgram_embed(walks, g.num_nodes(), cfg);
  e.validate();
  return e;
}

}  // namespace geomgcn
