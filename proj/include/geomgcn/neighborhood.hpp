#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "geomgcn/embedding.hpp"
#include "geomgcn/graph.hpp"
#include "geomgcn/poincare.hpp"
#include "geomgcn/rng.hpp"

namespace geomgcn {

enum class Relation : std::uint8_t { UpperLeft, UpperRight, LowerLeft, LowerRight };
inline constexpr std::size_t kNumRelations = 4;
inline constexpr std::array<Relation, kNumRelations> kRelations = {Relation::UpperLeft, Relation::UpperRight,
                                                                    Relation::LowerLeft, Relation::LowerRight};

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::UpperLeft: return "UL";
    case Relation::UpperRight: return "UR";
    case Relation::LowerLeft: return "LL";
    case Relation::LowerRight: return "LR";
  }
  return "?";
}

inline Relation parse_relation(std::string_view s) {
  if (s == "UL") return Relation::UpperLeft;
  if (s == "UR") return Relation::UpperRight;
  if (s == "LL") return Relation::LowerLeft;
  if (s == "LR") return Relation::LowerRight;
  throw std::invalid_argument("unknown relation \"" + std::string(s) + "\"");
}

/// Quadrant of z_u relative to z_v.
///
/// Euclidean: upper iff z_v[1] <= z_u[1]; left iff z_v[0] > z_u[0].
/// Hyperbolic: the vertical axis is -|z| (closer to the origin is upper) and
/// the horizontal axis is the polar angle; left iff the wrapped angle
/// difference theta_u - theta_v lies in (-pi, 0).
inline Relation tau(std::span<const double> z_v, std::span<const double> z_u, Space space) {
  if (z_v.size() < 2 || z_u.size() < 2) throw std::invalid_argument("tau: needs 2-D coordinates");
  bool upper = false, left = false;
  if (space == Space::Euclidean) {
    upper = z_v[1] <= z_u[1];
    left = z_v[0] > z_u[0];
  } else {
    require_in_ball(z_v, "tau");
    require_in_ball(z_u, "tau");
    upper = -std::sqrt(squared_norm(z_v)) <= -std::sqrt(squared_norm(z_u));
    double diff = std::atan2(z_u[1], z_u[0]) - std::atan2(z_v[1], z_v[0]);
    if (diff <= -std::numbers::pi) diff += 2.0 * std::numbers::pi;
    if (diff > std::numbers::pi) diff -= 2.0 * std::numbers::pi;
    left = diff < 0.0;
  }
  if (upper) return left ? Relation::UpperLeft : Relation::UpperRight;
  return left ? Relation::LowerLeft : Relation::LowerRight;
}

/// Euclidean length of z_u - z_v measured in the tangent plane at z_v
/// (conformal factor 2 / (1 - |z_v|^2)). Not symmetric.
inline double hyperbolic_distance_approx(std::span<const double> z_v, std::span<const double> z_u) {
  require_in_ball(z_v, "hyperbolic_distance_approx");
  require_in_ball(z_u, "hyperbolic_distance_approx");
  double diff = 0.0;
  for (std::size_t i = 0; i < z_v.size(); ++i) diff += (z_u[i] - z_v[i]) * (z_u[i] - z_v[i]);
  return 2.0 / (1.0 - squared_norm(z_v)) * std::sqrt(diff);
}

struct NeighborhoodOptions {
  bool self_loop = true;
  bool exact_hyperbolic_distance = false;
  /// Above this node count rho is estimated from sampled pairs.
  std::size_t exact_rho_max_nodes = 10000;
  std::size_t rho_sample_pairs = 2'000'000;
  std::uint64_t seed = 0;
};

/// Latent distance seen from anchor v.
inline double latent_distance(const Embedding& e, std::size_t v, std::size_t u, const NeighborhoodOptions& opt) {
  const auto zv = e.coords.row(v), zu = e.coords.row(u);
  if (e.space == Space::Hyperbolic)
    return opt.exact_hyperbolic_distance ? poincare_distance(zv, zu) : hyperbolic_distance_approx(zv, zu);
  double s = 0.0;
  for (std::size_t i = 0; i < zv.size(); ++i) s += (zu[i] - zv[i]) * (zu[i] - zv[i]);
  return std::sqrt(s);
}

inline bool latent_distance_symmetric(const Embedding& e, const NeighborhoodOptions& opt) {
  return e.space == Space::Euclidean || opt.exact_hyperbolic_distance;
}

struct RhoSelection {
  double rho = 0.0;
  bool sampled = false;
};

/// Smallest radius at which the mean latent-neighborhood size reaches
/// `target_mean`. With d* the ceil(target_mean * n)-th smallest ordered-pair
/// distance, rho is the next double above d*, so N_s(v) = {u : d < rho}
/// includes every pair at distance d*. When ties at d* overshoot by more
/// than excluding them undershoots, rho = d* instead.
inline RhoSelection select_rho_for_mean(const Embedding& emb, double target_mean, const NeighborhoodOptions& opt = {}) {
  const std::size_t n = emb.num_nodes();
  if (n < 2) throw std::invalid_argument("select_rho: need at least 2 nodes");
  const auto target = static_cast<std::size_t>(std::ceil(target_mean * static_cast<double>(n) - 1e-9));
  RhoSelection sel;
  if (target == 0) return sel;

  const bool symmetric = latent_distance_symmetric(emb, opt);
  std::vector<double> dist;
  std::size_t k = 0;  // zero-based rank of d*
  if (n <= opt.exact_rho_max_nodes) {
    dist.reserve(symmetric ? n * (n - 1) / 2 : n * (n - 1));
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t u = symmetric ? v + 1 : 0; u < n; ++u)
        if (u != v) dist.push_back(latent_distance(emb, v, u, opt));
    // A stored symmetric distance stands for two ordered pairs.
    k = symmetric ? (target + 1) / 2 - 1 : target - 1;
  } else {
    sel.sampled = true;
    CounterRng rng = CounterRng(opt.seed).fork(0x2b0);
    dist.reserve(opt.rho_sample_pairs);
    for (std::size_t i = 0; i < opt.rho_sample_pairs; ++i) {
      const std::size_t v = rng.below(n);
      std::size_t u = rng.below(n - 1);
      if (u >= v) ++u;
      dist.push_back(latent_distance(emb, v, u, opt));
    }
    const double q = static_cast<double>(target) / (static_cast<double>(n) * static_cast<double>(n - 1));
    k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(dist.size())));
    k = k == 0 ? 0 : k - 1;
  }
  k = std::min(k, dist.size() - 1);
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  const double d_star = dist[k];
  const double d_max = *std::max_element(dist.begin(), dist.end());
  if (d_max == 0.0) throw std::runtime_error("select_rho: all embedded points coincide but the graph has edges");
  sel.rho = std::nextafter(d_star, std::numeric_limits<double>::infinity());
  if (!sel.sampled && d_star > 0.0) {
    // A large tie group at d* can overshoot the target; stopping just below
    // the group is used instead when that lands closer.
    std::size_t below = 0, through = 0;
    for (double d : dist) {
      below += d < d_star;
      through += d <= d_star;
    }
    const double scale = (symmetric ? 2.0 : 1.0) / static_cast<double>(n);
    const double over = static_cast<double>(through) * scale - target_mean;
    const double under = target_mean - static_cast<double>(below) * scale;
    if (under < over) sel.rho = d_star;
  }
  return sel;
}

/// Radius calibrated against the mean graph degree 2|E|/n.
inline RhoSelection select_rho_detailed(const Embedding& emb, const Graph& g, const NeighborhoodOptions& opt = {}) {
  if (emb.num_nodes() != g.num_nodes()) throw std::invalid_argument("select_rho: embedding does not cover the graph");
  return select_rho_for_mean(emb, g.average_degree(), opt);
}

inline double select_rho(const Embedding& emb, const Graph& g, const NeighborhoodOptions& opt = {}) {
  return select_rho_detailed(emb, g, opt).rho;
}

struct NeighborEntry {
  NodeId node = 0;
  Relation relation = Relation::UpperRight;
  friend bool operator==(const NeighborEntry&, const NeighborEntry&) = default;
};

enum class NeighborhoodType : std::uint8_t { Graph = 0, Latent = 1 };

/// Per-node graph and latent neighbor lists, each neighbor tagged with its
/// relation to the node. Lists are sorted by node id.
struct StructuralNeighborhood {
  std::vector<std::vector<NeighborEntry>> graph;
  std::vector<std::vector<NeighborEntry>> latent;
  double rho = 0.0;
  Space graph_space = Space::Euclidean;
  Space latent_space = Space::Euclidean;
  bool self_loop = true;
  bool rho_sampled = false;

  std::size_t num_nodes() const noexcept { return graph.size(); }
  const std::vector<NeighborEntry>& of(NeighborhoodType t, std::size_t v) const {
    return t == NeighborhoodType::Graph ? graph.at(v) : latent.at(v);
  }
  double mean_latent_size() const {
    double s = 0.0;
    for (const auto& l : latent) s += static_cast<double>(l.size());
    return latent.empty() ? 0.0 : s / static_cast<double>(latent.size());
  }
};

/// Graph neighbors (plus v itself when opt.self_loop) get relations from
/// `graph_emb`; latent neighbors are {u != v : d(z_v, z_u) < rho} in
/// `latent_emb`, with relations from the same embedding.
inline StructuralNeighborhood build_neighborhood(const Graph& g, const Embedding& graph_emb,
                                                 const Embedding& latent_emb, const NeighborhoodOptions& opt = {}) {
  const std::size_t n = g.num_nodes();
  if (graph_emb.num_nodes() != n || latent_emb.num_nodes() != n)
    throw std::invalid_argument("build_neighborhood: embedding does not cover all nodes");
  StructuralNeighborhood nb;
  nb.graph_space = graph_emb.space;
  nb.latent_space = latent_emb.space;
  nb.self_loop = opt.self_loop;
  nb.graph.resize(n);
  nb.latent.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    auto& list = nb.graph[v];
    const auto zv = graph_emb.coords.row(v);
    bool self_added = !opt.self_loop;
    for (NodeId u : g.neighbors(v)) {
      if (!self_added && u > v) {
        list.push_back({static_cast<NodeId>(v), Relation::UpperRight});
        self_added = true;
      }
      list.push_back({u, tau(zv, graph_emb.coords.row(u), graph_emb.space)});
    }
    if (!self_added) list.push_back({static_cast<NodeId>(v), Relation::UpperRight});
  }
  if (n >= 2) {
    const auto sel = select_rho_detailed(latent_emb, g, opt);
    nb.rho = sel.rho;
    nb.rho_sampled = sel.sampled;
    if (nb.rho > 0.0) {
      for (std::size_t v = 0; v < n; ++v) {
        const auto zv = latent_emb.coords.row(v);
        for (std::size_t u = 0; u < n; ++u)
          if (u != v && latent_distance(latent_emb, v, u, opt) < nb.rho)
            nb.latent[v].push_back({static_cast<NodeId>(u), tau(zv, latent_emb.coords.row(u), latent_emb.space)});
      }
    }
  }
  return nb;
}

inline StructuralNeighborhood build_neighborhood(const Graph& g, const Embedding& emb,
                                                 const NeighborhoodOptions& opt = {}) {
  return build_neighborhood(g, emb, emb, opt);
}

/// Cache format: optional '#' lines, a header
/// "rho=<value> space=<latent space> graph_space=<space> self_loop=<0|1> nodes=<n>",
/// then two lines per node: "g: u:REL ..." and "s: u:REL ...".
inline void write_neighborhood(std::ostream& out, const StructuralNeighborhood& nb) {
  out << std::setprecision(17) << "rho=" << nb.rho << " space=" << to_string(nb.latent_space)
      << " graph_space=" << to_string(nb.graph_space) << " self_loop=" << (nb.self_loop ? 1 : 0)
      << " rho_sampled=" << (nb.rho_sampled ? 1 : 0) << " nodes=" << nb.num_nodes() << '\n';
  auto emit = [&](const char* tag, const std::vector<NeighborEntry>& list) {
    out << tag << ':';
    for (const auto& e : list) out << ' ' << e.node << ':' << to_string(e.relation);
    out << '\n';
  };
  for (std::size_t v = 0; v < nb.num_nodes(); ++v) {
    emit("g", nb.graph[v]);
    emit("s", nb.latent[v]);
  }
}

inline StructuralNeighborhood read_neighborhood(std::istream& in, const std::string& name = "neighborhood") {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (!t.empty() && t.front() != '#') break;
  }
  StructuralNeighborhood nb;
  std::size_t nodes = 0;
  bool have_rho = false, have_nodes = false;
  for (auto tok : detail::split_ws(detail::trim(line))) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) throw ParseError(name, lineno, "malformed header token");
    const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "rho") have_rho = detail::parse_number(val, nb.rho);
    else if (key == "space") nb.latent_space = parse_space(val);
    else if (key == "graph_space") nb.graph_space = parse_space(val);
    else if (key == "self_loop") nb.self_loop = val == "1";
    else if (key == "rho_sampled") nb.rho_sampled = val == "1";
    else if (key == "nodes") have_nodes = detail::parse_number(val, nodes);
    else throw ParseError(name, lineno, "unknown header key \"" + std::string(key) + "\"");
  }
  if (!have_rho || !have_nodes) throw ParseError(name, lineno, "header needs rho= and nodes=");
  nb.graph.resize(nodes);
  nb.latent.resize(nodes);
  auto parse_list = [&](std::string_view expect, std::vector<NeighborEntry>& list) {
    if (!std::getline(in, line)) throw ParseError(name, lineno, "unexpected end of file");
    ++lineno;
    const auto t = detail::trim(line);
    if (t.substr(0, expect.size()) != expect || t.size() < expect.size() + 1 || t[expect.size()] != ':')
      throw ParseError(name, lineno, "expected \"" + std::string(expect) + ":\" line");
    for (auto tok : detail::split_ws(t.substr(expect.size() + 1))) {
      const auto colon = tok.find(':');
      NeighborEntry e;
      if (colon == std::string_view::npos || !detail::parse_number(tok.substr(0, colon), e.node) || e.node >= nodes)
        throw ParseError(name, lineno, "bad neighbor token \"" + std::string(tok) + "\"");
      e.relation = parse_relation(tok.substr(colon + 1));
      list.push_back(e);
    }
  };
  for (std::size_t v = 0; v < nodes; ++v) {
    parse_list("g", nb.graph[v]);
    parse_list("s", nb.latent[v]);
  }
  return nb;
}

/// Relabels neighborhoods consistently with permute_graph.
inline StructuralNeighborhood permute_neighborhood(const StructuralNeighborhood& nb, std::span<const std::size_t> perm) {
  StructuralNeighborhood out = nb;
  auto remap = [&](const std::vector<NeighborEntry>& list) {
    std::vector<NeighborEntry> r;
    r.reserve(list.size());
    for (const auto& e : list) r.push_back({static_cast<NodeId>(perm[e.node]), e.relation});
    std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.node < b.node; });
    return r;
  };
  for (std::size_t v = 0; v < nb.num_nodes(); ++v) {
    out.graph[perm[v]] = remap(nb.graph[v]);
    out.latent[perm[v]] = remap(nb.latent[v]);
  }
  return out;
}

}  // namespace geomgcn
