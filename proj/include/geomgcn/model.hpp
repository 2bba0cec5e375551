#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "geomgcn/autograd.hpp"
#include "geomgcn/graph.hpp"
#include "geomgcn/neighborhood.hpp"
#include "geomgcn/rng.hpp"
#include "geomgcn/tensor.hpp"

namespace geomgcn {

enum class Variant { Geom, GraphOnly, LatentOnly, GcnBaseline };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::Geom: return "geom";
    case Variant::GraphOnly: return "g_only";
    case Variant::LatentOnly: return "s_only";
    case Variant::GcnBaseline: return "gcn";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "geom") return Variant::Geom;
  if (s == "g_only") return Variant::GraphOnly;
  if (s == "s_only") return Variant::LatentOnly;
  if (s == "gcn" || s == "gcn_baseline") return Variant::GcnBaseline;
  throw std::invalid_argument("unknown variant \"" + std::string(s) + "\" (gcn|geom|g_only|s_only)");
}

/// A virtual node collects the neighbors of one neighborhood type that bear
/// one relation. `merged` ignores the relation (plain GCN).
struct VirtualNode {
  NeighborhoodType type = NeighborhoodType::Graph;
  Relation relation = Relation::UpperLeft;
  bool merged = false;
};

/// Fixed virtual-node order: (g,UL),(g,UR),(g,LL),(g,LR),(s,UL),(s,UR),(s,LL),(s,LR).
inline std::vector<VirtualNode> virtual_nodes(Variant variant) {
  std::vector<VirtualNode> out;
  auto add_type = [&](NeighborhoodType t) {
    for (Relation r : kRelations) out.push_back({t, r, false});
  };
  switch (variant) {
    case Variant::Geom:
      add_type(NeighborhoodType::Graph);
      add_type(NeighborhoodType::Latent);
      break;
    case Variant::GraphOnly: add_type(NeighborhoodType::Graph); break;
    case Variant::LatentOnly: add_type(NeighborhoodType::Latent); break;
    case Variant::GcnBaseline: out.push_back({NeighborhoodType::Graph, Relation::UpperLeft, true}); break;
  }
  return out;
}

struct ModelConfig {
  /// Width of the first layer's output, split evenly across virtual nodes.
  std::size_t hidden_units = 128;
  double dropout = 0.5;
  Variant variant = Variant::Geom;
  double norm_exponent = -0.5;

  std::size_t num_virtual() const { return virtual_nodes(variant).size(); }
  std::size_t units_per_virtual() const { return hidden_units / num_virtual(); }
  void validate() const {
    if (hidden_units == 0) throw std::invalid_argument("ModelConfig: hidden_units must be > 0");
    if (hidden_units % num_virtual() != 0)
      throw std::invalid_argument("ModelConfig: hidden_units " + std::to_string(hidden_units) +
                                  " not divisible by virtual node count " + std::to_string(num_virtual()));
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("ModelConfig: dropout must be in [0,1)");
  }
};

/// Degree used by the normalization: graph degree plus the self-loop when
/// self-loops are on, floored at 1.
inline double normalized_degree(const Graph& g, std::size_t v, bool self_loop) {
  return static_cast<double>(std::max<std::size_t>(1, g.degree(v) + (self_loop ? 1 : 0)));
}

/// Neighborhood with graph neighbors only (no latent space), as used by the
/// GCN baseline.
inline StructuralNeighborhood graph_only_neighborhood(const Graph& g, bool self_loop = true) {
  StructuralNeighborhood nb;
  nb.self_loop = self_loop;
  nb.graph.resize(g.num_nodes());
  nb.latent.resize(g.num_nodes());
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    bool added = !self_loop;
    for (NodeId u : g.neighbors(v)) {
      if (!added && u > v) {
        nb.graph[v].push_back({static_cast<NodeId>(v), Relation::UpperRight});
        added = true;
      }
      nb.graph[v].push_back({u, Relation::UpperRight});
    }
    if (!added) nb.graph[v].push_back({static_cast<NodeId>(v), Relation::UpperRight});
  }
  return nb;
}

namespace detail {

inline bool in_bucket(const NeighborEntry& e, const VirtualNode& vn) { return vn.merged || e.relation == vn.relation; }

/// Bucket members of (v, vn) ordered by stable node key.
inline std::vector<NodeId> bucket_members(const Graph& g, const StructuralNeighborhood& nb, std::size_t v,
                                          const VirtualNode& vn) {
  std::vector<NodeId> members;
  for (const auto& e : nb.of(vn.type, v))
    if (in_bucket(e, vn)) members.push_back(e.node);
  std::sort(members.begin(), members.end(),
            [&](NodeId a, NodeId b) { return g.keys()[a] < g.keys()[b]; });
  return members;
}

}  // namespace detail

/// e_(i,r) for node v: sum over bucket members u of
/// (deg(v) deg(u))^norm_exponent * h_u, summed in ascending node-key order.
/// An empty bucket yields the zero vector.
inline std::vector<double> low_level_aggregate(const Tensor2& h, const Graph& g, const StructuralNeighborhood& nb,
                                               std::size_t v, const VirtualNode& vn, double norm_exponent) {
  if (h.rows() != g.num_nodes()) throw std::invalid_argument("low_level_aggregate: row count != num_nodes");
  std::vector<double> e(h.cols(), 0.0);
  const double dv = normalized_degree(g, v, nb.self_loop);
  for (NodeId u : detail::bucket_members(g, nb, v, vn)) {
    const double c = std::pow(dv * normalized_degree(g, u, nb.self_loop), norm_exponent);
    const auto hu = h.row(u);
    for (std::size_t j = 0; j < e.size(); ++j) e[j] += c * hu[j];
  }
  return e;
}

inline std::vector<double> low_level_aggregate(const Tensor2& h, const Graph& g, const StructuralNeighborhood& nb,
                                               std::size_t v, NeighborhoodType type, Relation r,
                                               double norm_exponent = -0.5) {
  return low_level_aggregate(h, g, nb, v, VirtualNode{type, r, false}, norm_exponent);
}

/// Aggregation coefficients for all (node, virtual node) buckets.
inline BucketOperator build_bucket_operator(const Graph& g, const StructuralNeighborhood& nb, Variant variant,
                                            double norm_exponent) {
  const auto vns = virtual_nodes(variant);
  BucketOperator op;
  op.num_rows = g.num_nodes();
  op.num_buckets = vns.size();
  op.offsets.assign(op.num_rows * op.num_buckets + 1, 0);
  if (nb.num_nodes() != g.num_nodes()) throw std::invalid_argument("build_bucket_operator: neighborhood size mismatch");
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const double dv = normalized_degree(g, v, nb.self_loop);
    for (std::size_t k = 0; k < vns.size(); ++k) {
      for (NodeId u : detail::bucket_members(g, nb, v, vns[k])) {
        op.sources.push_back(u);
        op.weights.push_back(std::pow(dv * normalized_degree(g, u, nb.self_loop), norm_exponent));
      }
      op.offsets[op.slot(v, k) + 1] = op.sources.size();
    }
  }
  return op;
}

/// Layer weights. layer1 is in_dim x (B*m): column block k is the transform
/// of virtual node k, so concatenating the B transformed virtual nodes equals
/// multiplying the concatenated virtual nodes by a block-diagonal matrix.
/// layer2 is (B*m) x num_classes and acts on the mean of the virtual nodes.
struct ModelParams {
  ModelConfig config;
  std::array<Tensor2, 2> layers;

  static inline const std::vector<std::string> names = {"layer1.weight", "layer2.weight"};

  Tensor2& layer1() noexcept { return layers[0]; }
  Tensor2& layer2() noexcept { return layers[1]; }
  const Tensor2& layer1() const noexcept { return layers[0]; }
  const Tensor2& layer2() const noexcept { return layers[1]; }
};

/// Glorot-uniform initialization; each virtual-node block of layer1 uses its
/// own fan-in/fan-out.
inline ModelParams init_params(std::size_t in_dim, std::size_t num_classes, const ModelConfig& cfg,
                               std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  p.layer1() = Tensor2(in_dim, cfg.hidden_units);
  p.layer2() = Tensor2(cfg.hidden_units, num_classes);
  CounterRng rng = CounterRng(seed).fork(0x1417);
  const double a1 = std::sqrt(6.0 / static_cast<double>(in_dim + cfg.units_per_virtual()));
  for (double& x : p.layer1().flat()) x = rng.uniform(-a1, a1);
  const double a2 = std::sqrt(6.0 / static_cast<double>(cfg.hidden_units + num_classes));
  for (double& x : p.layer2().flat()) x = rng.uniform(-a2, a2);
  return p;
}

/// One bi-level aggregation layer computed literally: virtual nodes are
/// aggregated first, then either concatenated and transformed blockwise
/// (followed by ReLU) or, for the final layer, averaged and multiplied by
/// `weight` (logits, no activation).
inline Tensor2 bi_level_forward(const Tensor2& h, const Graph& g, const StructuralNeighborhood& nb,
                                const Tensor2& weight, const ModelConfig& cfg, bool is_final) {
  const auto vns = virtual_nodes(cfg.variant);
  const std::size_t B = vns.size();
  if (weight.rows() != h.cols())
    throw std::invalid_argument("bi_level_forward: weight rows " + std::to_string(weight.rows()) +
                                " != feature width " + std::to_string(h.cols()));
  if (!is_final && weight.cols() % B != 0) throw std::invalid_argument("bi_level_forward: weight width not divisible");
  const std::size_t m = is_final ? weight.cols() : weight.cols() / B;
  Tensor2 out(h.rows(), weight.cols());
  for (std::size_t v = 0; v < h.rows(); ++v) {
    std::vector<std::vector<double>> e;
    e.reserve(B);
    for (const auto& vn : vns) e.push_back(low_level_aggregate(h, g, nb, v, vn, cfg.norm_exponent));
    if (is_final) {
      std::vector<double> mean(h.cols(), 0.0);
      for (const auto& ek : e)
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += ek[j];
      for (double& x : mean) x /= static_cast<double>(B);
      for (std::size_t c = 0; c < weight.cols(); ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < mean.size(); ++j) s += mean[j] * weight(j, c);
        out(v, c) = s;
      }
    } else {
      for (std::size_t k = 0; k < B; ++k)
        for (std::size_t c = 0; c < m; ++c) {
          double s = 0.0;
          for (std::size_t j = 0; j < h.cols(); ++j) s += e[k][j] * weight(j, k * m + c);
          out(v, k * m + c) = std::max(0.0, s);
        }
    }
  }
  return out;
}

/// Tape-recorded forward pass of the two-layer network.
class GeomGcn {
 public:
  GeomGcn(const Graph& g, const StructuralNeighborhood& nb, const ModelConfig& cfg)
      : graph_(&g), config_(cfg), op_(build_bucket_operator(g, nb, cfg.variant, cfg.norm_exponent)) {
    cfg.validate();
  }

  struct Outputs {
    Var hidden;
    Var logits;
  };

  /// dropout -> layer 1 (blockwise transform, aggregate, ReLU) -> dropout ->
  /// layer 2 (mean aggregate, transform). Layer 1 applies each block transform
  /// before aggregating, which is the same linear map as aggregating first.
  /// Dropout masks derive from `rng` forked by layer index.
  Outputs forward(Tape& tape, Var features, Var w1, Var w2, bool train_mode, const CounterRng& rng) const {
    const auto keys = std::span<const std::uint64_t>(graph_->keys());
    Var x = dropout(tape, features, config_.dropout, train_mode, rng.fork(0), keys);
    return finish(tape, matmul(tape, x, w1), w2, train_mode, rng);
  }

  /// Same network on a constant sparse input; bit-identical to the dense
  /// overload because both sum the nonzero terms in ascending column order.
  Outputs forward(Tape& tape, const SparseRows& features, Var w1, Var w2, bool train_mode,
                  const CounterRng& rng) const {
    const auto keys = std::span<const std::uint64_t>(graph_->keys());
    Var z1 = sparse_dropout_matmul(tape, features, w1, config_.dropout, train_mode, rng.fork(0), keys);
    return finish(tape, z1, w2, train_mode, rng);
  }

  /// Evaluation-mode hidden features and logits without gradients.
  std::pair<Tensor2, Tensor2> evaluate(const ModelParams& p, const Tensor2& features) const {
    Tape tape;
    const auto out =
        forward(tape, tape.leaf_ref(features), tape.leaf_ref(p.layer1()), tape.leaf_ref(p.layer2()), false, CounterRng(0));
    return {tape.value(out.hidden), tape.value(out.logits)};
  }
  std::pair<Tensor2, Tensor2> evaluate(const ModelParams& p, const SparseRows& features) const {
    Tape tape;
    const auto out = forward(tape, features, tape.leaf_ref(p.layer1()), tape.leaf_ref(p.layer2()), false, CounterRng(0));
    return {tape.value(out.hidden), tape.value(out.logits)};
  }

  const BucketOperator& bucket_operator() const noexcept { return op_; }
  const ModelConfig& config() const noexcept { return config_; }
  const Graph& graph() const noexcept { return *graph_; }

 private:
  Outputs finish(Tape& tape, Var z1, Var w2, bool train_mode, const CounterRng& rng) const {
    const auto keys = std::span<const std::uint64_t>(graph_->keys());
    Var h1 = relu(tape, bucket_aggregate(tape, z1, op_, BucketMode::Blockwise));
    Var h1d = dropout(tape, h1, config_.dropout, train_mode, rng.fork(1), keys);
    Var agg = bucket_aggregate(tape, h1d, op_, BucketMode::MeanShared);
    return {h1, matmul(tape, agg, w2)};
  }

  const Graph* graph_;
  ModelConfig config_;
  BucketOperator op_;
};

/// Logits of the two-layer model; dropout is active only in train mode.
inline Tensor2 model_forward(const Graph& g, const StructuralNeighborhood& nb, const ModelParams& params,
                             const Tensor2& features, bool train_mode, const CounterRng& rng) {
  GeomGcn model(g, nb, params.config);
  Tape tape;
  const auto out = model.forward(tape, tape.leaf_ref(features), tape.leaf_ref(params.layer1()),
                                 tape.leaf_ref(params.layer2()), train_mode, rng);
  return tape.value(out.logits);
}

inline void write_checkpoint(std::ostream& out, const ModelParams& p) {
  out << "variant=" << to_string(p.config.variant) << " norm_exponent=" << p.config.norm_exponent
      << " hidden_units=" << p.config.hidden_units << " dropout=" << p.config.dropout
      << " virtual_nodes=" << p.config.num_virtual() << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const Tensor2& w = p.layers[i];
    out << ModelParams::names[i] << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (std::size_t r = 0; r < w.rows(); ++r) {
      for (std::size_t c = 0; c < w.cols(); ++c) out << (c ? " " : "") << w(r, c);
      out << '\n';
    }
  }
}

inline ModelParams read_checkpoint(std::istream& in) {
  ModelParams p;
  std::string line;
  while (std::getline(in, line) && (detail::trim(line).empty() || detail::trim(line).front() == '#')) {
  }
  for (auto tok : detail::split_ws(detail::trim(line))) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) throw std::runtime_error("checkpoint: malformed header");
    const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "variant") p.config.variant = parse_variant(val);
    else if (key == "norm_exponent") detail::parse_number(val, p.config.norm_exponent);
    else if (key == "hidden_units") detail::parse_number(val, p.config.hidden_units);
    else if (key == "dropout") detail::parse_number(val, p.config.dropout);
  }
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols) || name != ModelParams::names[i])
      throw std::runtime_error("checkpoint: expected " + ModelParams::names[i]);
    std::vector<double> data(rows * cols);
    for (double& x : data)
      if (!(in >> x)) throw std::runtime_error("checkpoint: truncated " + name);
    p.layers[i] = Tensor2(rows, cols, std::move(data));
  }
  p.config.validate();
  return p;
}

}  // namespace geomgcn
