#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geomgcn/rng.hpp"
#include "geomgcn/tensor.hpp"

namespace geomgcn {

using NodeId = std::uint32_t;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadStats {
  std::size_t self_loops_dropped = 0;
  std::size_t duplicate_edges_dropped = 0;
};

/// Immutable undirected graph with node features and labels.
///
/// Edges are stored once as (min, max) pairs; adjacency is symmetric and each
/// neighbor list is sorted. Self-loops are never stored. Every node carries a
/// stable key (its id at construction unless given) that survives relabeling,
/// so order-sensitive reductions can be made independent of node numbering.
class Graph {
 public:
  Graph() = default;

  static Graph build(std::size_t num_nodes, std::span<const std::pair<NodeId, NodeId>> edges, Tensor2 features,
                     std::vector<int> labels, std::vector<std::uint64_t> keys = {}) {
    Graph g;
    g.num_nodes_ = num_nodes;
    if (labels.size() != num_nodes)
      throw ValidationError("label count " + std::to_string(labels.size()) + " != num_nodes " +
                            std::to_string(num_nodes));
    if (features.rows() != num_nodes)
      throw ValidationError("feature rows " + std::to_string(features.rows()) + " != num_nodes " +
                            std::to_string(num_nodes));
    if (features.cols() == 0) throw ValidationError("feature_dim must be > 0");
    int max_label = -1;
    for (int y : labels) {
      if (y < 0) throw ValidationError("negative label " + std::to_string(y));
      max_label = std::max(max_label, y);
    }
    g.num_classes_ = static_cast<std::size_t>(max_label + 1);

    std::vector<std::pair<NodeId, NodeId>> clean;
    clean.reserve(edges.size());
    for (auto [u, v] : edges) {
      if (u >= num_nodes || v >= num_nodes)
        throw ValidationError("edge (" + std::to_string(u) + ", " + std::to_string(v) + ") references node >= " +
                              std::to_string(num_nodes));
      if (u == v) {
        ++g.stats_.self_loops_dropped;
        continue;
      }
      clean.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(clean.begin(), clean.end());
    const auto before = clean.size();
    clean.erase(std::unique(clean.begin(), clean.end()), clean.end());
    g.stats_.duplicate_edges_dropped = before - clean.size();
    g.edges_ = std::move(clean);

    std::vector<std::size_t> deg(num_nodes, 0);
    for (auto [u, v] : g.edges_) {
      ++deg[u];
      ++deg[v];
    }
    g.offsets_.assign(num_nodes + 1, 0);
    for (std::size_t i = 0; i < num_nodes; ++i) g.offsets_[i + 1] = g.offsets_[i] + deg[i];
    g.adjacency_.resize(g.offsets_.back());
    std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
    for (auto [u, v] : g.edges_) {
      g.adjacency_[cursor[u]++] = v;
      g.adjacency_[cursor[v]++] = u;
    }
    for (std::size_t i = 0; i < num_nodes; ++i)
      std::sort(g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i]),
                g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i + 1]));

    g.features_ = std::move(features);
    g.labels_ = std::move(labels);
    if (keys.empty()) {
      keys.resize(num_nodes);
      std::iota(keys.begin(), keys.end(), std::uint64_t{0});
    }
    if (keys.size() != num_nodes) throw ValidationError("node key count != num_nodes");
    g.keys_ = std::move(keys);
    return g;
  }

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  std::size_t feature_dim() const noexcept { return features_.cols(); }
  std::size_t num_classes() const noexcept { return num_classes_; }

  std::span<const NodeId> neighbors(std::size_t v) const {
    check_node(v);
    return {adjacency_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t degree(std::size_t v) const {
    check_node(v);
    return offsets_[v + 1] - offsets_[v];
  }
  bool has_edge(std::size_t u, std::size_t v) const {
    const auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), static_cast<NodeId>(v));
  }
  double average_degree() const noexcept {
    return num_nodes_ ? 2.0 * static_cast<double>(edges_.size()) / static_cast<double>(num_nodes_) : 0.0;
  }

  const std::vector<std::pair<NodeId, NodeId>>& edges() const noexcept { return edges_; }
  const Tensor2& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<std::uint64_t>& keys() const noexcept { return keys_; }
  const LoadStats& load_stats() const noexcept { return stats_; }

  void check_node(std::size_t v) const {
    if (v >= num_nodes_)
      throw std::out_of_range("node id " + std::to_string(v) + " out of range [0, " + std::to_string(num_nodes_) +
                              ")");
  }

 private:
  std::size_t num_nodes_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<std::pair<NodeId, NodeId>> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> adjacency_;
  Tensor2 features_;
  std::vector<int> labels_;
  std::vector<std::uint64_t> keys_;
  LoadStats stats_;
};

inline std::size_t degree(const Graph& g, std::size_t v) { return g.degree(v); }

/// Number of connected components (isolated nodes count as one each).
inline std::size_t connected_components(const Graph& g) {
  std::vector<bool> seen(g.num_nodes(), false);
  std::vector<NodeId> stack;
  std::size_t count = 0;
  for (std::size_t s = 0; s < g.num_nodes(); ++s) {
    if (seen[s]) continue;
    ++count;
    seen[s] = true;
    stack.assign(1, static_cast<NodeId>(s));
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (NodeId w : g.neighbors(u))
        if (!seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
    }
  }
  return count;
}

/// Mean over nodes of the fraction of same-label neighbors. Isolated nodes
/// contribute 0.
inline double homophily_beta(const Graph& g) {
  if (g.num_nodes() == 0) throw std::invalid_argument("homophily_beta: empty graph");
  double total = 0.0;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const auto nb = g.neighbors(v);
    if (nb.empty()) continue;
    std::size_t same = 0;
    for (NodeId u : nb) same += g.labels()[u] == g.labels()[v];
    total += static_cast<double>(same) / static_cast<double>(nb.size());
  }
  return total / static_cast<double>(g.num_nodes());
}

/// Relabels nodes: old node i becomes new node perm[i]. Keys travel with
/// their nodes.
inline Graph permute_graph(const Graph& g, std::span<const std::size_t> perm) {
  const std::size_t n = g.num_nodes();
  if (perm.size() != n) throw std::invalid_argument("permute_graph: permutation size mismatch");
  std::vector<bool> seen(n, false);
  for (std::size_t p : perm) {
    if (p >= n || seen[p]) throw std::invalid_argument("permute_graph: not a permutation");
    seen[p] = true;
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(g.num_edges());
  for (auto [u, v] : g.edges()) edges.emplace_back(static_cast<NodeId>(perm[u]), static_cast<NodeId>(perm[v]));
  Tensor2 feats(n, g.feature_dim());
  std::vector<int> labels(n);
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(g.features().row(i).begin(), g.features().row(i).end(), feats.row(perm[i]).begin());
    labels[perm[i]] = g.labels()[i];
    keys[perm[i]] = g.keys()[i];
  }
  return Graph::build(n, edges, std::move(feats), std::move(labels), std::move(keys));
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

template <class T>
bool parse_number(std::string_view tok, T& out) {
  const auto* end = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && p == end;
}

/// Reads all lines; trailing blank lines are dropped.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

}  // namespace detail

inline std::vector<std::pair<NodeId, NodeId>> read_edge_file(const std::string& path) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto t = detail::trim(lines[i]);
    if (t.empty() || t.front() == '#') continue;
    const auto toks = detail::split_ws(t);
    NodeId u = 0, v = 0;
    if (toks.size() != 2 || !detail::parse_number(toks[0], u) || !detail::parse_number(toks[1], v))
      throw ParseError(path, i + 1, "expected \"u v\" with non-negative integers, got \"" + std::string(t) + "\"");
    edges.emplace_back(u, v);
  }
  return edges;
}

inline std::vector<int> read_label_file(const std::string& path) {
  std::vector<int> labels;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto t = detail::trim(lines[i]);
    int y = 0;
    if (!detail::parse_number(t, y)) throw ParseError(path, i + 1, "expected one integer label");
    labels.push_back(y);
  }
  return labels;
}

/// Dense rows ("0.1 0 1 ...") or sparse rows ("3:1 17:0.5"); one format per
/// file. Sparse rows may be empty.
inline Tensor2 read_feature_file(const std::string& path) {
  const auto lines = detail::read_lines(path);
  enum class Kind { Unknown, Dense, Sparse } kind = Kind::Unknown;
  std::vector<std::vector<std::pair<std::size_t, double>>> sparse_rows;
  std::vector<double> dense;
  std::size_t dim = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto toks = detail::split_ws(detail::trim(lines[i]));
    std::size_t n_sparse = 0;
    for (auto tok : toks) n_sparse += tok.find(':') != std::string_view::npos;
    if (n_sparse != 0 && n_sparse != toks.size()) throw ParseError(path, i + 1, "mixed dense and sparse tokens");
    const Kind line_kind = toks.empty() ? Kind::Unknown : (n_sparse ? Kind::Sparse : Kind::Dense);
    if (line_kind != Kind::Unknown) {
      if (kind == Kind::Unknown) kind = line_kind;
      if (kind != line_kind) throw ParseError(path, i + 1, "mixed dense and sparse lines");
    }
    if (line_kind == Kind::Dense || (toks.empty() && kind == Kind::Dense)) {
      if (toks.empty()) throw ParseError(path, i + 1, "empty dense feature row");
      if (dim == 0) dim = toks.size();
      if (toks.size() != dim)
        throw ParseError(path, i + 1, "expected " + std::to_string(dim) + " values, got " + std::to_string(toks.size()));
      for (auto tok : toks) {
        double x = 0;
        if (!detail::parse_number(tok, x)) throw ParseError(path, i + 1, "bad real \"" + std::string(tok) + "\"");
        dense.push_back(x);
      }
    } else {
      std::vector<std::pair<std::size_t, double>> row;
      for (auto tok : toks) {
        const auto colon = tok.find(':');
        std::size_t idx = 0;
        double x = 0;
        if (!detail::parse_number(tok.substr(0, colon), idx) || !detail::parse_number(tok.substr(colon + 1), x))
          throw ParseError(path, i + 1, "bad sparse token \"" + std::string(tok) + "\"");
        dim = std::max(dim, idx + 1);
        row.emplace_back(idx, x);
      }
      sparse_rows.push_back(std::move(row));
    }
  }
  if (kind == Kind::Sparse || kind == Kind::Unknown) {
    Tensor2 t(sparse_rows.size(), dim);
    for (std::size_t r = 0; r < sparse_rows.size(); ++r)
      for (auto [c, x] : sparse_rows[r]) t(r, c) = x;
    return t;
  }
  const std::size_t rows = dense.size() / dim;
  return Tensor2(rows, dim, std::move(dense));
}

/// Loads the normalized three-file format. The label file defines the node
/// count.
inline Graph load_graph(const std::string& edge_path, const std::string& feature_path,
                        const std::string& label_path) {
  auto labels = read_label_file(label_path);
  auto features = read_feature_file(feature_path);
  auto edges = read_edge_file(edge_path);
  const std::size_t n = labels.size();
  if (features.rows() != n)
    throw ValidationError(feature_path + ": " + std::to_string(features.rows()) + " rows but label file has " +
                          std::to_string(n) + " nodes");
  return Graph::build(n, edges, std::move(features), std::move(labels));
}

enum class SplitTag : std::uint8_t { Train, Val, Test };

inline const char* to_string(SplitTag t) {
  switch (t) {
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
  }
  return "?";
}

struct Split {
  std::vector<SplitTag> assignment;
  std::uint64_t seed = 0;

  std::vector<std::size_t> nodes(SplitTag tag) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == tag) out.push_back(i);
    return out;
  }
  friend bool operator==(const Split&, const Split&) = default;
};

/// Class-stratified 60/20/20 split. Per class of size n the counts start at
/// floor(0.6n), floor(0.2n), floor(0.2n); leftover nodes go to train, then
/// val, then test.
inline Split random_split(const Graph& g, std::uint64_t seed) {
  Split s;
  s.seed = seed;
  s.assignment.assign(g.num_nodes(), SplitTag::Train);
  std::vector<std::vector<std::size_t>> by_class(g.num_classes());
  for (std::size_t v = 0; v < g.num_nodes(); ++v) by_class[static_cast<std::size_t>(g.labels()[v])].push_back(v);
  const CounterRng base(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    const std::size_t n = members.size();
    if (n == 0) continue;
    if (n < 5)
      throw std::invalid_argument("random_split: class " + std::to_string(c) + " has " + std::to_string(n) +
                                  " nodes (need >= 5)");
    std::size_t counts[3] = {6 * n / 10, 2 * n / 10, 2 * n / 10};
    for (std::size_t left = n - counts[0] - counts[1] - counts[2], k = 0; left > 0; --left, k = (k + 1) % 3)
      ++counts[k];
    CounterRng rng = base.fork(c);
    shuffle(members, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const SplitTag tag = i < counts[0] ? SplitTag::Train : (i < counts[0] + counts[1] ? SplitTag::Val : SplitTag::Test);
      s.assignment[members[i]] = tag;
    }
  }
  return s;
}

inline void write_split(std::ostream& out, const Split& s) {
  for (SplitTag t : s.assignment) out << to_string(t) << '\n';
}

inline Split read_split(const std::string& path) {
  Split s;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto t = detail::trim(lines[i]);
    if (t.empty() || t.front() == '#') continue;
    if (t == "train") s.assignment.push_back(SplitTag::Train);
    else if (t == "val") s.assignment.push_back(SplitTag::Val);
    else if (t == "test") s.assignment.push_back(SplitTag::Test);
    else throw ParseError(path, i + 1, "expected train|val|test");
  }
  return s;
}

}  // namespace geomgcn
