#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "geomgcn/graph.hpp"
#include "geomgcn/tensor.hpp"

namespace geomgcn {

enum class Space { Euclidean, Hyperbolic };
enum class EmbedMethod { Isomap, Poincare, Struc2vec };

inline const char* to_string(Space s) { return s == Space::Euclidean ? "euclidean" : "hyperbolic"; }

inline const char* to_string(EmbedMethod m) {
  switch (m) {
    case EmbedMethod::Isomap: return "isomap";
    case EmbedMethod::Poincare: return "poincare";
    case EmbedMethod::Struc2vec: return "struc2vec";
  }
  return "?";
}

inline Space parse_space(std::string_view s) {
  if (s == "euclidean") return Space::Euclidean;
  if (s == "hyperbolic") return Space::Hyperbolic;
  throw std::invalid_argument("unknown space \"" + std::string(s) + "\"");
}

inline EmbedMethod parse_method(std::string_view s) {
  if (s == "isomap") return EmbedMethod::Isomap;
  if (s == "poincare") return EmbedMethod::Poincare;
  if (s == "struc2vec") return EmbedMethod::Struc2vec;
  throw std::invalid_argument("unknown embedding method \"" + std::string(s) + "\" (isomap|poincare|struc2vec)");
}

inline Space native_space(EmbedMethod m) { return m == EmbedMethod::Poincare ? Space::Hyperbolic : Space::Euclidean; }

/// Per-node latent coordinates (num_nodes x dim).
struct Embedding {
  Tensor2 coords;
  Space space = Space::Euclidean;
  EmbedMethod method = EmbedMethod::Isomap;

  std::size_t num_nodes() const noexcept { return coords.rows(); }
  std::size_t dim() const noexcept { return coords.cols(); }

  void validate() const {
    if (!coords.all_finite()) throw ValidationError("embedding has non-finite coordinates");
    if (space == Space::Hyperbolic) {
      for (std::size_t i = 0; i < coords.rows(); ++i) {
        double s = 0.0;
        for (double x : coords.row(i)) s += x * x;
        if (!(s < 1.0)) throw ValidationError("hyperbolic embedding: node " + std::to_string(i) + " outside unit ball");
      }
    }
  }
};

/// Reorders rows so that old node i lands at perm[i] (see permute_graph).
inline Embedding permute_embedding(const Embedding& e, std::span<const std::size_t> perm) {
  Embedding out = e;
  for (std::size_t i = 0; i < e.num_nodes(); ++i)
    std::copy(e.coords.row(i).begin(), e.coords.row(i).end(), out.coords.row(perm[i]).begin());
  return out;
}

/// Cache format: optional '#' comment lines, then
/// "space=<euclidean|hyperbolic> method=<name> dim=<d>", then one row per node.
inline void write_embedding(std::ostream& out, const Embedding& e) {
  out << "space=" << to_string(e.space) << " method=" << to_string(e.method) << " dim=" << e.dim() << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < e.num_nodes(); ++i) {
    for (std::size_t c = 0; c < e.dim(); ++c) out << (c ? " " : "") << e.coords(i, c);
    out << '\n';
  }
}

inline Embedding read_embedding(std::istream& in, const std::string& name = "embedding") {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty() && detail::trim(line).front() != '#') break;
  }
  Embedding e;
  std::size_t dim = 0;
  bool have_space = false, have_method = false, have_dim = false;
  for (auto tok : detail::split_ws(detail::trim(line))) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) throw ParseError(name, lineno, "malformed header token");
    const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "space") e.space = parse_space(val), have_space = true;
    else if (key == "method") e.method = parse_method(val), have_method = true;
    else if (key == "dim") {
      if (!detail::parse_number(val, dim) || dim == 0) throw ParseError(name, lineno, "bad dim");
      have_dim = true;
    } else throw ParseError(name, lineno, "unknown header key \"" + std::string(key) + "\"");
  }
  if (!have_space || !have_method || !have_dim) throw ParseError(name, lineno, "header needs space=, method=, dim=");
  std::vector<double> data;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto toks = detail::split_ws(t);
    if (toks.size() != dim) throw ParseError(name, lineno, "expected " + std::to_string(dim) + " coordinates");
    for (auto tok : toks) {
      double x = 0;
      if (!detail::parse_number(tok, x)) throw ParseError(name, lineno, "bad coordinate");
      data.push_back(x);
    }
  }
  const std::size_t rows = data.size() / dim;
  e.coords = Tensor2(rows, dim, std::move(data));
  e.validate();
  return e;
}

}  // namespace geomgcn
