#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <future>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "geomgcn/autograd.hpp"
#include "geomgcn/embedding.hpp"
#include "geomgcn/graph.hpp"
#include "geomgcn/model.hpp"
#include "geomgcn/neighborhood.hpp"

namespace geomgcn {

struct TrainConfig {
  double lr = 0.05;
  double weight_decay = 5e-5;
  std::size_t patience = 100;
  std::size_t max_epochs = 1000;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t threads = 1;

  void validate() const {
    if (patience >= max_epochs) throw std::invalid_argument("TrainConfig: patience must be < max_epochs");
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (seeds.empty()) throw std::invalid_argument("TrainConfig: need at least one seed");
  }
};

/// Published per-dataset settings. GCN hidden width; weight decay; homophily.
struct DatasetPreset {
  std::string name;
  std::size_t gcn_hidden = 16;
  double weight_decay = 5e-5;
  double reference_beta = 0.0;
};

inline const std::vector<DatasetPreset>& dataset_presets() {
  static const std::vector<DatasetPreset> presets = {
      {"cora", 16, 5e-5, 0.83},      {"citeseer", 16, 5e-5, 0.71}, {"pubmed", 64, 5e-5, 0.79},
      {"chameleon", 48, 5e-5, 0.25}, {"squirrel", 48, 5e-5, 0.22}, {"actor", 32, 5e-5, 0.24},
      {"cornell", 32, 5e-6, 0.11},   {"texas", 32, 5e-6, 0.06},    {"wisconsin", 32, 5e-6, 0.16},
  };
  return presets;
}

inline std::optional<DatasetPreset> find_preset(const std::string& name) {
  for (const auto& p : dataset_presets())
    if (p.name == name) return p;
  return std::nullopt;
}

/// Hidden width for a variant: each virtual node gets the GCN width, so Geom
/// uses 8x, single-neighborhood variants 4x.
inline std::size_t default_hidden_units(Variant variant, std::size_t gcn_hidden) {
  return virtual_nodes(variant).size() * gcn_hidden;
}

/// 64-bit FNV-1a, chainable through `h`.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class T>
std::uint64_t fnv1a_values(std::span<const T> values, std::uint64_t h) {
  return fnv1a({reinterpret_cast<const char*>(values.data()), values.size_bytes()}, h);
}

/// Content hash of everything a downstream artifact depends on: node count,
/// edges, features, labels.
inline std::uint64_t graph_hash(const Graph& g) {
  std::uint64_t h = fnv1a(std::to_string(g.num_nodes()) + ":" + std::to_string(g.feature_dim()));
  for (const auto& [u, v] : g.edges()) {
    const std::uint32_t e[2] = {u, v};
    h = fnv1a_values(std::span<const std::uint32_t>(e), h);
  }
  h = fnv1a_values(std::span<const double>(g.features().storage()), h);
  return fnv1a_values(std::span<const int>(g.labels()), h);
}

inline std::string hex64(std::uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return s;
}

struct DatasetFiles {
  std::filesystem::path edges, features, labels;
  bool exist() const {
    return std::filesystem::exists(edges) && std::filesystem::exists(features) && std::filesystem::exists(labels);
  }
};

/// Normalized layout: <root>/<name>/{edges.txt,features.txt,labels.txt}.
inline DatasetFiles dataset_files(const std::filesystem::path& root, const std::string& name) {
  const auto dir = root / name;
  return {dir / "edges.txt", dir / "features.txt", dir / "labels.txt"};
}

inline Graph load_dataset(const std::filesystem::path& root, const std::string& name) {
  const auto f = dataset_files(root, name);
  if (!f.exist())
    throw std::runtime_error("dataset \"" + name + "\" not found: expected " + f.edges.string() + ", " +
                             f.features.string() + ", " + f.labels.string());
  return load_graph(f.edges.string(), f.features.string(), f.labels.string());
}

inline double accuracy(const Tensor2& logits, const std::vector<int>& labels, const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t r : rows) {
    const auto z = logits.row(r);
    const auto pred = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    correct += static_cast<int>(pred) == labels[r];
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

inline double cross_entropy(const Tensor2& logits, const std::vector<int>& labels,
                            const std::vector<std::size_t>& rows) {
  double loss = 0.0;
  for (std::size_t r : rows) {
    const auto z = logits.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double x : z) s += std::exp(x - mx);
    loss += std::log(s) + mx - z[static_cast<std::size_t>(labels[r])];
  }
  return rows.empty() ? 0.0 : loss / static_cast<double>(rows.size());
}

struct TrainResult {
  double test_accuracy = 0.0;
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double seconds = 0.0;
  double mean_epoch_seconds = 0.0;
  ModelParams params;
};

/// Full-batch Adam on the train rows. After every epoch the model is scored
/// on the validation rows; the checkpoint with the best validation accuracy
/// (ties: lower validation loss) is kept. Training stops once `patience`
/// consecutive epochs fail to improve. Test rows are read only after
/// training, by the kept checkpoint.
inline TrainResult train_once(const Graph& g, const StructuralNeighborhood& nb, const ModelConfig& model_cfg,
                              const TrainConfig& cfg, const Split& split, std::uint64_t seed) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto train_rows = split.nodes(SplitTag::Train);
  const auto val_rows = split.nodes(SplitTag::Val);
  if (train_rows.empty() || val_rows.empty()) throw std::invalid_argument("train_once: empty train or val split");

  const GeomGcn model(g, nb, model_cfg);
  const SparseRows features = SparseRows::from_dense(g.features());
  ModelParams params = init_params(g.feature_dim(), g.num_classes(), model_cfg, seed);
  ModelParams best = params;
  AdamState adam;
  const AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  const CounterRng dropout_root = CounterRng(seed).fork(0xd20);

  TrainResult result;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_acc = -1.0;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Tape tape;
    const Var w1 = tape.leaf_ref(params.layer1(), true);
    const Var w2 = tape.leaf_ref(params.layer2(), true);
    const auto out = model.forward(tape, features, w1, w2, true, dropout_root.fork(epoch));
    const Var loss = masked_softmax_xent(tape, out.logits, g.labels(), train_rows);
    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value))
      throw std::runtime_error("train_once: loss diverged at epoch " + std::to_string(epoch));
    tape.backward(loss);
    const Tensor2 grads[] = {tape.grad(w1), tape.grad(w2)};
    adam_step(params.layers, grads, adam, adam_cfg, ModelParams::names);

    const auto [hidden, logits] = model.evaluate(params, features);
    const double val_acc = accuracy(logits, g.labels(), val_rows);
    const double val_loss = cross_entropy(logits, g.labels(), val_rows);
    result.epochs_run = epoch + 1;
    if (val_acc > best_val_acc || (val_acc == best_val_acc && val_loss < best_val_loss)) {
      best_val_acc = val_acc;
      best_val_loss = val_loss;
      best = params;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  const auto test_rows = split.nodes(SplitTag::Test);
  const auto [hidden, logits] = model.evaluate(best, features);
  result.test_accuracy = accuracy(logits, g.labels(), test_rows);
  result.best_val_accuracy = best_val_acc;
  result.params = std::move(best);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.mean_epoch_seconds = result.seconds / static_cast<double>(std::max<std::size_t>(1, result.epochs_run));
  return result;
}

struct RunReport {
  std::string dataset;
  std::string variant;
  std::string graph_embedding;
  std::string latent_embedding;
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracies;
  std::vector<std::size_t> epochs;
  double mean = 0.0;
  double std = 0.0;
  double rho = 0.0;
  double beta = 0.0;
  double seconds = 0.0;
  double mean_epoch_seconds = 0.0;
  nlohmann::json config;

  nlohmann::json to_json() const {
    return {{"dataset", dataset},
            {"variant", variant},
            {"graph_embedding", graph_embedding},
            {"latent_embedding", latent_embedding},
            {"seeds", seeds},
            {"accuracies", accuracies},
            {"mean", mean},
            {"std", std},
            {"rho", rho},
            {"beta", beta},
            {"epochs", epochs},
            {"seconds", seconds},
            {"mean_epoch_seconds", mean_epoch_seconds},
            {"config", config}};
  }
};

inline nlohmann::json config_json(const ModelConfig& m, const TrainConfig& t) {
  return {{"variant", to_string(m.variant)}, {"hidden_units", m.hidden_units}, {"dropout", m.dropout},
          {"norm_exponent", m.norm_exponent}, {"lr", t.lr},                    {"weight_decay", t.weight_decay},
          {"patience", t.patience},         {"max_epochs", t.max_epochs},      {"seeds", t.seeds}};
}

/// One train_once per seed (split seed = training seed), aggregated as mean
/// and population standard deviation in percent.
inline RunReport benchmark(const Graph& g, const StructuralNeighborhood& nb, const ModelConfig& model_cfg,
                           const TrainConfig& cfg, const std::string& dataset_name) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  RunReport rep;
  rep.dataset = dataset_name;
  rep.variant = to_string(model_cfg.variant);
  rep.seeds = cfg.seeds;
  rep.rho = nb.rho;
  rep.beta = homophily_beta(g);
  rep.config = config_json(model_cfg, cfg);

  auto run = [&](std::uint64_t seed) { return train_once(g, nb, model_cfg, cfg, random_split(g, seed), seed); };
  std::vector<TrainResult> results(cfg.seeds.size());
  if (cfg.threads <= 1) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) results[i] = run(cfg.seeds[i]);
  } else {
    for (std::size_t begin = 0; begin < cfg.seeds.size(); begin += cfg.threads) {
      std::vector<std::future<TrainResult>> jobs;
      const std::size_t end = std::min(cfg.seeds.size(), begin + cfg.threads);
      for (std::size_t i = begin; i < end; ++i) jobs.push_back(std::async(std::launch::async, run, cfg.seeds[i]));
      for (std::size_t i = begin; i < end; ++i) results[i] = jobs[i - begin].get();
    }
  }
  double epoch_seconds = 0.0;
  for (const auto& r : results) {
    rep.accuracies.push_back(100.0 * r.test_accuracy);
    rep.epochs.push_back(r.best_epoch);
    epoch_seconds += r.mean_epoch_seconds;
  }
  const double n = static_cast<double>(results.size());
  rep.mean = std::accumulate(rep.accuracies.begin(), rep.accuracies.end(), 0.0) / n;
  double var = 0.0;
  for (double a : rep.accuracies) var += (a - rep.mean) * (a - rep.mean);
  rep.std = std::sqrt(var / n);
  rep.mean_epoch_seconds = epoch_seconds / n;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

struct AblationRow {
  std::string name;
  double mean = 0.0;
  double delta_vs_gcn = 0.0;
  double beta = 0.0;
};

inline std::string short_method(EmbedMethod m) {
  switch (m) {
    case EmbedMethod::Isomap: return "I";
    case EmbedMethod::Poincare: return "P";
    case EmbedMethod::Struc2vec: return "S";
  }
  return "?";
}

/// GCN baseline plus g-only and s-only variants for every supplied
/// embedding; deltas are relative to the baseline mean.
inline std::vector<AblationRow> ablation_suite(const Graph& g, const std::vector<Embedding>& embeddings,
                                               const TrainConfig& cfg, std::size_t gcn_hidden,
                                               const NeighborhoodOptions& nb_opt = {}, double norm_exponent = -0.5,
                                               std::vector<RunReport>* reports = nullptr) {
  const double beta = homophily_beta(g);
  std::vector<AblationRow> rows;
  ModelConfig base;
  base.norm_exponent = norm_exponent;
  base.variant = Variant::GcnBaseline;
  base.hidden_units = default_hidden_units(Variant::GcnBaseline, gcn_hidden);
  const auto gcn = benchmark(g, graph_only_neighborhood(g, nb_opt.self_loop), base, cfg, "ablation");
  rows.push_back({"GCN", gcn.mean, 0.0, beta});
  if (reports) reports->push_back(gcn);
  for (const auto& emb : embeddings) {
    const auto nb = build_neighborhood(g, emb, nb_opt);
    for (Variant v : {Variant::GraphOnly, Variant::LatentOnly}) {
      ModelConfig mc = base;
      mc.variant = v;
      mc.hidden_units = default_hidden_units(v, gcn_hidden);
      auto rep = benchmark(g, nb, mc, cfg, "ablation");
      rep.graph_embedding = rep.latent_embedding = to_string(emb.method);
      const std::string name =
          "Geom-GCN-" + short_method(emb.method) + (v == Variant::GraphOnly ? "-g" : "-s");
      rows.push_back({name, rep.mean, rep.mean - gcn.mean, beta});
      if (reports) reports->push_back(std::move(rep));
    }
  }
  return rows;
}

inline void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant\tmean_accuracy\tdelta_vs_gcn\tbeta\n" << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    out << r.name << '\t' << r.mean << '\t' << (r.delta_vs_gcn >= 0 ? "up " : "down ") << std::abs(r.delta_vs_gcn)
        << '\t' << r.beta << '\n';
  }
  out.unsetf(std::ios::fixed);
}

struct CaseStudyResult {
  bool merged_identical = false;
  bool partitioned_distinct = false;
  std::vector<double> merged_first, merged_second;
  std::vector<double> partitioned_first, partitioned_second;
};

/// Mean of h over the bucket (v, vn); empty buckets give zeros.
inline std::vector<double> mean_aggregate(const Tensor2& h, const Graph& g, const StructuralNeighborhood& nb,
                                          std::size_t v, const VirtualNode& vn) {
  std::vector<double> out(h.cols(), 0.0);
  const auto members = detail::bucket_members(g, nb, v, vn);
  for (NodeId u : members)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += h(u, j);
  if (!members.empty())
    for (double& x : out) x /= static_cast<double>(members.size());
  return out;
}

struct PlacedGraph {
  Graph graph;
  Embedding layout;
};

/// The two example graphs: node 0 (V1) is the center. In the first graph
/// its neighbors sit directly above and below it; in the second, one sits
/// above and two below-left and below-right. All features are equal.
inline std::pair<PlacedGraph, PlacedGraph> case_study_graphs() {
  auto make = [](std::size_t n, std::vector<std::pair<NodeId, NodeId>> edges, Tensor2 pos) {
    Tensor2 feats(n, 3, 1.0);
    PlacedGraph pg{Graph::build(n, edges, std::move(feats), std::vector<int>(n, 0)), {}};
    pg.layout.coords = std::move(pos);
    return pg;
  };
  // Node 3 / node 4 hangs off the upper neighbor so the two graphs differ beyond V1.
  auto first = make(4, {{0, 1}, {0, 2}, {1, 3}}, Tensor2{{0, 0}, {0, 1}, {0, -1}, {1, 1}});
  auto second = make(5, {{0, 1}, {0, 2}, {0, 3}, {1, 4}}, Tensor2{{0, 0}, {0, 1}, {-1, -1}, {1, -1}, {1, 1}});
  return {std::move(first), std::move(second)};
}

/// Compares V1's representation in two graphs under (a) one mean over all
/// graph neighbors and (b) per-relation means concatenated in virtual-node
/// order.
inline CaseStudyResult case_study(const PlacedGraph& a, const PlacedGraph& b) {
  auto represent = [](const PlacedGraph& pg, std::vector<double>& merged, std::vector<double>& partitioned) {
    const auto nb = build_neighborhood(pg.graph, pg.layout);
    merged = mean_aggregate(pg.graph.features(), pg.graph, nb, 0, VirtualNode{NeighborhoodType::Graph, {}, true});
    partitioned.clear();
    for (const auto& vn : virtual_nodes(Variant::GraphOnly)) {
      const auto e = mean_aggregate(pg.graph.features(), pg.graph, nb, 0, vn);
      partitioned.insert(partitioned.end(), e.begin(), e.end());
    }
  };
  CaseStudyResult r;
  represent(a, r.merged_first, r.partitioned_first);
  represent(b, r.merged_second, r.partitioned_second);
  auto close = [](const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::abs(x[i] - y[i]) > 1e-12) return false;
    return true;
  };
  r.merged_identical = close(r.merged_first, r.merged_second);
  r.partitioned_distinct = !close(r.partitioned_first, r.partitioned_second);
  return r;
}

inline CaseStudyResult case_study_default() {
  const auto [a, b] = case_study_graphs();
  return case_study(a, b);
}

enum class FeatureLayer { Hidden, Logits };

/// Writes one row per node: the layer's activations followed by the label.
inline void export_features(std::ostream& out, const Graph& g, const StructuralNeighborhood& nb,
                            const ModelParams& params, FeatureLayer layer) {
  const GeomGcn model(g, nb, params.config);
  const auto [hidden, logits] = model.evaluate(params, g.features());
  const Tensor2& m = layer == FeatureLayer::Hidden ? hidden : logits;
  out << std::setprecision(17);
  for (std::size_t v = 0; v < m.rows(); ++v) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << m(v, c) << ' ';
    out << g.labels()[v] << '\n';
  }
}

}  // namespace geomgcn
