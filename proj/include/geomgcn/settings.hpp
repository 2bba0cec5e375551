#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geomgcn/graph.hpp"
#include "geomgcn/harness.hpp"
#include "geomgcn/isomap.hpp"
#include "geomgcn/model.hpp"
#include "geomgcn/neighborhood.hpp"
#include "geomgcn/poincare.hpp"
#include "geomgcn/struc2vec.hpp"

namespace geomgcn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of the pipeline, settable by `key=value`.
struct Settings {
  TrainConfig train;
  /// Unset means: use the dataset preset.
  std::optional<double> weight_decay;
  /// 0 means: virtual node count times the dataset's GCN width.
  std::size_t hidden_units = 0;
  double dropout = 0.5;
  double norm_exponent = -0.5;
  std::size_t isomap_dim = 2;
  PoincareConfig poincare;
  Struc2vecConfig struc2vec;
  NeighborhoodOptions neighborhood;

  Settings() { set("seeds", "0,1,2,3,4,5,6,7,8,9"); }

  /// Throws ConfigError naming the key when it is unknown or the value does
  /// not parse.
  void set(std::string_view key, std::string_view value) {
    const auto& table = fields();
    const auto it = table.find(std::string(key));
    if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    try {
      it->second.set(*this, detail::trim(value));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("bad value '" + std::string(value) + "' for config key '" + std::string(key) + "': " + e.what());
    }
  }

  std::string get(const std::string& key) const {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second.get(*this);
  }

  /// `key=value` lines; '#' starts a comment line.
  void load_file(const std::string& path) {
    const auto lines = detail::read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto t = detail::trim(lines[i]);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) throw ParseError(path, i + 1, "expected key=value");
      try {
        set(detail::trim(t.substr(0, eq)), t.substr(eq + 1));
      } catch (const ConfigError& e) {
        throw ConfigError(path + ":" + std::to_string(i + 1) + ": " + e.what());
      }
    }
  }

  /// Resolved configuration, one `key=value` per entry, sorted by key.
  std::vector<std::string> lines() const {
    std::vector<std::string> out;
    for (const auto& [k, f] : fields()) out.push_back(k + "=" + f.get(*this));
    return out;
  }

  double resolved_weight_decay(const std::string& dataset) const {
    if (weight_decay) return *weight_decay;
    const auto p = find_preset(dataset);
    return p ? p->weight_decay : 5e-5;
  }
  std::size_t resolved_hidden(const std::string& dataset, Variant v) const {
    if (hidden_units) return hidden_units;
    const auto p = find_preset(dataset);
    return default_hidden_units(v, p ? p->gcn_hidden : 16);
  }

 private:
  struct Field {
    std::function<void(Settings&, std::string_view)> set;
    std::function<std::string(const Settings&)> get;
  };

  template <class T>
  static T parse(std::string_view s) {
    if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1") return true;
      if (s == "false" || s == "0") return false;
      throw std::invalid_argument("expected true|false");
    } else {
      T v{};
      if (!detail::parse_number(s, v)) throw std::invalid_argument("not a number");
      return v;
    }
  }

  template <class T>
  static std::string show(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else {
      // Shortest text that parses back to the same value.
      char buf[64];
      const auto r = std::to_chars(buf, buf + sizeof buf, v);
      return std::string(buf, r.ptr);
    }
  }

  template <class T>
  static Field field(T Settings::*member) {
    return {[member](Settings& s, std::string_view v) { s.*member = parse<T>(v); },
            [member](const Settings& s) { return show(s.*member); }};
  }
  template <class Sub, class T>
  static Field field(Sub Settings::*sub, T Sub::*member) {
    return {[sub, member](Settings& s, std::string_view v) { (s.*sub).*member = parse<T>(v); },
            [sub, member](const Settings& s) { return show((s.*sub).*member); }};
  }

  static const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
      std::map<std::string, Field> t;
      t["lr"] = field(&Settings::train, &TrainConfig::lr);
      t["patience"] = field(&Settings::train, &TrainConfig::patience);
      t["max_epochs"] = field(&Settings::train, &TrainConfig::max_epochs);
      t["threads"] = field(&Settings::train, &TrainConfig::threads);
      t["seeds"] = {[](Settings& s, std::string_view v) { s.train.seeds = parse_seed_list(v); },
                    [](const Settings& s) {
                      std::string out;
                      for (auto x : s.train.seeds) out += (out.empty() ? "" : ",") + std::to_string(x);
                      return out;
                    }};
      t["weight_decay"] = {[](Settings& s, std::string_view v) {
                             if (v == "preset") s.weight_decay.reset();
                             else s.weight_decay = parse<double>(v);
                           },
                           [](const Settings& s) { return s.weight_decay ? show(*s.weight_decay) : "preset"; }};
      t["hidden_units"] = field(&Settings::hidden_units);
      t["dropout"] = field(&Settings::dropout);
      t["norm_exponent"] = field(&Settings::norm_exponent);
      t["isomap.dim"] = field(&Settings::isomap_dim);
      t["poincare.dim"] = field(&Settings::poincare, &PoincareConfig::dim);
      t["poincare.epochs"] = field(&Settings::poincare, &PoincareConfig::epochs);
      t["poincare.learning_rate"] = field(&Settings::poincare, &PoincareConfig::learning_rate);
      t["poincare.burn_in_epochs"] = field(&Settings::poincare, &PoincareConfig::burn_in_epochs);
      t["poincare.burn_in_lr_factor"] = field(&Settings::poincare, &PoincareConfig::burn_in_lr_factor);
      t["poincare.negatives"] = field(&Settings::poincare, &PoincareConfig::negatives_per_positive);
      t["poincare.seed"] = field(&Settings::poincare, &PoincareConfig::seed);
      t["struc2vec.max_layer"] = field(&Settings::struc2vec, &Struc2vecConfig::max_layer);
      t["struc2vec.walks_per_node"] = field(&Settings::struc2vec, &Struc2vecConfig::walks_per_node);
      t["struc2vec.walk_length"] = field(&Settings::struc2vec, &Struc2vecConfig::walk_length);
      t["struc2vec.window"] = field(&Settings::struc2vec, &Struc2vecConfig::window);
      t["struc2vec.negatives"] = field(&Settings::struc2vec, &Struc2vecConfig::negatives);
      t["struc2vec.sg_epochs"] = field(&Settings::struc2vec, &Struc2vecConfig::sg_epochs);
      t["struc2vec.sg_lr"] = field(&Settings::struc2vec, &Struc2vecConfig::sg_lr);
      t["struc2vec.dim"] = field(&Settings::struc2vec, &Struc2vecConfig::dim);
      t["struc2vec.stay_probability"] = field(&Settings::struc2vec, &Struc2vecConfig::stay_probability);
      t["struc2vec.max_partners"] = field(&Settings::struc2vec, &Struc2vecConfig::max_partners);
      t["struc2vec.seed"] = field(&Settings::struc2vec, &Struc2vecConfig::seed);
      t["self_loop"] = field(&Settings::neighborhood, &NeighborhoodOptions::self_loop);
      t["exact_hyperbolic_distance"] = field(&Settings::neighborhood, &NeighborhoodOptions::exact_hyperbolic_distance);
      t["rho.exact_max_nodes"] = field(&Settings::neighborhood, &NeighborhoodOptions::exact_rho_max_nodes);
      t["rho.sample_pairs"] = field(&Settings::neighborhood, &NeighborhoodOptions::rho_sample_pairs);
      t["rho.seed"] = field(&Settings::neighborhood, &NeighborhoodOptions::seed);
      return t;
    }();
    return table;
  }

 public:
  /// "0,1,2" or ranges "0-9".
  static std::vector<std::uint64_t> parse_seed_list(std::string_view v) {
    std::vector<std::uint64_t> out;
    std::size_t start = 0;
    while (start <= v.size()) {
      const auto comma = v.find(',', start);
      const auto item = detail::trim(v.substr(start, comma == std::string_view::npos ? v.size() - start : comma - start));
      if (item.empty()) throw std::invalid_argument("empty seed");
      const auto dash = item.find('-');
      if (dash == std::string_view::npos) {
        out.push_back(parse<std::uint64_t>(item));
      } else {
        const auto lo = parse<std::uint64_t>(item.substr(0, dash)), hi = parse<std::uint64_t>(item.substr(dash + 1));
        if (hi < lo) throw std::invalid_argument("descending seed range");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
      }
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }
};

}  // namespace geomgcn
