// Copyright 2026 The PhaseFort Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment configuration: a sectioned `key = value` file, e.g.
//
//   [run]
//   seed = 7
//   output = runs/lenet
//
//   [train]
//   epochs = 10
//   lambda_adv = 1
//
// Unknown sections or keys are errors. `echo()` writes every key back out
// and parses into an equal config.

#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phasefort/attack.hpp"
#include "phasefort/network.hpp"

namespace phasefort {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ExperimentConfig {
  // [run]
  std::uint64_t seed = 1;
  std::string output = "runs/default";
  std::size_t threads = 1;

  // [model]
  std::string arch = "lenet";
  Variant variant = Variant::complex;
  double gamma = 0.0;
  std::vector<double> gamma_presets = {0.2, 0.5, 1.0};
  DeltaMode delta_mode = DeltaMode::channelwise;
  double delta_c = 1.0;
  double dropout = 0.0;

  // [data]
  std::string dataset = "synth";  // synth | cifar
  std::string data_path;
  std::size_t train_size = 1000;
  std::size_t test_size = 300;
  std::size_t classes = 10;
  std::size_t image_size = 32;
  std::uint64_t data_seed = 2026;  // synthetic data only; independent of run.seed

  // [train]
  TrainOptions train;

  // [attack]
  Strategy strategy = Strategy::direct;
  std::size_t attack_epochs = 10;
  std::size_t attack_batch = 32;
  double attack_lr = 1e-3;
  std::size_t decoder_width = 16;
  std::size_t decoder_levels = 4;
  std::size_t grid = 64;
  bool refine = true;
  std::size_t repeats = 1;
  std::size_t critic_epochs = 5;
  double critic_lr = 1e-3;
  double critic_clip = 0.05;

  bool operator==(const ExperimentConfig&) const = default;

  BuildOptions build_options() const {
    BuildOptions o;
    o.classes = classes;
    o.input_shape = {3, image_size, image_size};
    o.lenet_delta = delta_mode;
    o.delta_c = delta_c;
    o.phi_dropout = dropout;
    return o;
  }

  AttackOptions attack_options() const {
    AttackOptions o;
    o.strategy = strategy;
    o.decoder = {decoder_width, decoder_levels, 3, image_size};
    o.fit = {attack_epochs, attack_batch, attack_lr};
    o.critic = {critic_epochs, attack_batch, critic_lr, critic_clip};
    o.grid = grid;
    o.refine = refine;
    o.repeats = repeats;
    return o;
  }
};

namespace config_detail {

inline std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const std::string t = trim(v);
  auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const std::string t = trim(v);
  auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define PF_SIZE(KEY, MEMBER)                                                                              \
  {                                                                                                       \
    KEY, {                                                                                                \
      [](ExperimentConfig& c, const std::string& v) { c.MEMBER = static_cast<std::size_t>(to_u64(KEY, v)); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }                              \
    }                                                                                                     \
  }
#define PF_REAL(KEY, MEMBER)                                                               \
  {                                                                                        \
    KEY, {                                                                                 \
      [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); },     \
          [](const ExperimentConfig& c) { return fmt(c.MEMBER); }                          \
    }                                                                                      \
  }

// Ordered: the echo lists sections and keys in this order.
inline const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> kFields = {
      {"run.seed",
       {[](ExperimentConfig& c, const std::string& v) { c.seed = to_u64("run.seed", v); },
        [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
      {"run.output",
       {[](ExperimentConfig& c, const std::string& v) { c.output = trim(v); },
        [](const ExperimentConfig& c) { return c.output; }}},
      PF_SIZE("run.threads", threads),
      {"model.arch",
       {[](ExperimentConfig& c, const std::string& v) {
          parse_arch(trim(v));
          c.arch = trim(v);
        },
        [](const ExperimentConfig& c) { return c.arch; }}},
      {"model.variant",
       {[](ExperimentConfig& c, const std::string& v) { c.variant = parse_variant(trim(v)); },
        [](const ExperimentConfig& c) { return to_string(c.variant); }}},
      PF_REAL("model.gamma", gamma),
      {"model.gamma_presets",
       {[](ExperimentConfig& c, const std::string& v) {
          c.gamma_presets.clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) c.gamma_presets.push_back(to_double("model.gamma_presets", item));
        },
        [](const ExperimentConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.gamma_presets.size(); ++i) s += (i ? ", " : "") + fmt(c.gamma_presets[i]);
          return s;
        }}},
      {"model.delta",
       {[](ExperimentConfig& c, const std::string& v) {
          const std::string t = trim(v);
          if (t == "channelwise") c.delta_mode = DeltaMode::channelwise;
          else if (t == "fixed") c.delta_mode = DeltaMode::fixed_c;
          else throw ConfigError("model.delta: expected channelwise or fixed, got '" + v + "'");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.delta_mode == DeltaMode::channelwise ? "channelwise" : "fixed");
        }}},
      PF_REAL("model.delta_c", delta_c),
      PF_REAL("model.dropout", dropout),
      {"data.dataset",
       {[](ExperimentConfig& c, const std::string& v) {
          const std::string t = trim(v);
          if (t != "synth" && t != "cifar") throw ConfigError("data.dataset: expected synth or cifar, got '" + v + "'");
          c.dataset = t;
        },
        [](const ExperimentConfig& c) { return c.dataset; }}},
      {"data.path",
       {[](ExperimentConfig& c, const std::string& v) { c.data_path = trim(v); },
        [](const ExperimentConfig& c) { return c.data_path; }}},
      PF_SIZE("data.train_size", train_size),
      PF_SIZE("data.test_size", test_size),
      PF_SIZE("data.classes", classes),
      PF_SIZE("data.image_size", image_size),
      {"data.seed",
       {[](ExperimentConfig& c, const std::string& v) { c.data_seed = to_u64("data.seed", v); },
        [](const ExperimentConfig& c) { return std::to_string(c.data_seed); }}},
      PF_SIZE("train.epochs", train.epochs),
      PF_SIZE("train.batch_size", train.batch_size),
      PF_SIZE("train.k", train.k),
      PF_REAL("train.min_offset", train.theta_min),
      PF_REAL("train.lambda_adv", train.lambda_adv),
      PF_SIZE("train.n_critic", train.n_critic),
      PF_REAL("train.c_clip", train.c_clip),
      PF_REAL("train.critic_lr", train.critic_lr),
      {"train.optimizer",
       {[](ExperimentConfig& c, const std::string& v) { c.train.optimizer = parse_optimizer(trim(v)); },
        [](const ExperimentConfig& c) { return to_string(c.train.optimizer); }}},
      PF_REAL("train.lr", train.lr),
      PF_REAL("train.momentum", train.momentum),
      {"attack.strategy",
       {[](ExperimentConfig& c, const std::string& v) { c.strategy = parse_strategy(trim(v)); },
        [](const ExperimentConfig& c) { return std::to_string(strategy_number(c.strategy)); }}},
      PF_SIZE("attack.epochs", attack_epochs),
      PF_SIZE("attack.batch_size", attack_batch),
      PF_REAL("attack.lr", attack_lr),
      PF_SIZE("attack.decoder_width", decoder_width),
      PF_SIZE("attack.decoder_levels", decoder_levels),
      PF_SIZE("attack.grid", grid),
      {"attack.refine",
       {[](ExperimentConfig& c, const std::string& v) { c.refine = to_bool("attack.refine", v); },
        [](const ExperimentConfig& c) { return std::string(c.refine ? "true" : "false"); }}},
      PF_SIZE("attack.repeats", repeats),
      PF_SIZE("attack.critic_epochs", critic_epochs),
      PF_REAL("attack.critic_lr", critic_lr),
      PF_REAL("attack.critic_clip", critic_clip),
  };
  return kFields;
}

#undef PF_SIZE
#undef PF_REAL

inline const Field* find(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return &f;
  return nullptr;
}

}  // namespace config_detail

/// Sets one `section.key`; unknown keys and malformed values throw.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const auto* f = config_detail::find(key);
  if (!f) throw ConfigError("unknown configuration key '" + key + "'");
  try {
    f->set(c, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

inline std::string get_config_value(const ExperimentConfig& c, const std::string& key) {
  const auto* f = config_detail::find(key);
  if (!f) throw ConfigError("unknown configuration key '" + key + "'");
  return f->get(c);
}

/// Cross-field checks.
inline void validate(const ExperimentConfig& c) {
  if (c.train.batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  if (c.train.k < 2) throw ConfigError("train.k must be at least 2");
  if (c.train.lambda_adv < 0) throw ConfigError("train.lambda_adv must be non-negative");
  if (!(c.train.c_clip > 0)) throw ConfigError("train.c_clip must be positive");
  if (!(c.train.lr > 0)) throw ConfigError("train.lr must be positive");
  if (c.gamma < 0) throw ConfigError("model.gamma must be non-negative");
  for (double g : c.gamma_presets)
    if (g < 0) throw ConfigError("model.gamma_presets must be non-negative");
  if (!(c.delta_c > 0)) throw ConfigError("model.delta_c must be positive");
  if (c.dropout < 0 || c.dropout >= 1) throw ConfigError("model.dropout must lie in [0, 1)");
  if (c.classes < 2) throw ConfigError("data.classes must be at least 2");
  if (c.dataset == "cifar" && c.data_path.empty()) throw ConfigError("data.path is required for cifar");
  if (c.dataset == "cifar" && (c.classes != 10 || c.image_size != 32)) {
    throw ConfigError("cifar data has 10 classes of 32x32 images");
  }
  if (c.train_size < c.classes || c.test_size < 2) throw ConfigError("data sizes are too small");
  if (c.grid < 8) throw ConfigError("attack.grid must be at least 8");
  if (c.threads == 0) throw ConfigError("run.threads must be positive");
}

/// Parses INI text on top of the defaults.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      if (!body.data().empty()) throw ConfigError("config: key '" + section + "' outside any section");
      continue;  // empty section
    }
    for (const auto& [key, value] : body) set_config_value(base, section + "." + key, value.data());
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

/// Every key, grouped by section, in a fixed order.
inline std::string echo(const ExperimentConfig& c) {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, f] : config_detail::fields()) {
    const std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(key.find('.') + 1) << " = " << f.get(c) << '\n';
  }
  return out.str();
}

/// PHASEFORT_SEED, when set, supplies the seed if neither the file nor the
/// command line did.
inline std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("PHASEFORT_SEED");
  if (!v || !*v) return std::nullopt;
  return config_detail::to_u64("PHASEFORT_SEED", v);
}

}  // namespace phasefort
