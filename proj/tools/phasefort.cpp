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

// phasefort — train, attack and audit phase-hidden feature pipelines.
//
// Settings resolve as: command-line flag > --set > config file >
// PHASEFORT_SEED (seed only) > built-in default.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "phasefort/experiment.hpp"

namespace pf = phasefort;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::size_t> threads;
  std::optional<std::string> arch;
  std::optional<std::size_t> epochs;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "INI configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "Override a key, e.g. --set train.lr=0.005 (repeatable)");
  app->add_option("--seed", c.seed, "Run seed");
  app->add_option("-o,--output", c.output, "Run directory");
  app->add_option("--threads", c.threads, "Worker threads (kernels currently run on one)");
  app->add_option("--arch", c.arch, "lenet | resnet{20,32,44,56,110}-{alpha,beta}");
  app->add_option("--epochs", c.epochs, "Training epochs");
}

pf::ExperimentConfig resolve(const Common& c) {
  pf::ExperimentConfig cfg;
  if (auto s = pf::seed_from_env()) cfg.seed = *s;
  if (!c.config_path.empty()) cfg = pf::load_config(c.config_path, cfg);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw pf::ConfigError("--set expects key=value, got '" + kv + "'");
    pf::set_config_value(cfg, pf::config_detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.output) cfg.output = *c.output;
  if (c.threads) cfg.threads = *c.threads;
  if (c.arch) pf::set_config_value(cfg, "model.arch", *c.arch);
  if (c.epochs) cfg.train.epochs = *c.epochs;
  pf::validate(cfg);
  return cfg;
}

int cmd_train(const pf::ExperimentConfig& cfg) {
  std::cout << "training " << cfg.arch << " (" << pf::to_string(cfg.variant) << ") for " << cfg.train.epochs
            << " epochs into " << cfg.output << '\n';
  const auto data = pf::load_data(cfg);
  const auto m = pf::train_run(cfg, data, cfg.output, &std::cout);
  std::cout << "steps " << m.steps << "  test error " << m.test_error << "%\n"
            << "checkpoint " << (std::filesystem::path(cfg.output) / "checkpoint.pfck").string() << '\n';
  return 0;
}

int cmd_eval(const pf::ExperimentConfig& cfg, const std::string& checkpoint) {
  const auto loaded = pf::load_checkpoint<pf::Real>(checkpoint);
  const auto data = pf::load_data(cfg);
  pf::Rng rng(pf::eval_seed(cfg));
  const double err = pf::evaluate_error(*loaded.net, data.test, rng);
  const std::string victim = pf::victim_name(loaded.net->division());
  pf::write_text(std::filesystem::path(cfg.output) / "eval.csv", pf::eval_csv(victim, err));
  std::cout << victim << "  classification error " << err << "% on " << data.test.size() << " images\n";
  return 0;
}

int cmd_attack(const pf::ExperimentConfig& cfg, const std::string& checkpoint, std::size_t rows) {
  const auto data = pf::load_data(cfg);
  const auto run = pf::attack_run(cfg, checkpoint, data, cfg.output, rows);
  std::cout << run.report.summary() << '\n';
  if (rows > 0) std::cout << "wrote " << (std::filesystem::path(cfg.output) / "recon.ppm").string() << '\n';
  return 0;
}

int cmd_check(const pf::ExperimentConfig& cfg, const std::string& checkpoint, std::size_t trials) {
  std::unique_ptr<pf::Network<pf::Real>> fresh;
  const pf::Network<pf::Real>* net = nullptr;
  pf::LoadedCheckpoint<pf::Real> loaded;
  if (checkpoint.empty()) {
    fresh = std::make_unique<pf::Network<pf::Real>>(pf::division_for(cfg), pf::model_seed(cfg));
    net = fresh.get();
  } else {
    loaded = pf::load_checkpoint<pf::Real>(checkpoint);
    net = loaded.net.get();
  }
  if (!net->division().complex_phi()) {
    std::cerr << "error: " << pf::victim_name(net->division()) << " has no complex stage to audit\n";
    return 2;
  }
  constexpr double kTol = 1e-5;  // single precision
  pf::Rng rng(pf::derive_seed(cfg.seed, 0x657175));
  pf::Shape shape = net->division().feature_shape();
  shape.insert(shape.begin(), 2);
  const auto r = pf::certify_equivariance(net->phi(), shape, trials, kTol, rng);
  std::cout << net->division().arch << "  trials " << r.trials << "  max relative residual " << r.max_residual
            << "  " << (r.pass ? "PASS" : "FAIL") << '\n';
  return r.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-hidden feature pipelines: training, inversion attacks and audits"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Common common;
  std::string checkpoint;
  std::string strategy;
  std::string variant = "original";
  std::optional<double> gamma, lambda;
  std::size_t rows = 8, trials = 100;

  auto* train = app.add_subcommand("train", "Adversarially train the complex pipeline");
  add_common(train, common);
  train->add_option("--lambda", lambda, "Weight of the adversarial term");

  auto* baseline = app.add_subcommand("train-baseline", "Train a real-valued baseline");
  add_common(baseline, common);
  baseline->add_option("--variant", variant, "original | additional_layers | noisy")->capture_default_str();
  baseline->add_option("--gamma", gamma, "Noise level for the noisy variant");

  auto* attack = app.add_subcommand("attack", "Attack a frozen checkpoint and write an AttackReport");
  add_common(attack, common);
  attack->add_option("--checkpoint", checkpoint, "Checkpoint to attack")->required();
  attack->add_option("--strategy", strategy, "1 (phase search) or 2 (direct decoder)");

  auto* eval = app.add_subcommand("eval", "Report test classification error of a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();

  auto* check = app.add_subcommand("check-equivariance", "Audit the complex stage of a checkpoint or fresh build");
  add_common(check, common);
  check->add_option("--checkpoint", checkpoint, "Checkpoint to audit (default: fresh build of --arch)");
  check->add_option("--trials", trials, "Random (f, rotation) trials")->capture_default_str();

  auto* recon = app.add_subcommand("export-recon", "Attack a checkpoint and write a PPM comparison grid");
  add_common(recon, common);
  recon->add_option("--checkpoint", checkpoint, "Checkpoint to attack")->required();
  recon->add_option("--strategy", strategy, "1 (phase search) or 2 (direct decoder)");
  recon->add_option("--rows", rows, "Images in the grid")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    pf::ExperimentConfig cfg = resolve(common);
    if (!strategy.empty()) cfg.strategy = pf::parse_strategy(strategy);
    if (train->parsed()) {
      cfg.variant = pf::Variant::complex;
      if (lambda) cfg.train.lambda_adv = *lambda;
      pf::validate(cfg);
      return cmd_train(cfg);
    }
    if (baseline->parsed()) {
      cfg.variant = pf::parse_variant(variant);
      if (cfg.variant == pf::Variant::complex) throw pf::ConfigError("use 'train' for the complex pipeline");
      if (gamma) cfg.gamma = *gamma;
      pf::validate(cfg);
      return cmd_train(cfg);
    }
    if (attack->parsed()) return cmd_attack(cfg, checkpoint, 0);
    if (eval->parsed()) return cmd_eval(cfg, checkpoint);
    if (check->parsed()) return cmd_check(cfg, checkpoint, trials);
    if (recon->parsed()) return cmd_attack(cfg, checkpoint, rows);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
