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

// End-to-end runs shared by the command-line tool and the acceptance suite.
//
// A run directory holds:
//   config.ini         resolved configuration
//   train_log.csv      one row per optimiser step
//   checkpoint.pfck    weights + architecture
//   eval.csv           test classification error
//   attack_report.csv  one row per attack
//   recon.ppm          originals | reconstructions (export-recon)

#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <string>

#include "phasefort/adversarial.hpp"
#include "phasefort/attack.hpp"
#include "phasefort/checkpoint.hpp"
#include "phasefort/config.hpp"
#include "phasefort/data.hpp"
#include "phasefort/ppm.hpp"

namespace phasefort {

using Real = float;

struct DataSplit {
  Dataset train;
  Dataset test;
};

inline DataSplit load_data(const ExperimentConfig& c) {
  if (c.dataset == "cifar") {
    const std::filesystem::path root(c.data_path);
    const auto train_file = std::filesystem::is_directory(root) ? root / "data_batch_1.bin" : root;
    const auto test_file = std::filesystem::is_directory(root) ? root / "test_batch.bin" : root;
    return {load_cifar(train_file, "train").head(c.train_size), load_cifar(test_file, "test").head(c.test_size)};
  }
  // disjoint streams, so the test images are never training images
  return {synth_dataset(c.train_size, c.classes, c.image_size, derive_seed(c.data_seed, 1), "train"),
          synth_dataset(c.test_size, c.classes, c.image_size, derive_seed(c.data_seed, 2), "test")};
}

inline CheckpointHeader header_for(const ExperimentConfig& c, std::uint64_t step = 0) {
  CheckpointHeader h;
  h.arch = c.arch;
  h.variant = c.variant;
  h.gamma = c.variant == Variant::noisy ? c.gamma : 0.0;
  h.build = c.build_options();
  h.step = step;
  h.config = echo(c);
  return h;
}

inline NetworkDivision division_for(const ExperimentConfig& c) { return rebuild_division(header_for(c)); }

/// Weight initialisation and training draw from separate streams of run.seed.
inline std::uint64_t model_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 0x6d6f64); }
inline std::uint64_t train_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 0x74726e); }
inline std::uint64_t eval_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 0x65766c); }
inline std::uint64_t attack_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 0x61746b); }

struct TrainedModel {
  std::unique_ptr<Network<Real>> net;
  std::uint64_t steps = 0;
  double test_error = 0.0;
};

/// Trains the configured model. Training options are taken verbatim, except
/// that the adversarial term only exists for the complex variant.
inline TrainedModel train_model(const ExperimentConfig& c, const DataSplit& data, std::ostream* csv = nullptr,
                                std::ostream* log = nullptr) {
  validate(c);
  TrainedModel out;
  out.net = std::make_unique<Network<Real>>(division_for(c), model_seed(c));
  Trainer<Real> trainer(*out.net, c.train, train_seed(c));
  if (csv) *csv << "epoch,step,d_loss,g_loss,task_loss,total\n";
  for (std::size_t e = 0; e < c.train.epochs; ++e) {
    const AdvBatchLosses last = trainer.train_epoch(data.train, e, csv);
    if (log) *log << "epoch " << e + 1 << "/" << c.train.epochs << "  task " << last.task_loss << "  total "
                  << last.total << '\n';
  }
  out.steps = trainer.steps();
  Rng rng(eval_seed(c));
  out.test_error = evaluate_error(*out.net, data.test, rng);
  return out;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(f), {}};
}

inline std::string eval_csv(const std::string& victim, double error) {
  return "victim,classification_error\n" + victim + "," + config_detail::fmt(error) + "\n";
}

/// Trains and writes config.ini, train_log.csv, checkpoint.pfck and eval.csv
/// into `dir`.
inline TrainedModel train_run(const ExperimentConfig& c, const DataSplit& data, const std::filesystem::path& dir,
                              std::ostream* log = nullptr) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.ini", echo(c));
  std::ofstream csv(dir / "train_log.csv", std::ios::binary | std::ios::trunc);
  TrainedModel m = train_model(c, data, &csv, log);
  save_checkpoint(*m.net, header_for(c, m.steps), dir / "checkpoint.pfck");
  write_text(dir / "eval.csv", eval_csv(victim_name(m.net->division()), m.test_error));
  return m;
}

struct AttackRun {
  AttackReport report;
  Tensor<Real> reconstructions;  // test order
};

inline AttackRun attack_model(const ExperimentConfig& c, const Network<Real>& victim, const DataSplit& data) {
  AttackRun out;
  TrainedAttack<Real>* keep = nullptr;
  out.report = run_attack(victim, data.train, data.test, c.attack_options(), attack_seed(c), keep, &out.reconstructions);
  return out;
}

/// Loads a checkpoint, attacks it, writes attack_report.csv (and recon.ppm
/// when `grid_rows` > 0) into `dir`.
inline AttackRun attack_run(const ExperimentConfig& c, const std::filesystem::path& checkpoint,
                            const DataSplit& data, const std::filesystem::path& dir, std::size_t grid_rows = 0) {
  validate(c);
  const auto loaded = load_checkpoint<Real>(checkpoint);
  AttackRun r = attack_model(c, *loaded.net, data);
  std::filesystem::create_directories(dir);
  write_text(dir / "attack_report.csv", AttackReport::csv_header() + "\n" + r.report.csv_row() + "\n");
  if (grid_rows > 0) {
    write_ppm(dir / "recon.ppm", comparison_grid(data.test.images, r.reconstructions, grid_rows));
  }
  return r;
}

}  // namespace phasefort
