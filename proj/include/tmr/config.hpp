#pragma once

#include <filesystem>
#include <string>

#include "tmr/model.hpp"
#include "tmr/synth.hpp"
#include "tmr/train.hpp"

namespace tmr {

struct DataConfig {
  std::size_t n_train = 8;
  std::size_t n_val = 2;
  std::size_t n_test = 6;
};

// One experiment end to end: schema, data split, model dims and ablation
// axes, training hyperparameters, evaluation options. Round-trips through
// JSON losslessly.
struct ExperimentConfig {
  std::uint32_t version = 1;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  WorkflowSchema schema;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  std::size_t smooth_window = 1;  // odd; 1 disables smoothing

  // Spec desk profile: d=64, batch 16, 800 total iterations.
  static ExperimentConfig desk();
  // Reduced-cost profile used by the ablation sweeps and the acceptance
  // suite: d=32, batch 8, 830 total iterations.
  static ExperimentConfig quick();

  void validate() const;
};

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// Output root override: paths resolve under $TMR_OUT_ROOT when it is set
// and out_dir is relative.
std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg);

}  // namespace tmr
