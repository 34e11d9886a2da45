#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tmr/model.hpp"

namespace tmr {

struct SchedulerState {
  double best = 0.0;
  std::uint64_t stagnation = 0;
  double lr_scale = 1.0;
  bool has_best = false;
};

// Everything needed to reproduce the remaining training trajectory
// bit-exactly: parameters, optimizer velocity, scheduler state, and the
// training random stream.
struct Checkpoint {
  std::uint32_t stage = 1;
  std::uint64_t iteration = 0;
  std::uint64_t master_seed = 0;
  ModelConfig model_cfg;
  ModelParams params;
  // One velocity buffer per parameter, in collect_params order.
  std::vector<std::vector<double>> velocity;
  SchedulerState sched;
  std::string rng_state;
};

// Deep copy: detaches all tensors from whatever graph or optimizer is
// currently holding them.
ModelParams clone_params(const ModelConfig& cfg, const ModelParams& params);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tmr
