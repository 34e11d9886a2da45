#pragma once

#include <array>
#include <functional>
#include <optional>

#include "tmr/checkpoint.hpp"
#include "tmr/membank.hpp"
#include "tmr/model.hpp"
#include "tmr/synth.hpp"

namespace tmr {

struct TrainConfig {
  std::size_t batch_size = 40;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // Stage 1 trains the encoder and a clip-only head; the head rides the
  // recurrent-group rate.
  double lr1_frame = 5e-6;
  double lr1_recurrent = 5e-5;
  // Stages 2 and 3 drop the trained backbone rate and train the fresh parts
  // at a higher one.
  double lr23_backbone = 5e-7;
  double lr23_new = 5e-6;
  // Optional gentler rate for the conv kernels; 0 means lr23_new.
  double lr23_tvl = 0.0;
  std::array<std::size_t, 3> stage_iters{1500, 2000, 500};
  std::size_t eval_interval = 50;
  std::size_t patience = 3;
  double plateau_tol = 1e-4;
  std::size_t val_sample_count = 128;

  static TrainConfig paper();  // published hyperparameters
  static TrainConfig desk();   // 800 total iterations, rates scaled for small nets
  void validate() const;
};

// Divides the rate by 10 once no observed loss improves the best by more
// than `tol` for `patience` consecutive observations.
class PlateauScheduler {
 public:
  PlateauScheduler(std::size_t patience, double tol);
  bool observe(double val_loss);  // true when the scale just dropped
  double scale() const { return state_.lr_scale; }
  const SchedulerState& state() const { return state_; }
  void restore(const SchedulerState& s) { state_ = s; }

 private:
  std::size_t patience_;
  double tol_;
  SchedulerState state_;
};

struct TrainItem {
  std::size_t video = 0;
  std::size_t t = 0;
  int label = 0;
};

// Uniform over frames pooled across videos, so the sampled label histogram
// follows the dataset's frame-label distribution.
std::vector<TrainItem> sample_batch(const std::vector<LabeledSequence>& data,
                                    std::size_t batch_size, Rng& rng);

// v <- momentum * v + (grad + wd * param); param <- param - lr * v.
// One learning rate per group; throws NumericError naming the group on a
// non-finite gradient.
void sgd_step(ParamGroups& groups, std::vector<std::vector<double>>& velocity,
              std::span<const double> group_lrs, double momentum,
              double weight_decay);

struct TrainLogRecord {
  int stage = 0;
  std::uint64_t iteration = 0;
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> lrs;
  std::optional<double> val_loss;
};
using TrainLogSink = std::function<void(const TrainLogRecord&)>;

struct Stage1Result {
  Checkpoint ckpt;
  std::vector<MemoryBank> train_banks;
  std::vector<MemoryBank> val_banks;
};

// Stage 1: encoder plus clip-only head trained on clips alone, then frozen
// banks built offline from the trained encoder for every train and val video.
Stage1Result stage1_pretrain(const ModelConfig& cfg, const TrainConfig& tc,
                             const std::vector<LabeledSequence>& train,
                             const std::vector<LabeledSequence>& val,
                             std::uint64_t master_seed,
                             const TrainLogSink& log = {});

// Stage 2: the full model against frozen banks; backbone initialized from
// stage 1, bank-side parts drawn fresh; plateau-scheduled rates.
// Accepts a stage-1 checkpoint (fresh entry) or a stage-2 checkpoint (resume).
Checkpoint stage2_train(const ModelConfig& cfg, const TrainConfig& tc,
                        const Checkpoint& from,
                        const std::vector<MemoryBank>& train_banks,
                        const std::vector<MemoryBank>& val_banks,
                        const std::vector<LabeledSequence>& train,
                        const std::vector<LabeledSequence>& val,
                        const TrainLogSink& log = {});

// Stage 3: the merged train+val set at constant stage-2 base rates.
Checkpoint stage3_finetune(const ModelConfig& cfg, const TrainConfig& tc,
                           const Checkpoint& from,
                           const std::vector<MemoryBank>& merged_banks,
                           const std::vector<LabeledSequence>& merged,
                           const TrainLogSink& log = {});

struct FullTrainResult {
  Checkpoint stage1, stage2, stage3;
  std::vector<MemoryBank> train_banks;
  std::vector<MemoryBank> val_banks;
};

FullTrainResult full_train(const ModelConfig& cfg, const TrainConfig& tc,
                           const Dataset& data, std::uint64_t master_seed,
                           const TrainLogSink& log = {});

// Mean eval-mode loss of the current parameters over fixed (video, t) items.
double validation_loss(const ModelConfig& cfg, const ModelParams& params,
                       const std::vector<LabeledSequence>& videos,
                       const std::vector<MemoryBank>& banks,
                       const std::vector<TrainItem>& items);

}  // namespace tmr
