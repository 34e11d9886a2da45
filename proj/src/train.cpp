#include "tmr/train.hpp"

#include <cmath>

#include "tmr/encoder.hpp"
#include "tmr/errors.hpp"

namespace tmr {

namespace {

// Substream keys off the master seed.
constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kStage2InitStream = 12;
constexpr std::uint64_t kTrainStreamBase = 20;  // + stage id
constexpr std::uint64_t kValStreamBase = 30;    // + stage id

ModelConfig stage1_config(const ModelConfig& cfg) {
  ModelConfig c = cfg;
  c.mode = AblationMode::Sr;
  c.bank_len = 0;
  return c;
}

std::vector<double> group_base_lrs(const ParamGroups& groups, const TrainConfig& tc,
                                   int stage) {
  std::vector<double> lrs;
  lrs.reserve(groups.size());
  for (const auto& g : groups) {
    double lr = 0.0;
    if (stage == 1) {
      lr = g.name == "frame" ? tc.lr1_frame : tc.lr1_recurrent;
    } else if (g.name == "frame" || g.name == "recurrent") {
      lr = tc.lr23_backbone;
    } else if (g.name == "tvl" && tc.lr23_tvl > 0.0) {
      lr = tc.lr23_tvl;
    } else {
      lr = tc.lr23_new;
    }
    lrs.push_back(lr);
  }
  return lrs;
}

Tensor item_loss(const ModelConfig& cfg, const ModelParams& params,
                 const std::vector<LabeledSequence>& videos,
                 const std::vector<MemoryBank>* banks, const TrainItem& item,
                 RunMode mode, Rng& rng) {
  Tensor clip = clip_tensor(videos[item.video], item.t, cfg.clip_len);
  Tensor window;
  std::vector<std::uint8_t> mask;
  if (cfg.uses_bank()) {
    if (banks == nullptr || banks->size() <= item.video)
      throw ContractError("train: missing memory bank for video " +
                          std::to_string(item.video));
    BankWindow w = (*banks)[item.video].window(item.t, cfg.bank_len);
    window = w.to_tensor();
    mask = std::move(w.mask);
  }
  ForwardResult fr = model_forward(cfg, params, clip, window, mask, mode, rng);
  return cross_entropy(fr.logits, static_cast<std::size_t>(item.label));
}

struct FlatParams {
  std::vector<Tensor> tensors;
  std::vector<std::string> names;  // group.param for diagnostics
};

FlatParams flatten(const ParamGroups& groups) {
  FlatParams f;
  for (const auto& g : groups)
    for (const auto& p : g.params) {
      f.tensors.push_back(p.tensor);
      f.names.push_back(g.name + "." + p.name);
    }
  return f;
}

Checkpoint run_stage(int stage_id, const ModelConfig& cfg, const TrainConfig& tc,
                     Checkpoint state, const std::vector<LabeledSequence>& train_data,
                     const std::vector<MemoryBank>* train_banks,
                     const std::vector<LabeledSequence>* val_data,
                     const std::vector<MemoryBank>* val_banks, bool use_scheduler,
                     const TrainLogSink& log) {
  const std::size_t iters = tc.stage_iters[static_cast<std::size_t>(stage_id - 1)];
  if (train_data.empty()) throw ContractError("train: empty training set");

  Rng rng(0);
  rng.set_state_string(state.rng_state);

  ParamGroups groups = collect_params(cfg, state.params);
  FlatParams flat = flatten(groups);
  if (state.velocity.empty()) {
    for (const auto& t : flat.tensors) state.velocity.emplace_back(t.size(), 0.0);
  } else if (state.velocity.size() != flat.tensors.size()) {
    throw StateError("train: velocity buffers misaligned with parameters");
  }

  PlateauScheduler sched(tc.patience, tc.plateau_tol);
  sched.restore(state.sched);

  std::vector<double> base_lrs = group_base_lrs(groups, tc, stage_id);

  // Fixed validation items for the whole stage.
  std::vector<TrainItem> val_items;
  if (use_scheduler && val_data != nullptr && !val_data->empty()) {
    Rng vrng(derive_seed(state.master_seed, kValStreamBase + stage_id));
    val_items = sample_batch(*val_data, tc.val_sample_count, vrng);
  }

  for (std::uint64_t iter = state.iteration; iter < iters; ++iter) {
    std::vector<TrainItem> batch = sample_batch(train_data, tc.batch_size, rng);

    for (auto& t : flat.tensors) t.zero_grad();
    Tensor total;
    for (const TrainItem& item : batch) {
      Tensor li = item_loss(cfg, state.params, train_data, train_banks, item,
                            RunMode::Train, rng);
      total = total.defined() ? add(total, li) : li;
    }
    Tensor loss = scale(total, 1.0 / static_cast<double>(batch.size()));
    backward(loss);

    std::vector<double> lrs(base_lrs);
    for (double& lr : lrs) lr *= sched.scale();
    sgd_step(groups, state.velocity, lrs, tc.momentum, tc.weight_decay);

    TrainLogRecord rec;
    rec.stage = stage_id;
    rec.iteration = iter;
    rec.loss = loss.item();
    for (std::size_t g = 0; g < groups.size(); ++g)
      rec.lrs.emplace_back(groups[g].name, lrs[g]);

    if (!val_items.empty() && (iter + 1) % tc.eval_interval == 0) {
      static const std::vector<MemoryBank> kNoBanks;
      const double vl = validation_loss(cfg, state.params, *val_data,
                                        val_banks ? *val_banks : kNoBanks, val_items);
      rec.val_loss = vl;
      sched.observe(vl);
    }
    if (log) log(rec);
  }

  state.stage = static_cast<std::uint32_t>(stage_id);
  state.iteration = iters;
  state.rng_state = rng.state_string();
  state.sched = sched.state();
  return state;
}

}  // namespace

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig tc;
  tc.batch_size = 16;
  tc.stage_iters = {300, 400, 100};
  tc.lr1_frame = 2e-2;
  tc.lr1_recurrent = 2e-2;
  tc.lr23_backbone = 2e-3;
  tc.lr23_new = 2e-2;
  tc.lr23_tvl = 1e-2;
  return tc;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("train: momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("train: weight decay must be >= 0");
  for (double lr : {lr1_frame, lr1_recurrent, lr23_backbone, lr23_new})
    if (lr <= 0.0) throw ConfigError("train: learning rates must be positive");
  if (eval_interval < 1) throw ConfigError("train: eval interval must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (plateau_tol < 0.0) throw ConfigError("train: plateau tolerance must be >= 0");
  if (val_sample_count < 1) throw ConfigError("train: val sample count must be >= 1");
}

PlateauScheduler::PlateauScheduler(std::size_t patience, double tol)
    : patience_(patience), tol_(tol) {
  if (patience < 1) throw ConfigError("PlateauScheduler: patience must be >= 1");
}

bool PlateauScheduler::observe(double val_loss) {
  if (!state_.has_best || val_loss < state_.best - tol_) {
    state_.best = val_loss;
    state_.has_best = true;
    state_.stagnation = 0;
    return false;
  }
  ++state_.stagnation;
  if (state_.stagnation >= patience_) {
    state_.lr_scale /= 10.0;
    state_.stagnation = 0;
    return true;
  }
  return false;
}

std::vector<TrainItem> sample_batch(const std::vector<LabeledSequence>& data,
                                    std::size_t batch_size, Rng& rng) {
  if (data.empty()) throw ContractError("sample_batch: empty dataset");
  std::uint64_t total = 0;
  for (const auto& seq : data) total += seq.T;
  if (total == 0) throw ContractError("sample_batch: dataset has no frames");

  std::vector<TrainItem> batch;
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    std::uint64_t u = rng.integer(total);
    std::size_t video = 0;
    while (u >= data[video].T) {
      u -= data[video].T;
      ++video;
    }
    batch.push_back({video, static_cast<std::size_t>(u),
                     data[video].labels[static_cast<std::size_t>(u)]});
  }
  return batch;
}

void sgd_step(ParamGroups& groups, std::vector<std::vector<double>>& velocity,
              std::span<const double> group_lrs, double momentum,
              double weight_decay) {
  if (group_lrs.size() != groups.size())
    throw ContractError("sgd_step: one learning rate per group required");
  std::size_t flat = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (auto& p : groups[g].params) {
      if (flat >= velocity.size())
        throw StateError("sgd_step: velocity buffers misaligned with parameters");
      auto vals = p.tensor.mutable_values();
      std::vector<double>& v = velocity[flat];
      if (v.size() != vals.size())
        throw StateError("sgd_step: velocity size mismatch for " + groups[g].name + "." + p.name);
      const bool has_grad = p.tensor.has_grad();
      std::span<const double> grads;
      if (has_grad) grads = p.tensor.grad();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double gval = has_grad ? grads[i] : 0.0;
        if (!std::isfinite(gval))
          throw NumericError("sgd_step: non-finite gradient in group '" + groups[g].name +
                             "' (" + p.name + ")");
        v[i] = momentum * v[i] + (gval + weight_decay * vals[i]);
        vals[i] -= group_lrs[g] * v[i];
      }
      ++flat;
    }
  }
}

double validation_loss(const ModelConfig& cfg, const ModelParams& params,
                       const std::vector<LabeledSequence>& videos,
                       const std::vector<MemoryBank>& banks,
                       const std::vector<TrainItem>& items) {
  if (items.empty()) throw ContractError("validation_loss: no items");
  NoGradGuard guard;
  Rng dummy(0);
  double total = 0.0;
  for (const TrainItem& item : items) {
    Tensor li = item_loss(cfg, params, videos, banks.empty() ? nullptr : &banks, item,
                          RunMode::Eval, dummy);
    total += li.item();
  }
  return total / static_cast<double>(items.size());
}

Stage1Result stage1_pretrain(const ModelConfig& cfg, const TrainConfig& tc,
                             const std::vector<LabeledSequence>& train,
                             const std::vector<LabeledSequence>& val,
                             std::uint64_t master_seed, const TrainLogSink& log) {
  cfg.validate();
  tc.validate();
  const ModelConfig c1 = stage1_config(cfg);

  Checkpoint genesis;
  genesis.stage = 1;
  genesis.iteration = 0;
  genesis.master_seed = master_seed;
  genesis.model_cfg = c1;
  Rng init_rng(derive_seed(master_seed, kInitStream));
  genesis.params = init_model(c1, init_rng);
  genesis.rng_state = Rng(derive_seed(master_seed, kTrainStreamBase + 1)).state_string();

  Stage1Result out;
  out.ckpt = run_stage(1, c1, tc, std::move(genesis), train, nullptr, &val, nullptr,
                       /*use_scheduler=*/true, log);

  for (const auto& seq : train)
    out.train_banks.push_back(
        MemoryBank::build_offline(out.ckpt.params.encoder, seq, cfg.clip_len));
  for (const auto& seq : val)
    out.val_banks.push_back(
        MemoryBank::build_offline(out.ckpt.params.encoder, seq, cfg.clip_len));
  return out;
}

Checkpoint stage2_train(const ModelConfig& cfg, const TrainConfig& tc,
                        const Checkpoint& from,
                        const std::vector<MemoryBank>& train_banks,
                        const std::vector<MemoryBank>& val_banks,
                        const std::vector<LabeledSequence>& train,
                        const std::vector<LabeledSequence>& val,
                        const TrainLogSink& log) {
  cfg.validate();
  tc.validate();
  if (train_banks.size() != train.size() || val_banks.size() != val.size())
    throw ContractError("stage2_train: one frozen bank per video required");
  for (const auto& b : train_banks)
    if (!b.frozen()) throw StateError("stage2_train: training banks must be frozen");

  Checkpoint state;
  if (from.stage == 1) {
    state.stage = 2;
    state.iteration = 0;
    state.master_seed = from.master_seed;
    state.model_cfg = cfg;
    // carry the trained backbone, draw the bank-side parts fresh
    state.params.encoder = clone_params(from.model_cfg, from.params).encoder;
    if (cfg.uses_bank()) {
      Rng rng2(derive_seed(from.master_seed, kStage2InitStream));
      reinit_bank_parts(cfg, state.params, rng2);
    } else {
      state.params = clone_params(from.model_cfg, from.params);
    }
    state.rng_state =
        Rng(derive_seed(from.master_seed, kTrainStreamBase + 2)).state_string();
  } else if (from.stage == 2) {
    state = from;
    state.params = clone_params(cfg, from.params);
  } else {
    throw ContractError("stage2_train: expected a stage-1 or stage-2 checkpoint");
  }

  return run_stage(2, cfg, tc, std::move(state), train, &train_banks, &val, &val_banks,
                   /*use_scheduler=*/true, log);
}

Checkpoint stage3_finetune(const ModelConfig& cfg, const TrainConfig& tc,
                           const Checkpoint& from,
                           const std::vector<MemoryBank>& merged_banks,
                           const std::vector<LabeledSequence>& merged,
                           const TrainLogSink& log) {
  cfg.validate();
  tc.validate();
  if (merged_banks.size() != merged.size() && cfg.uses_bank())
    throw ContractError("stage3_finetune: one frozen bank per video required");

  Checkpoint state;
  if (from.stage == 2) {
    state = from;
    state.params = clone_params(cfg, from.params);
    state.stage = 3;
    state.iteration = 0;
    state.sched = SchedulerState{};  // constant rates: no scheduler in stage 3
    state.velocity.clear();
    state.rng_state =
        Rng(derive_seed(from.master_seed, kTrainStreamBase + 3)).state_string();
  } else if (from.stage == 3) {
    state = from;
    state.params = clone_params(cfg, from.params);
  } else {
    throw ContractError("stage3_finetune: expected a stage-2 or stage-3 checkpoint");
  }

  return run_stage(3, cfg, tc, std::move(state), merged,
                   cfg.uses_bank() ? &merged_banks : nullptr, nullptr, nullptr,
                   /*use_scheduler=*/false, log);
}

FullTrainResult full_train(const ModelConfig& cfg, const TrainConfig& tc,
                           const Dataset& data, std::uint64_t master_seed,
                           const TrainLogSink& log) {
  FullTrainResult out;
  Stage1Result s1 = stage1_pretrain(cfg, tc, data.train, data.val, master_seed, log);
  out.stage1 = s1.ckpt;
  out.train_banks = std::move(s1.train_banks);
  out.val_banks = std::move(s1.val_banks);

  out.stage2 = stage2_train(cfg, tc, out.stage1, out.train_banks, out.val_banks,
                            data.train, data.val, log);

  std::vector<LabeledSequence> merged = data.train;
  merged.insert(merged.end(), data.val.begin(), data.val.end());
  std::vector<MemoryBank> merged_banks = out.train_banks;
  merged_banks.insert(merged_banks.end(), out.val_banks.begin(), out.val_banks.end());
  out.stage3 = stage3_finetune(cfg, tc, out.stage2, merged_banks, merged, log);
  return out;
}

}  // namespace tmr
