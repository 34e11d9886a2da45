#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tmr/checkpoint.hpp"
#include "tmr/errors.hpp"
#include "tmr/metrics.hpp"
#include "tmr/stream.hpp"
#include "tmr/train.hpp"

using namespace tmr;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.d_raw = 16;
  cfg.d = 16;
  cfg.d_e = 8;
  cfg.d_h = 16;
  cfg.num_phases = 7;
  cfg.clip_len = 5;
  cfg.bank_len = 10;
  cfg.mode = AblationMode::LrMsNl;
  return cfg;
}

TrainConfig tiny_train() {
  TrainConfig tc = TrainConfig::desk();
  tc.batch_size = 6;
  tc.stage_iters = {30, 30, 8};
  tc.eval_interval = 10;
  tc.val_sample_count = 24;
  return tc;
}

Dataset tiny_data(std::uint64_t seed) {
  WorkflowSchema s = default_schema();
  s.min_length = 70;
  s.max_length = 110;
  return make_dataset(s, 2, 1, 1, seed);
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() /
             ("tmr_train_test_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

double group_grad_norm(const ParamGroup& g) {
  double n = 0.0;
  for (const auto& p : g.params) {
    if (!p.tensor.has_grad()) continue;
    for (double v : p.tensor.grad()) n += v * v;
  }
  return std::sqrt(n);
}

}  // namespace

TEST_CASE("sample_batch size, determinism and label distribution") {
  Dataset data = tiny_data(5);
  Rng r1(3), r2(3);
  auto b1 = sample_batch(data.train, 16, r1);
  auto b2 = sample_batch(data.train, 16, r2);
  CHECK(b1.size() == 16);
  for (std::size_t i = 0; i < b1.size(); ++i) {
    CHECK(b1[i].video == b2[i].video);
    CHECK(b1[i].t == b2[i].t);
    CHECK(b1[i].label == data.train[b1[i].video].labels[b1[i].t]);
  }

  // 10k samples against the dataset frame-label distribution, within 2%
  std::vector<double> dataset_freq(7, 0.0);
  std::size_t total = 0;
  for (const auto& seq : data.train) {
    for (int l : seq.labels) dataset_freq[static_cast<std::size_t>(l)] += 1.0;
    total += seq.T;
  }
  for (double& f : dataset_freq) f /= static_cast<double>(total);

  Rng r3(17);
  std::vector<double> sample_freq(7, 0.0);
  const std::size_t n = 10000;
  auto big = sample_batch(data.train, n, r3);
  for (const auto& item : big) sample_freq[static_cast<std::size_t>(item.label)] += 1.0;
  for (double& f : sample_freq) f /= static_cast<double>(n);
  for (std::size_t p = 0; p < 7; ++p)
    CHECK(std::abs(sample_freq[p] - dataset_freq[p]) <= 0.02);
}

TEST_CASE("sgd_step hand oracles") {
  // momentum 0, wd 0: param - lr * grad
  auto w = Tensor::from_data({2}, {1.0, -2.0}, true);
  ParamGroups groups{{"g", {{"w", w}}}};
  std::vector<std::vector<double>> vel{{0.0, 0.0}};
  backward(scale(sum(w), 3.0));  // grad = 3 everywhere
  std::vector<double> lrs{0.1};
  sgd_step(groups, vel, lrs, 0.0, 0.0);
  CHECK(w.values()[0] == doctest::Approx(1.0 - 0.3).epsilon(1e-12));
  CHECK(w.values()[1] == doctest::Approx(-2.0 - 0.3).epsilon(1e-12));

  // two steps, constant grad g, momentum 0.9, wd 0, lr 1: deltas -g, -1.9g
  auto u = Tensor::from_data({1}, {0.0}, true);
  ParamGroups g2{{"g", {{"u", u}}}};
  std::vector<std::vector<double>> v2{{0.0}};
  std::vector<double> lr1{1.0};
  const double gval = 0.7;
  u.zero_grad();
  backward(scale(sum(u), gval));
  sgd_step(g2, v2, lr1, 0.9, 0.0);
  CHECK(u.values()[0] == doctest::Approx(-gval).epsilon(1e-12));
  u.zero_grad();
  backward(scale(sum(u), gval));
  sgd_step(g2, v2, lr1, 0.9, 0.0);
  CHECK(u.values()[0] == doctest::Approx(-gval - 1.9 * gval).epsilon(1e-12));

  // weight decay only, zero grad, momentum 0: shrink by (1 - lr*wd) per step
  auto s = Tensor::from_data({1}, {2.0}, true);
  ParamGroups g3{{"g", {{"s", s}}}};
  std::vector<std::vector<double>> v3{{0.0}};
  std::vector<double> lr2{0.5};
  double expected = 2.0;
  for (int i = 0; i < 3; ++i) {
    s.zero_grad();
    backward(scale(sum(s), 0.0));
    sgd_step(g3, v3, lr2, 0.0, 0.01);
    expected *= 1.0 - 0.5 * 0.01;
    CHECK(s.values()[0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("sgd_step flags non-finite gradients with the group name") {
  auto w = Tensor::from_data({1}, {1.0}, true);
  ParamGroups groups{{"recurrent", {{"w", w}}}};
  std::vector<std::vector<double>> vel{{0.0}};
  backward(scale(sum(w), std::numeric_limits<double>::quiet_NaN()));
  std::vector<double> lrs{0.1};
  try {
    sgd_step(groups, vel, lrs, 0.9, 0.0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("recurrent") != std::string::npos);
  }
}

TEST_CASE("plateau scheduler fires after exactly `patience` stagnant evals") {
  PlateauScheduler sched(3, 1e-4);
  CHECK(sched.scale() == 1.0);
  CHECK_FALSE(sched.observe(1.0));  // first eval sets the baseline
  CHECK_FALSE(sched.observe(1.0));  // stagnant 1
  CHECK_FALSE(sched.observe(1.0));  // stagnant 2
  CHECK(sched.observe(1.0));        // stagnant 3 -> drop
  CHECK(sched.scale() == doctest::Approx(0.1).epsilon(1e-12));

  // improvement resets the count
  PlateauScheduler s2(2, 1e-4);
  CHECK_FALSE(s2.observe(1.0));
  CHECK_FALSE(s2.observe(1.0));   // stagnant 1
  CHECK_FALSE(s2.observe(0.5));   // improvement
  CHECK_FALSE(s2.observe(0.5));   // stagnant 1
  CHECK(s2.observe(0.5));         // stagnant 2 -> drop
  CHECK(s2.scale() == doctest::Approx(0.1).epsilon(1e-12));

  // a sub-tolerance improvement still counts as stagnation
  PlateauScheduler s3(1, 1e-2);
  CHECK_FALSE(s3.observe(1.0));
  CHECK(s3.observe(1.0 - 1e-3));
}

TEST_CASE("stage 1 trains and produces valid frozen banks") {
  Dataset data = tiny_data(7);
  ModelConfig cfg = tiny_model();
  TrainConfig tc = tiny_train();
  tc.stage_iters = {120, 10, 4};

  std::vector<double> first, last;
  std::vector<double> ratios;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    std::vector<double> losses;
    Stage1Result s1 = stage1_pretrain(cfg, tc, data.train, data.val, seed,
                                      [&](const TrainLogRecord& r) {
                                        if (r.stage == 1) losses.push_back(r.loss);
                                      });
    REQUIRE(losses.size() == 120);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 10; ++i) {
      head += losses[static_cast<std::size_t>(i)];
      tail += losses[losses.size() - 10 + static_cast<std::size_t>(i)];
    }
    ratios.push_back(tail / head);

    REQUIRE(s1.train_banks.size() == data.train.size());
    REQUIRE(s1.val_banks.size() == data.val.size());
    for (std::size_t v = 0; v < data.train.size(); ++v) {
      CHECK(s1.train_banks[v].frozen());
      CHECK(s1.train_banks[v].size() == data.train[v].T);
      CHECK(s1.train_banks[v].width() == cfg.d);
    }
    CHECK(s1.ckpt.stage == 1);
  }
  std::sort(ratios.begin(), ratios.end());
  CHECK(ratios[1] < 0.8);  // 3-seed median
}

TEST_CASE("stage 2 leaves banks untouched and reaches every parameter group") {
  Dataset data = tiny_data(11);
  ModelConfig cfg = tiny_model();
  TrainConfig tc = tiny_train();

  Stage1Result s1 = stage1_pretrain(cfg, tc, data.train, data.val, 42);
  std::vector<std::uint64_t> hashes_before;
  for (const auto& b : s1.train_banks) hashes_before.push_back(b.content_hash());

  Checkpoint s2 = stage2_train(cfg, tc, s1.ckpt, s1.train_banks, s1.val_banks,
                               data.train, data.val);
  CHECK(s2.stage == 2);
  for (std::size_t v = 0; v < s1.train_banks.size(); ++v)
    CHECK(s1.train_banks[v].content_hash() == hashes_before[v]);

  // backward smoke test: every group sees gradient
  ParamGroups groups = collect_params(cfg, s2.params);
  REQUIRE(groups.size() == 5);  // frame, recurrent, tvl, nlo, head
  for (auto& g : groups)
    for (auto& p : g.params) p.tensor.zero_grad();
  Rng rng(1);
  auto batch = sample_batch(data.train, 8, rng);
  Tensor total;
  for (const auto& item : batch) {
    Tensor clip = clip_tensor(data.train[item.video], item.t, cfg.clip_len);
    BankWindow w = s1.train_banks[item.video].window(item.t, cfg.bank_len);
    ForwardResult fr = model_forward(cfg, s2.params, clip, w.to_tensor(), w.mask,
                                     RunMode::Train, rng);
    Tensor li = cross_entropy(fr.logits, static_cast<std::size_t>(item.label));
    total = total.defined() ? add(total, li) : li;
  }
  backward(scale(total, 1.0 / 8.0));
  for (const auto& g : groups) CHECK(group_grad_norm(g) > 0.0);
}

TEST_CASE("stage 3 runs on the merged set at constant rates") {
  Dataset data = tiny_data(13);
  ModelConfig cfg = tiny_model();
  TrainConfig tc = tiny_train();

  Stage1Result s1 = stage1_pretrain(cfg, tc, data.train, data.val, 5);
  Checkpoint s2 = stage2_train(cfg, tc, s1.ckpt, s1.train_banks, s1.val_banks,
                               data.train, data.val);

  std::vector<LabeledSequence> merged = data.train;
  merged.insert(merged.end(), data.val.begin(), data.val.end());
  std::vector<MemoryBank> merged_banks = s1.train_banks;
  merged_banks.insert(merged_banks.end(), s1.val_banks.begin(), s1.val_banks.end());
  CHECK(merged.size() == data.train.size() + data.val.size());

  std::vector<double> head_lrs;
  Checkpoint s3 = stage3_finetune(cfg, tc, s2, merged_banks, merged,
                                  [&](const TrainLogRecord& r) {
                                    for (const auto& [name, lr] : r.lrs)
                                      if (name == "head") head_lrs.push_back(lr);
                                  });
  CHECK(s3.stage == 3);
  REQUIRE(!head_lrs.empty());
  for (double lr : head_lrs) CHECK(lr == head_lrs.front());  // held constant
}

TEST_CASE("stage 3 vs stage 2 test metrics (logged, not asserted)") {
  // soft expectation: fine-tuning with the merged set should not hurt
  Dataset data = tiny_data(29);
  ModelConfig cfg = tiny_model();
  TrainConfig tc = tiny_train();
  tc.stage_iters = {60, 80, 30};

  FullTrainResult r = full_train(cfg, tc, data, 2);
  auto ja_of = [&](const Checkpoint& ckpt) {
    std::vector<VideoScore> scores;
    for (const auto& seq : data.test) {
      VideoPrediction p = predict_offline(cfg, ckpt.params, seq);
      scores.push_back(score_video(seq.labels, p.labels, cfg.num_phases));
    }
    return aggregate(scores).ja_mean;
  };
  const double ja2 = ja_of(r.stage2), ja3 = ja_of(r.stage3);
  MESSAGE("test JA after stage 2: ", ja2, ", after stage 3: ", ja3,
          std::string(ja3 >= ja2 ? " (improved or equal)" : " (declined)"));
  CHECK(ja2 >= 0.0);
  CHECK(ja3 >= 0.0);
}

TEST_CASE("full determinism and checkpoint round trip") {
  Dataset data = tiny_data(17);
  ModelConfig cfg = tiny_model();
  TrainConfig tc = tiny_train();
  auto dir = temp_dir();

  FullTrainResult r1 = full_train(cfg, tc, data, 99);
  FullTrainResult r2 = full_train(cfg, tc, data, 99);
  save_checkpoint(dir / "a3.ckpt", r1.stage3);
  save_checkpoint(dir / "b3.ckpt", r2.stage3);
  CHECK(file_bytes(dir / "a3.ckpt") == file_bytes(dir / "b3.ckpt"));

  // load-save round trip is byte stable
  Checkpoint loaded = load_checkpoint(dir / "a3.ckpt");
  save_checkpoint(dir / "a3_again.ckpt", loaded);
  CHECK(file_bytes(dir / "a3.ckpt") == file_bytes(dir / "a3_again.ckpt"));

  // a different seed moves the parameters
  FullTrainResult r3 = full_train(cfg, tc, data, 100);
  save_checkpoint(dir / "c3.ckpt", r3.stage3);
  CHECK(file_bytes(dir / "a3.ckpt") != file_bytes(dir / "c3.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("resume from a stage checkpoint reproduces the trajectory") {
  Dataset data = tiny_data(19);
  ModelConfig cfg = tiny_model();
  TrainConfig tc = tiny_train();
  auto dir = temp_dir();

  FullTrainResult full = full_train(cfg, tc, data, 7);
  save_checkpoint(dir / "full_s3.ckpt", full.stage3);

  // persist stage-1 artifacts, reload, rerun stages 2 and 3
  save_checkpoint(dir / "s1.ckpt", full.stage1);
  Checkpoint s1 = load_checkpoint(dir / "s1.ckpt");
  std::vector<MemoryBank> train_banks, val_banks;
  for (const auto& seq : data.train)
    train_banks.push_back(MemoryBank::build_offline(s1.params.encoder, seq, cfg.clip_len));
  for (const auto& seq : data.val)
    val_banks.push_back(MemoryBank::build_offline(s1.params.encoder, seq, cfg.clip_len));
  for (std::size_t v = 0; v < train_banks.size(); ++v)
    CHECK(train_banks[v].content_hash() == full.train_banks[v].content_hash());

  Checkpoint s2 = stage2_train(cfg, tc, s1, train_banks, val_banks, data.train, data.val);
  std::vector<LabeledSequence> merged = data.train;
  merged.insert(merged.end(), data.val.begin(), data.val.end());
  std::vector<MemoryBank> merged_banks = train_banks;
  merged_banks.insert(merged_banks.end(), val_banks.begin(), val_banks.end());
  Checkpoint s3 = stage3_finetune(cfg, tc, s2, merged_banks, merged);

  save_checkpoint(dir / "resumed_s3.ckpt", s3);
  CHECK(file_bytes(dir / "full_s3.ckpt") == file_bytes(dir / "resumed_s3.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("bank_len zero degenerates to the short-range baseline") {
  Dataset data = tiny_data(23);
  TrainConfig tc = tiny_train();
  tc.stage_iters = {20, 20, 4};

  ModelConfig sr = tiny_model();
  sr.mode = AblationMode::Sr;

  ModelConfig zero = tiny_model();
  zero.mode = AblationMode::LrMsNl;
  zero.bank_len = 0;
  CHECK(zero.effective_mode() == AblationMode::Sr);

  auto dir = temp_dir();
  FullTrainResult a = full_train(sr, tc, data, 3);
  FullTrainResult b = full_train(zero, tc, data, 3);
  save_checkpoint(dir / "sr.ckpt", a.stage3);
  save_checkpoint(dir / "zero.ckpt", b.stage3);
  // identical parameter trajectories; configs differ only in the recorded
  // mode/bank_len fields, so compare the parameter payloads
  Checkpoint ca = load_checkpoint(dir / "sr.ckpt");
  Checkpoint cb = load_checkpoint(dir / "zero.ckpt");
  ParamGroups ga = collect_params(ca.model_cfg, ca.params);
  ParamGroups gb = collect_params(cb.model_cfg, cb.params);
  REQUIRE(ga.size() == gb.size());
  for (std::size_t g = 0; g < ga.size(); ++g) {
    REQUIRE(ga[g].params.size() == gb[g].params.size());
    for (std::size_t i = 0; i < ga[g].params.size(); ++i) {
      auto va = ga[g].params[i].tensor.values();
      auto vb = gb[g].params[i].tensor.values();
      REQUIRE(va.size() == vb.size());
      for (std::size_t k = 0; k < va.size(); ++k) CHECK(va[k] == vb[k]);
    }
  }
  std::filesystem::remove_all(dir);
}
