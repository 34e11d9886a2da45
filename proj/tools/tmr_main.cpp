// tmr: workflow-recognition engine with a long-range memory bank.
// Subcommands: gen, train, eval, ablate, stream, plot.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tmr/config.hpp"
#include "tmr/container.hpp"
#include "tmr/errors.hpp"
#include "tmr/metrics.hpp"
#include "tmr/stream.hpp"
#include "tmr/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- shared plumbing -------------------------------------------------------

struct CommonOpts {
  std::string config_path;
  std::string profile = "desk";
  std::string out_override;
};

tmr::ExperimentConfig load_effective_config(const CommonOpts& opts) {
  tmr::ExperimentConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = tmr::load_config(opts.config_path);
  } else if (opts.profile == "desk") {
    cfg = tmr::ExperimentConfig::desk();
  } else if (opts.profile == "quick") {
    cfg = tmr::ExperimentConfig::quick();
  } else {
    throw tmr::ConfigError("unknown profile '" + opts.profile + "' (expected desk or quick)");
  }
  if (!opts.out_override.empty()) cfg.out_dir = opts.out_override;
  cfg.validate();
  return cfg;
}

std::string seq_name(const char* split, std::size_t idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.seq", split, idx);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw tmr::DataError("cannot open for writing: " + path.string());
  os << text;
  if (!os) throw tmr::DataError("write failed: " + path.string());
}

bool dataset_on_disk(const fs::path& data_dir, const tmr::DataConfig& dc) {
  if (!fs::exists(data_dir)) return false;
  for (std::size_t i = 0; i < dc.n_train; ++i)
    if (!fs::exists(data_dir / seq_name("train", i))) return false;
  for (std::size_t i = 0; i < dc.n_val; ++i)
    if (!fs::exists(data_dir / seq_name("val", i))) return false;
  for (std::size_t i = 0; i < dc.n_test; ++i)
    if (!fs::exists(data_dir / seq_name("test", i))) return false;
  return true;
}

tmr::Dataset load_dataset(const fs::path& data_dir, const tmr::DataConfig& dc) {
  tmr::Dataset ds;
  for (std::size_t i = 0; i < dc.n_train; ++i)
    ds.train.push_back(tmr::load_sequence(data_dir / seq_name("train", i)));
  for (std::size_t i = 0; i < dc.n_val; ++i)
    ds.val.push_back(tmr::load_sequence(data_dir / seq_name("val", i)));
  for (std::size_t i = 0; i < dc.n_test; ++i)
    ds.test.push_back(tmr::load_sequence(data_dir / seq_name("test", i)));
  return ds;
}

// Disk copy if one exists, otherwise a deterministic regeneration.
tmr::Dataset obtain_dataset(const tmr::ExperimentConfig& cfg, const fs::path& out) {
  const fs::path data_dir = out / "data";
  if (dataset_on_disk(data_dir, cfg.data)) return load_dataset(data_dir, cfg.data);
  return tmr::make_dataset(cfg.schema, cfg.data.n_train, cfg.data.n_val, cfg.data.n_test,
                           cfg.seed);
}

std::string run_metadata(const tmr::ExperimentConfig& cfg) {
  json j;
  j["mode"] = tmr::to_string(cfg.model.mode);
  j["incorporation"] = tmr::to_string(cfg.model.incorporation);
  j["fusion"] = tmr::to_string(cfg.model.fusion);
  j["kernel_sizes"] = cfg.model.kernel_sizes;
  j["bank_len"] = cfg.model.bank_len;
  j["d"] = cfg.model.d;
  j["seed"] = cfg.seed;
  j["smooth_window"] = cfg.smooth_window;
  return j.dump();
}

// ---- gen -------------------------------------------------------------------

int cmd_gen(const CommonOpts& opts) {
  tmr::ExperimentConfig cfg = load_effective_config(opts);
  const fs::path out = tmr::resolve_out_dir(cfg);
  const fs::path data_dir = out / "data";
  fs::create_directories(data_dir);

  tmr::Dataset ds = tmr::make_dataset(cfg.schema, cfg.data.n_train, cfg.data.n_val,
                                      cfg.data.n_test, cfg.seed);
  for (std::size_t i = 0; i < ds.train.size(); ++i)
    tmr::save_sequence(data_dir / seq_name("train", i), ds.train[i]);
  for (std::size_t i = 0; i < ds.val.size(); ++i)
    tmr::save_sequence(data_dir / seq_name("val", i), ds.val[i]);
  for (std::size_t i = 0; i < ds.test.size(); ++i)
    tmr::save_sequence(data_dir / seq_name("test", i), ds.test[i]);
  tmr::save_config(out / "config.json", cfg);

  std::size_t frames = 0;
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& seq : *split) frames += seq.T;
  std::printf("wrote %zu sequences (%zu frames) under %s\n",
              ds.train.size() + ds.val.size() + ds.test.size(), frames,
              data_dir.string().c_str());
  return 0;
}

// ---- train -----------------------------------------------------------------

tmr::TrainLogSink jsonl_sink(std::ofstream& os) {
  return [&os](const tmr::TrainLogRecord& r) {
    json j;
    j["stage"] = r.stage;
    j["iteration"] = r.iteration;
    j["loss"] = r.loss;
    json lrs;
    for (const auto& [name, lr] : r.lrs) lrs[name] = lr;
    j["lr"] = std::move(lrs);
    if (r.val_loss) j["val_loss"] = *r.val_loss;
    os << j.dump() << '\n';
  };
}

void save_banks(const fs::path& dir, const char* split,
                const std::vector<tmr::MemoryBank>& banks) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < banks.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03zu.bank", split, i);
    tmr::save_bank(dir / buf, banks[i]);
  }
}

std::vector<tmr::MemoryBank> load_banks(const fs::path& dir, const char* split,
                                        std::size_t count) {
  std::vector<tmr::MemoryBank> banks;
  for (std::size_t i = 0; i < count; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03zu.bank", split, i);
    const fs::path p = dir / buf;
    if (!fs::exists(p))
      throw tmr::DataError("missing bank file (run the full training first): " + p.string());
    banks.push_back(tmr::load_bank(p));
  }
  return banks;
}

int cmd_train(const CommonOpts& opts, const std::string& resume_path) {
  tmr::ExperimentConfig cfg = load_effective_config(opts);
  const fs::path out = tmr::resolve_out_dir(cfg);
  fs::create_directories(out / "ckpt");
  fs::create_directories(out / "logs");

  tmr::Dataset data = obtain_dataset(cfg, out);
  std::ofstream log_os(out / "logs" / "train.jsonl", std::ios::app);
  if (!log_os) throw tmr::DataError("cannot open training log under " + out.string());
  tmr::TrainLogSink sink = jsonl_sink(log_os);

  tmr::ModelConfig mc = cfg.model;
  std::uint32_t start_stage = 0;  // 0 means from scratch
  tmr::Checkpoint resume;
  if (!resume_path.empty()) {
    resume = tmr::load_checkpoint(resume_path);
    start_stage = resume.stage;
    std::printf("resuming after stage %u\n", start_stage);
  }

  tmr::Checkpoint s1;
  std::vector<tmr::MemoryBank> train_banks, val_banks;
  if (start_stage == 0) {
    tmr::Stage1Result r1 = tmr::stage1_pretrain(mc, cfg.train, data.train, data.val,
                                                cfg.seed, sink);
    s1 = std::move(r1.ckpt);
    train_banks = std::move(r1.train_banks);
    val_banks = std::move(r1.val_banks);
    tmr::save_checkpoint(out / "ckpt" / "stage1.ckpt", s1);
    save_banks(out / "banks", "train", train_banks);
    save_banks(out / "banks", "val", val_banks);
    std::printf("stage 1 done (%zu iterations)\n", cfg.train.stage_iters[0]);
  } else {
    if (start_stage >= 1) {
      train_banks = load_banks(out / "banks", "train", data.train.size());
      val_banks = load_banks(out / "banks", "val", data.val.size());
    }
    if (start_stage == 1) s1 = std::move(resume);
  }

  tmr::Checkpoint s2;
  if (start_stage <= 1) {
    s2 = tmr::stage2_train(mc, cfg.train, s1, train_banks, val_banks, data.train,
                           data.val, sink);
    tmr::save_checkpoint(out / "ckpt" / "stage2.ckpt", s2);
    std::printf("stage 2 done (%zu iterations)\n", cfg.train.stage_iters[1]);
  } else if (start_stage == 2) {
    s2 = std::move(resume);
  }

  if (start_stage <= 2) {
    std::vector<tmr::LabeledSequence> merged = data.train;
    merged.insert(merged.end(), data.val.begin(), data.val.end());
    std::vector<tmr::MemoryBank> merged_banks = train_banks;
    for (auto& b : val_banks) merged_banks.push_back(std::move(b));
    tmr::Checkpoint s3 = tmr::stage3_finetune(mc, cfg.train, s2, merged_banks, merged, sink);
    tmr::save_checkpoint(out / "ckpt" / "stage3.ckpt", s3);
    std::printf("stage 3 done (%zu iterations)\n", cfg.train.stage_iters[2]);
  } else {
    std::printf("checkpoint is already past stage 3; nothing to do\n");
  }
  std::printf("checkpoints under %s\n", (out / "ckpt").string().c_str());
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArtifacts {
  std::vector<tmr::VideoScore> scores;
  tmr::Aggregate agg{};
};

EvalArtifacts evaluate_to_dir(const tmr::ExperimentConfig& cfg, const tmr::Checkpoint& ckpt,
                              const std::vector<tmr::LabeledSequence>& test,
                              const fs::path& eval_dir, bool dump_attention) {
  fs::create_directories(eval_dir / "ribbons");
  const tmr::ModelConfig& mc = ckpt.model_cfg;
  const int C = mc.num_phases;

  EvalArtifacts out;
  std::vector<std::string> names;
  std::vector<int> all_gt, all_pred;
  for (std::size_t v = 0; v < test.size(); ++v) {
    const auto& seq = test[v];
    tmr::VideoPrediction pred = tmr::predict_offline(mc, ckpt.params, seq);

    std::vector<int> labels = pred.labels;
    if (cfg.smooth_window > 1)
      labels = tmr::smooth_moving_average(pred.probs, seq.T,
                                          static_cast<std::size_t>(C), cfg.smooth_window);

    char buf[48];
    std::snprintf(buf, sizeof(buf), "video_%03zu", v);
    names.emplace_back(buf);
    out.scores.push_back(tmr::score_video(seq.labels, labels, C));
    all_gt.insert(all_gt.end(), seq.labels.begin(), seq.labels.end());
    all_pred.insert(all_pred.end(), labels.begin(), labels.end());

    // per-frame prediction lines (offline path: latency not meaningful)
    std::ostringstream lines;
    for (std::size_t t = 0; t < seq.T; ++t) {
      tmr::StepResult r;
      r.t = t;
      r.phase = labels[t];
      r.probs.assign(pred.probs.begin() + static_cast<std::ptrdiff_t>(t * C),
                     pred.probs.begin() + static_cast<std::ptrdiff_t>((t + 1) * C));
      r.latency_us = 0.0;
      lines << tmr::prediction_line(r) << '\n';
    }
    write_text(eval_dir / (std::string(buf) + ".pred.jsonl"), lines.str());

    if (dump_attention && mc.uses_bank()) {
      std::ostringstream att;
      tmr::StreamSession session(mc, ckpt.params);
      for (std::size_t t = 0; t < seq.T; ++t) {
        tmr::StepResult r = session.step(seq.frame(t));
        att << t;
        for (double w : r.attention) att << '\t' << w;
        att << '\n';
      }
      write_text(eval_dir / (std::string(buf) + ".attention.tsv"), att.str());
    }

    std::vector<tmr::RibbonRow> rows;
    rows.push_back({"truth", seq.labels});
    rows.push_back({"model", labels});
    write_text(eval_dir / "ribbons" / (std::string(buf) + ".svg"), tmr::ribbon_svg(rows, C));
  }

  out.agg = tmr::aggregate(out.scores);
  auto conf = tmr::confusion(all_gt, all_pred, C, true);
  write_text(eval_dir / "metrics.json",
             tmr::metrics_report_json(names, out.scores, out.agg, conf, C, run_metadata(cfg)));
  write_text(eval_dir / "metrics.tsv", tmr::metrics_flat_table(names, out.scores));
  return out;
}

int cmd_eval(const CommonOpts& opts, const std::string& ckpt_path,
             const std::string& data_dir, bool dump_attention) {
  tmr::ExperimentConfig cfg = load_effective_config(opts);
  const fs::path out = tmr::resolve_out_dir(cfg);
  tmr::Checkpoint ckpt = tmr::load_checkpoint(ckpt_path);

  std::vector<tmr::LabeledSequence> test;
  if (!data_dir.empty()) {
    for (std::size_t i = 0; i < cfg.data.n_test; ++i)
      test.push_back(tmr::load_sequence(fs::path(data_dir) / seq_name("test", i)));
  } else {
    test = obtain_dataset(cfg, out).test;
  }

  EvalArtifacts result = evaluate_to_dir(cfg, ckpt, test, out / "eval", dump_attention);
  std::printf("videos=%zu  AC=%.4f±%.4f  PR=%.4f±%.4f  RE=%.4f±%.4f  JA=%.4f±%.4f\n",
              result.agg.videos, result.agg.ac_mean, result.agg.ac_std, result.agg.pr_mean,
              result.agg.pr_std, result.agg.re_mean, result.agg.re_std, result.agg.ja_mean,
              result.agg.ja_std);
  std::printf("reports under %s\n", (out / "eval").string().c_str());
  return 0;
}

// ---- ablate ----------------------------------------------------------------

struct AblationRow {
  std::string name;
  tmr::ModelConfig model;
};

std::vector<AblationRow> study_rows(const std::string& study, const tmr::ModelConfig& base) {
  std::vector<AblationRow> rows;
  auto with = [&](const std::string& name, auto&& edit) {
    tmr::ModelConfig m = base;
    edit(m);
    rows.push_back({name, std::move(m)});
  };
  if (study == "components") {
    with("sr", [](tmr::ModelConfig& m) { m.mode = tmr::AblationMode::Sr; });
    with("lr-nl", [](tmr::ModelConfig& m) { m.mode = tmr::AblationMode::LrNl; });
    with("lr-ms-wave", [](tmr::ModelConfig& m) { m.mode = tmr::AblationMode::LrMsWave; });
    with("lr-ms-nl", [](tmr::ModelConfig& m) { m.mode = tmr::AblationMode::LrMsNl; });
  } else if (study == "length") {
    for (std::size_t L : {0, 10, 20, 30, 40})
      with("L" + std::to_string(L), [L](tmr::ModelConfig& m) {
        m.mode = tmr::AblationMode::LrNl;
        m.bank_len = L;
      });
  } else if (study == "multiscale") {
    for (auto fusion : {tmr::FusionMode::Ave, tmr::FusionMode::Max})
      with("i1-357-" + tmr::to_string(fusion), [fusion](tmr::ModelConfig& m) {
        m.mode = tmr::AblationMode::LrMsNl;
        m.incorporation = tmr::Incorporation::I1;
        m.kernel_sizes = {3, 5, 7};
        m.fusion = fusion;
      });
    for (std::size_t k : {3, 5, 7})
      with("i2-k" + std::to_string(k), [k](tmr::ModelConfig& m) {
        m.mode = tmr::AblationMode::LrMsNl;
        m.incorporation = tmr::Incorporation::I2;
        m.kernel_sizes = {k};
      });
    for (auto fusion : {tmr::FusionMode::Ave, tmr::FusionMode::Max})
      with("i2-357-" + tmr::to_string(fusion), [fusion](tmr::ModelConfig& m) {
        m.mode = tmr::AblationMode::LrMsNl;
        m.incorporation = tmr::Incorporation::I2;
        m.kernel_sizes = {3, 5, 7};
        m.fusion = fusion;
      });
  } else {
    throw tmr::ConfigError("unknown study '" + study +
                           "' (expected components, length or multiscale)");
  }
  return rows;
}

int cmd_ablate(const CommonOpts& opts, const std::string& study, std::size_t seeds) {
  tmr::ExperimentConfig cfg = load_effective_config(opts);
  if (seeds < 1) throw tmr::ConfigError("ablate: need at least one seed");
  const fs::path out = tmr::resolve_out_dir(cfg);
  const fs::path ab_dir = out / "ablate";
  fs::create_directories(ab_dir);

  tmr::Dataset data = obtain_dataset(cfg, out);
  std::vector<AblationRow> rows = study_rows(study, cfg.model);

  std::ostringstream tsv;
  tsv << "study\trow\tseed\taccuracy\tprecision\trecall\tjaccard\n";
  std::map<std::string, std::vector<double>> ja_by_row;

  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = cfg.seed + s;
    // Stage 1 ignores the bank-side configuration: share it across rows.
    tmr::Stage1Result s1 =
        tmr::stage1_pretrain(cfg.model, cfg.train, data.train, data.val, seed);
    std::vector<tmr::LabeledSequence> merged = data.train;
    merged.insert(merged.end(), data.val.begin(), data.val.end());
    std::vector<tmr::MemoryBank> merged_banks = s1.train_banks;
    merged_banks.insert(merged_banks.end(), s1.val_banks.begin(), s1.val_banks.end());

    for (const auto& row : rows) {
      tmr::Checkpoint s2 = tmr::stage2_train(row.model, cfg.train, s1.ckpt, s1.train_banks,
                                             s1.val_banks, data.train, data.val);
      tmr::Checkpoint s3 = tmr::stage3_finetune(row.model, cfg.train, s2, merged_banks, merged);

      std::vector<tmr::VideoScore> scores;
      for (const auto& seq : data.test) {
        tmr::VideoPrediction p = tmr::predict_offline(row.model, s3.params, seq);
        scores.push_back(tmr::score_video(seq.labels, p.labels, row.model.num_phases));
      }
      tmr::Aggregate agg = tmr::aggregate(scores);
      char line[256];
      std::snprintf(line, sizeof(line), "%s\t%s\t%llu\t%.6f\t%.6f\t%.6f\t%.6f\n",
                    study.c_str(), row.name.c_str(), (unsigned long long)seed, agg.ac_mean,
                    agg.pr_mean, agg.re_mean, agg.ja_mean);
      tsv << line;
      ja_by_row[row.name].push_back(agg.ja_mean);
      std::printf("%-12s seed %llu: AC=%.3f JA=%.3f\n", row.name.c_str(),
                  (unsigned long long)seed, agg.ac_mean, agg.ja_mean);
      std::fflush(stdout);
    }
  }

  tsv << "\nrow\tmedian_jaccard\n";
  std::printf("\n%-12s %s\n", "row", "median JA");
  for (const auto& row : rows) {
    std::vector<double> ja = ja_by_row[row.name];
    std::sort(ja.begin(), ja.end());
    const double median = ja[ja.size() / 2];
    tsv << row.name << '\t' << median << '\n';
    std::printf("%-12s %.4f\n", row.name.c_str(), median);
  }
  write_text(ab_dir / (study + ".tsv"), tsv.str());
  std::printf("table under %s\n", (ab_dir / (study + ".tsv")).string().c_str());
  return 0;
}

// ---- stream ----------------------------------------------------------------

int cmd_stream(const std::string& ckpt_path, const std::string& in_path,
               const std::string& out_path, const std::string& from_seq,
               const std::string& frames_out) {
  if (!from_seq.empty()) {
    // encode a sequence file into the frame-record protocol
    if (frames_out.empty())
      throw tmr::ConfigError("stream: --frames-out is required with --from-seq");
    tmr::LabeledSequence seq = tmr::load_sequence(from_seq);
    std::ofstream os(frames_out, std::ios::binary | std::ios::trunc);
    if (!os) throw tmr::DataError("stream: cannot open " + frames_out);
    for (std::size_t t = 0; t < seq.T; ++t) tmr::write_frame_record(os, seq.frame(t));
    std::printf("wrote %zu frame records to %s\n", seq.T, frames_out.c_str());
    return 0;
  }

  if (ckpt_path.empty()) throw tmr::ConfigError("stream: --checkpoint is required");
  tmr::Checkpoint ckpt = tmr::load_checkpoint(ckpt_path);

  std::ifstream in_file;
  std::istream* in = &std::cin;
  if (!in_path.empty() && in_path != "-") {
    in_file.open(in_path, std::ios::binary);
    if (!in_file) throw tmr::DataError("stream: cannot open " + in_path);
    in = &in_file;
  }
  std::ofstream out_file;
  std::ostream* os = &std::cout;
  if (!out_path.empty() && out_path != "-") {
    out_file.open(out_path, std::ios::trunc);
    if (!out_file) throw tmr::DataError("stream: cannot open " + out_path);
    os = &out_file;
  }

  tmr::StreamSession session(ckpt.model_cfg, ckpt.params);
  std::size_t frames = 0;
  while (auto frame = tmr::read_frame_record(*in)) {
    tmr::StepResult r = session.step(*frame);
    (*os) << tmr::prediction_line(r) << '\n';
    ++frames;
  }
  tmr::LatencyStats lat = session.latency();
  std::fprintf(stderr, "processed %zu frames; latency mean %.1f us, p95 %.1f us\n", frames,
               lat.mean_us, lat.p95_us);
  return 0;
}

// ---- plot ------------------------------------------------------------------

std::vector<int> labels_from_prediction_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw tmr::DataError("plot: cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      labels.push_back(j.at("phase").get<int>());
    } catch (const json::exception& e) {
      throw tmr::DataError("plot: bad prediction line in " + path.string() + ": " + e.what());
    }
  }
  return labels;
}

int cmd_plot(const std::string& seq_path, const std::vector<std::string>& pred_paths,
             const std::string& out_path) {
  tmr::LabeledSequence seq = tmr::load_sequence(seq_path);
  std::vector<tmr::RibbonRow> rows;
  rows.push_back({"truth", seq.labels});
  for (const auto& p : pred_paths) {
    std::vector<int> labels = labels_from_prediction_file(p);
    if (labels.size() != seq.T)
      throw tmr::DataError("plot: prediction length does not match the sequence: " + p);
    rows.push_back({fs::path(p).stem().string(), std::move(labels)});
  }
  write_text(out_path, tmr::ribbon_svg(rows, seq.num_phases));
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tmr: long-range memory-bank workflow recognition engine"};
  app.require_subcommand(0, 1);

  bool print_config = false;
  std::string print_profile = "desk";
  app.add_flag("--print-config", print_config, "print a full default config and exit");
  app.add_option("--profile", print_profile, "profile for --print-config (desk|quick)");

  CommonOpts gen_opts, train_opts, eval_opts, ablate_opts;
  std::string resume_path, eval_ckpt, eval_data, study = "components";
  std::string stream_ckpt, stream_in, stream_out, stream_from_seq, stream_frames_out;
  std::string plot_seq, plot_out;
  std::vector<std::string> plot_preds;
  bool dump_attention = false;
  std::size_t ablate_seeds = 5;

  auto add_common = [](CLI::App* sub, CommonOpts& opts) {
    sub->add_option("--config", opts.config_path, "experiment config JSON");
    sub->add_option("--profile", opts.profile, "built-in profile when no config is given");
    sub->add_option("--out", opts.out_override, "override the config's output directory");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, gen_opts);

  CLI::App* train = app.add_subcommand("train", "run the three training stages");
  add_common(train, train_opts);
  train->add_option("--resume", resume_path, "resume after the given stage checkpoint");

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on the test split");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "load sequences from this directory");
  eval->add_flag("--dump-attention", dump_attention, "write per-frame attention weights");

  CLI::App* ablate = app.add_subcommand("ablate", "run an ablation study grid");
  add_common(ablate, ablate_opts);
  ablate->add_option("--study", study, "components | length | multiscale");
  ablate->add_option("--seeds", ablate_seeds, "number of seeds per row");

  CLI::App* stream = app.add_subcommand("stream", "frame-at-a-time prediction over the wire protocol");
  stream->add_option("--checkpoint", stream_ckpt, "checkpoint file");
  stream->add_option("--in", stream_in, "frame-record input file ('-' for stdin)");
  stream->add_option("--out", stream_out, "prediction-line output file ('-' for stdout)");
  stream->add_option("--from-seq", stream_from_seq, "encode a sequence file into frame records");
  stream->add_option("--frames-out", stream_frames_out, "output path for --from-seq");

  CLI::App* plot = app.add_subcommand("plot", "render a phase ribbon from predictions");
  plot->add_option("--seq", plot_seq, "sequence file providing the ground truth")->required();
  plot->add_option("--pred", plot_preds, "prediction JSONL file (repeatable)");
  plot->add_option("--svg", plot_out, "output SVG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_config) {
      CommonOpts o;
      o.profile = print_profile;
      std::cout << tmr::config_to_json(load_effective_config(o));
      return 0;
    }
    if (gen->parsed()) return cmd_gen(gen_opts);
    if (train->parsed()) return cmd_train(train_opts, resume_path);
    if (eval->parsed()) return cmd_eval(eval_opts, eval_ckpt, eval_data, dump_attention);
    if (ablate->parsed()) return cmd_ablate(ablate_opts, study, ablate_seeds);
    if (stream->parsed())
      return cmd_stream(stream_ckpt, stream_in, stream_out, stream_from_seq, stream_frames_out);
    if (plot->parsed()) return cmd_plot(plot_seq, plot_preds, plot_out);
    std::cout << app.help();
    return 0;
  } catch (const tmr::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const tmr::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const tmr::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const tmr::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
