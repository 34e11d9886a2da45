#include "tmr/stream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tmr/encoder.hpp"
#include "tmr/errors.hpp"

namespace tmr {

namespace {

int argmax_first(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

LatencyStats latency_from(std::vector<double> samples) {
  LatencyStats s;
  if (samples.empty()) return s;
  double total = 0.0;
  for (double v : samples) {
    total += v;
    s.max_us = std::max(s.max_us, v);
  }
  s.mean_us = total / static_cast<double>(samples.size());
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(0.95 * static_cast<double>(samples.size()));
  s.p95_us = samples[std::min(rank, samples.size() - 1)];
  return s;
}

}  // namespace

StreamSession::StreamSession(const ModelConfig& cfg, const ModelParams& params)
    : cfg_(cfg), params_(params), bank_(cfg.d) {
  cfg_.validate();
}

StepResult StreamSession::step(std::span<const double> frame) {
  if (frame.size() != cfg_.d_raw)
    throw ShapeError("stream: frame width " + std::to_string(frame.size()) +
                     " does not match d_raw " + std::to_string(cfg_.d_raw));

  buffer_.emplace_back(frame.begin(), frame.end());
  while (buffer_.size() > cfg_.clip_len) buffer_.pop_front();

  const auto started = std::chrono::steady_clock::now();

  std::vector<double> clip_data;
  clip_data.reserve(buffer_.size() * cfg_.d_raw);
  for (const auto& row : buffer_) clip_data.insert(clip_data.end(), row.begin(), row.end());
  Tensor clip = Tensor::from_data({buffer_.size(), cfg_.d_raw}, std::move(clip_data));

  NoGradGuard guard;
  Rng dummy(0);
  Tensor current = encode_clip(params_.encoder, clip);
  bank_.append(current.values());

  StepResult out;
  out.t = t_;
  if (cfg_.uses_bank()) {
    BankWindow w = bank_.window(t_, cfg_.bank_len);
    ForwardResult fr = model_forward(cfg_, params_, clip, w.to_tensor(), w.mask,
                                     RunMode::Eval, dummy);
    Tensor probs = softmax(fr.logits);
    out.probs.assign(probs.values().begin(), probs.values().end());
    if (fr.weights.defined())
      out.attention.assign(fr.weights.values().begin(), fr.weights.values().end());
  } else {
    ForwardResult fr = model_forward(cfg_, params_, clip, Tensor(), {}, RunMode::Eval, dummy);
    Tensor probs = softmax(fr.logits);
    out.probs.assign(probs.values().begin(), probs.values().end());
  }
  out.phase = argmax_first(out.probs);

  const auto finished = std::chrono::steady_clock::now();
  out.latency_us =
      std::chrono::duration<double, std::micro>(finished - started).count();
  latencies_us_.push_back(out.latency_us);
  ++t_;
  return out;
}

LatencyStats StreamSession::latency() const { return latency_from(latencies_us_); }

VideoPrediction run_video(const ModelConfig& cfg, const ModelParams& params,
                          const LabeledSequence& seq) {
  if (seq.d_raw != cfg.d_raw)
    throw ShapeError("run_video: sequence width does not match the model");
  StreamSession session(cfg, params);
  VideoPrediction out;
  out.labels.reserve(seq.T);
  out.probs.reserve(seq.T * static_cast<std::size_t>(cfg.num_phases));
  for (std::size_t t = 0; t < seq.T; ++t) {
    StepResult r = session.step(seq.frame(t));
    out.labels.push_back(r.phase);
    out.probs.insert(out.probs.end(), r.probs.begin(), r.probs.end());
  }
  out.latency = session.latency();
  return out;
}

VideoPrediction predict_offline(const ModelConfig& cfg, const ModelParams& params,
                                const LabeledSequence& seq) {
  if (seq.d_raw != cfg.d_raw)
    throw ShapeError("predict_offline: sequence width does not match the model");
  NoGradGuard guard;
  Rng dummy(0);
  MemoryBank bank = MemoryBank::build_offline(params.encoder, seq, cfg.clip_len);

  VideoPrediction out;
  out.labels.reserve(seq.T);
  for (std::size_t t = 0; t < seq.T; ++t) {
    Tensor clip = clip_tensor(seq, t, cfg.clip_len);
    ForwardResult fr;
    if (cfg.uses_bank()) {
      BankWindow w = bank.window(t, cfg.bank_len);
      fr = model_forward(cfg, params, clip, w.to_tensor(), w.mask, RunMode::Eval, dummy);
    } else {
      fr = model_forward(cfg, params, clip, Tensor(), {}, RunMode::Eval, dummy);
    }
    Tensor probs = softmax(fr.logits);
    out.probs.insert(out.probs.end(), probs.values().begin(), probs.values().end());
    out.labels.push_back(argmax_first(probs.values()));
  }
  return out;
}

void write_frame_record(std::ostream& os, std::span<const double> frame) {
  const std::uint32_t n = static_cast<std::uint32_t>(frame.size());
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  os.write(reinterpret_cast<const char*>(frame.data()),
           static_cast<std::streamsize>(frame.size() * sizeof(double)));
  if (!os) throw DataError("stream: failed to write frame record");
}

std::optional<std::vector<double>> read_frame_record(std::istream& is) {
  std::uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (is.eof() && is.gcount() == 0) return std::nullopt;  // clean end of stream
  if (!is) throw DataError("stream: truncated frame record header");
  std::vector<double> frame(n);
  is.read(reinterpret_cast<char*>(frame.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw DataError("stream: truncated frame record payload");
  return frame;
}

std::string prediction_line(const StepResult& r) {
  nlohmann::json j;
  j["t"] = r.t;
  j["phase"] = r.phase;
  j["probs"] = r.probs;
  j["latency_us"] = r.latency_us;
  return j.dump();
}

}  // namespace tmr
