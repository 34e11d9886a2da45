#pragma once

#include <deque>
#include <iosfwd>
#include <optional>

#include "tmr/membank.hpp"
#include "tmr/model.hpp"
#include "tmr/synth.hpp"

namespace tmr {

struct StepResult {
  std::size_t t = 0;
  int phase = 0;
  std::vector<double> probs;      // C
  std::vector<double> attention;  // window weights; empty without an NL path
  double latency_us = 0.0;
};

struct LatencyStats {
  double mean_us = 0.0;
  double p95_us = 0.0;
  double max_us = 0.0;
};

// One logical stream: a sliding clip buffer and a live bank that archives the
// current feature each step. Predictions at time t depend only on frames <= t.
class StreamSession {
 public:
  StreamSession(const ModelConfig& cfg, const ModelParams& params);

  StepResult step(std::span<const double> frame);
  std::size_t frames_seen() const { return t_; }
  const MemoryBank& bank() const { return bank_; }
  LatencyStats latency() const;

 private:
  ModelConfig cfg_;
  ModelParams params_;  // shared handles, read-only use
  std::deque<std::vector<double>> buffer_;
  MemoryBank bank_;
  std::size_t t_ = 0;
  std::vector<double> latencies_us_;
};

struct VideoPrediction {
  std::vector<int> labels;    // T
  std::vector<double> probs;  // T x C row-major
  LatencyStats latency;
};

VideoPrediction run_video(const ModelConfig& cfg, const ModelParams& params,
                          const LabeledSequence& seq);

// Batch path over a frozen offline bank; the equivalence oracle for the
// streaming session.
VideoPrediction predict_offline(const ModelConfig& cfg, const ModelParams& params,
                                const LabeledSequence& seq);

// Stream protocol. Frames in: u32 value count followed by that many raw
// little-endian doubles. Predictions out: one JSON object per line with
// fields t, phase, probs, latency_us.
void write_frame_record(std::ostream& os, std::span<const double> frame);
std::optional<std::vector<double>> read_frame_record(std::istream& is);
std::string prediction_line(const StepResult& r);

}  // namespace tmr
