#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tmr/encoder.hpp"
#include "tmr/membank.hpp"
#include "tmr/nlop.hpp"
#include "tmr/tvl.hpp"

namespace tmr {

// Ablation axes: context cue (short-range clip only vs long-range bank),
// multi-scale enhancement, and the operator reading the window.
enum class AblationMode { Sr, LrNl, LrMsWave, LrMsNl };
// I2 enhances the window once and applies one operator; I1 runs one operator
// per conv branch and fuses the operator outputs.
enum class Incorporation { I2, I1 };

std::string to_string(AblationMode mode);
std::string to_string(Incorporation inc);
std::string to_string(FusionMode fusion);
AblationMode ablation_mode_from_string(const std::string& s);
Incorporation incorporation_from_string(const std::string& s);
FusionMode fusion_mode_from_string(const std::string& s);

struct ModelConfig {
  std::size_t d_raw = 16;
  std::size_t d = 64;
  std::size_t d_e = 32;  // attention embedding width, d/2 by convention
  std::size_t d_h = 64;  // head hidden width
  int num_phases = 7;
  std::size_t clip_len = 10;
  std::size_t bank_len = 30;  // L; 0 disables the bank entirely
  AblationMode mode = AblationMode::LrMsNl;
  Incorporation incorporation = Incorporation::I2;
  std::vector<std::size_t> kernel_sizes{3, 5, 7};
  FusionMode fusion = FusionMode::Max;
  double dropout_rate = 0.2;

  // bank_len == 0 degenerates every mode to the short-range baseline.
  AblationMode effective_mode() const;
  bool uses_bank() const;
  bool uses_tvl() const;
  std::size_t head_in_width() const;  // 2d with a bank operator, d without
  void validate() const;
};

struct ModelParams {
  EncoderParams encoder;
  TvlParams tvl;                        // empty when unused
  NloParams nlo;                        // I2 operator
  std::vector<NloParams> nlo_branches;  // I1 operators, one per conv branch
  WaveParams wave;
  HeadParams head;
};

ModelParams init_model(const ModelConfig& cfg, Rng& rng);
// Stage-2 entry point: keep the trained encoder, draw fresh bank-side parts.
void reinit_bank_parts(const ModelConfig& cfg, ModelParams& params, Rng& rng);

struct ForwardResult {
  Tensor logits;   // [1 x C]
  Tensor weights;  // attention over window positions; undefined for Sr/WAve
};

// clip: [(n+1) x d_raw]; window/mask ignored in Sr mode.
ForwardResult model_forward(const ModelConfig& cfg, const ModelParams& params,
                            const Tensor& clip, const Tensor& window,
                            std::span<const std::uint8_t> mask, RunMode mode,
                            Rng& rng);

// Named parameter groups in a stable order, for the optimizer, the
// checkpoint format and diagnostics.
struct ParamRef {
  std::string name;
  Tensor tensor;
};
struct ParamGroup {
  std::string name;
  std::vector<ParamRef> params;
};
using ParamGroups = std::vector<ParamGroup>;

ParamGroups collect_params(const ModelConfig& cfg, const ModelParams& params);

}  // namespace tmr
