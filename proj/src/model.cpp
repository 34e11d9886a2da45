#include "tmr/model.hpp"

#include <algorithm>

#include "tmr/errors.hpp"

namespace tmr {

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::Sr: return "sr";
    case AblationMode::LrNl: return "lr-nl";
    case AblationMode::LrMsWave: return "lr-ms-wave";
    case AblationMode::LrMsNl: return "lr-ms-nl";
  }
  return "?";
}

std::string to_string(Incorporation inc) {
  return inc == Incorporation::I2 ? "i2" : "i1";
}

std::string to_string(FusionMode fusion) {
  return fusion == FusionMode::Max ? "max" : "ave";
}

AblationMode ablation_mode_from_string(const std::string& s) {
  if (s == "sr") return AblationMode::Sr;
  if (s == "lr-nl") return AblationMode::LrNl;
  if (s == "lr-ms-wave") return AblationMode::LrMsWave;
  if (s == "lr-ms-nl") return AblationMode::LrMsNl;
  throw ConfigError("unknown ablation mode '" + s +
                    "' (expected sr, lr-nl, lr-ms-wave or lr-ms-nl)");
}

Incorporation incorporation_from_string(const std::string& s) {
  if (s == "i2") return Incorporation::I2;
  if (s == "i1") return Incorporation::I1;
  throw ConfigError("unknown incorporation fashion '" + s + "' (expected i1 or i2)");
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "max") return FusionMode::Max;
  if (s == "ave") return FusionMode::Ave;
  throw ConfigError("unknown fusion mode '" + s + "' (expected max or ave)");
}

AblationMode ModelConfig::effective_mode() const {
  return bank_len == 0 ? AblationMode::Sr : mode;
}

bool ModelConfig::uses_bank() const { return effective_mode() != AblationMode::Sr; }

bool ModelConfig::uses_tvl() const {
  const AblationMode m = effective_mode();
  return m == AblationMode::LrMsWave || m == AblationMode::LrMsNl;
}

std::size_t ModelConfig::head_in_width() const { return uses_bank() ? 2 * d : d; }

void ModelConfig::validate() const {
  if (d_raw < 1 || d < 1 || d_e < 1 || d_h < 1)
    throw ConfigError("model: widths must be positive");
  if (num_phases < 2) throw ConfigError("model: need at least two phases");
  if (clip_len < 1) throw ConfigError("model: clip length must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("model: dropout rate must be in [0, 1)");
  if (kernel_sizes.empty()) throw ConfigError("model: kernel set must not be empty");
  for (std::size_t k : kernel_sizes)
    if (k % 2 == 0) throw ConfigError("model: kernel sizes must be odd");
}

namespace {

void init_bank_parts(const ModelConfig& cfg, ModelParams& p, Rng& rng) {
  p.tvl = TvlParams{};
  p.nlo = NloParams{};
  p.nlo_branches.clear();
  p.wave = WaveParams{};

  switch (cfg.effective_mode()) {
    case AblationMode::Sr:
      break;
    case AblationMode::LrNl:
      p.nlo = init_nlo(cfg.d, cfg.d_e, cfg.dropout_rate, rng);
      break;
    case AblationMode::LrMsWave:
      p.tvl = init_tvl(cfg.kernel_sizes, cfg.d, rng);
      p.wave = init_wave(cfg.bank_len, rng);
      break;
    case AblationMode::LrMsNl:
      p.tvl = init_tvl(cfg.kernel_sizes, cfg.d, rng);
      if (cfg.incorporation == Incorporation::I2) {
        p.nlo = init_nlo(cfg.d, cfg.d_e, cfg.dropout_rate, rng);
      } else {
        for (std::size_t i = 0; i < cfg.kernel_sizes.size(); ++i)
          p.nlo_branches.push_back(init_nlo(cfg.d, cfg.d_e, cfg.dropout_rate, rng));
      }
      break;
  }
  p.head = init_head(cfg.head_in_width(), cfg.d_h, static_cast<std::size_t>(cfg.num_phases), rng);
}

}  // namespace

ModelParams init_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.encoder = init_encoder(cfg.d_raw, cfg.d, rng);
  init_bank_parts(cfg, p, rng);
  return p;
}

void reinit_bank_parts(const ModelConfig& cfg, ModelParams& params, Rng& rng) {
  cfg.validate();
  init_bank_parts(cfg, params, rng);
}

ForwardResult model_forward(const ModelConfig& cfg, const ModelParams& params,
                            const Tensor& clip, const Tensor& window,
                            std::span<const std::uint8_t> mask, RunMode mode,
                            Rng& rng) {
  ForwardResult out;
  Tensor current = encode_clip(params.encoder, clip);

  switch (cfg.effective_mode()) {
    case AblationMode::Sr: {
      out.logits = head_logits(params.head, current);
      return out;
    }
    case AblationMode::LrNl: {
      AttendResult att = nlo_attend(params.nlo, current, window, mask, mode, rng);
      out.logits = classify(params.head, att.r, current);
      out.weights = att.weights;
      return out;
    }
    case AblationMode::LrMsWave: {
      Tensor enhanced = tvl_apply(params.tvl, window, mask, cfg.fusion);
      Tensor r = wave_attend(params.wave, enhanced, mask);
      out.logits = classify(params.head, r, current);
      return out;
    }
    case AblationMode::LrMsNl: {
      if (cfg.incorporation == Incorporation::I2) {
        Tensor enhanced = tvl_apply(params.tvl, window, mask, cfg.fusion);
        AttendResult att = nlo_attend(params.nlo, current, enhanced, mask, mode, rng);
        out.logits = classify(params.head, att.r, current);
        out.weights = att.weights;
      } else {
        std::vector<Tensor> rs;
        rs.reserve(params.nlo_branches.size());
        for (std::size_t i = 0; i < params.nlo_branches.size(); ++i) {
          Tensor enhanced = tvl_conv_branch(params.tvl, i, window, mask);
          AttendResult att =
              nlo_attend(params.nlo_branches[i], current, enhanced, mask, mode, rng);
          rs.push_back(att.r);
          if (i == 0) out.weights = att.weights;
        }
        Tensor r = cfg.fusion == FusionMode::Max ? vmax(rs) : vmean(rs);
        out.logits = classify(params.head, r, current);
      }
      return out;
    }
  }
  throw ContractError("model_forward: unreachable mode");
}

namespace {

void push(ParamGroup& g, const std::string& name, const Tensor& t) {
  if (t.defined()) g.params.push_back({name, t});
}

}  // namespace

ParamGroups collect_params(const ModelConfig& cfg, const ModelParams& p) {
  ParamGroups groups;

  ParamGroup frame{"frame", {}};
  push(frame, "w1", p.encoder.frame.w1);
  push(frame, "b1", p.encoder.frame.b1);
  push(frame, "w2", p.encoder.frame.w2);
  push(frame, "b2", p.encoder.frame.b2);
  groups.push_back(std::move(frame));

  ParamGroup rec{"recurrent", {}};
  push(rec, "wx", p.encoder.lstm.wx);
  push(rec, "wh", p.encoder.lstm.wh);
  push(rec, "b", p.encoder.lstm.b);
  groups.push_back(std::move(rec));

  if (cfg.uses_tvl()) {
    ParamGroup tvl{"tvl", {}};
    for (std::size_t i = 0; i < p.tvl.kernels.size(); ++i)
      push(tvl, "k" + std::to_string(p.tvl.kernel_sizes[i]), p.tvl.kernels[i]);
    groups.push_back(std::move(tvl));
  }

  if (cfg.uses_bank()) {
    ParamGroup nlo{"nlo", {}};
    auto push_nlo = [&](const std::string& prefix, const NloParams& n) {
      push(nlo, prefix + "w_theta", n.w_theta);
      push(nlo, prefix + "w_phi", n.w_phi);
      push(nlo, prefix + "w_g", n.w_g);
      push(nlo, prefix + "ln_gain", n.ln_gain);
      push(nlo, prefix + "ln_bias", n.ln_bias);
    };
    if (cfg.effective_mode() == AblationMode::LrMsWave) {
      push(nlo, "wave", p.wave.weights);
    } else if (cfg.effective_mode() == AblationMode::LrMsNl &&
               cfg.incorporation == Incorporation::I1) {
      for (std::size_t i = 0; i < p.nlo_branches.size(); ++i)
        push_nlo("b" + std::to_string(i) + ".", p.nlo_branches[i]);
    } else {
      push_nlo("", p.nlo);
    }
    groups.push_back(std::move(nlo));
  }

  ParamGroup head{"head", {}};
  push(head, "w1", p.head.w1);
  push(head, "b1", p.head.b1);
  push(head, "w2", p.head.w2);
  push(head, "b2", p.head.b2);
  groups.push_back(std::move(head));

  return groups;
}

}  // namespace tmr
