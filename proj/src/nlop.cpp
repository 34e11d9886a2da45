#include "tmr/nlop.hpp"

#include <cmath>
#include <string>

#include "tmr/errors.hpp"

namespace tmr {

namespace {

constexpr double kMaskedLogit = -1e30;

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double s = std::sqrt(3.0 / static_cast<double>(fan_in));
  return Tensor::uniform(std::move(shape), -s, s, rng, true);
}

}  // namespace

NloParams init_nlo(std::size_t d, std::size_t d_e, double dropout_rate, Rng& rng) {
  if (d < 1 || d_e < 1) throw ConfigError("init_nlo: widths must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("init_nlo: dropout rate must be in [0, 1)");
  NloParams p;
  p.w_theta = fan_in_uniform({d, d_e}, d, rng);
  p.w_phi = fan_in_uniform({d, d_e}, d, rng);
  p.w_g = fan_in_uniform({d, d}, d, rng);
  p.ln_gain = Tensor::full({d}, 1.0, true);
  p.ln_bias = Tensor::zeros({d}, true);
  p.dropout_rate = dropout_rate;
  p.norm_factor = std::sqrt(static_cast<double>(d_e));
  return p;
}

AttendResult nlo_attend(const NloParams& params, const Tensor& current,
                        const Tensor& window, std::span<const std::uint8_t> mask,
                        RunMode mode, Rng& rng) {
  if (!current.defined() || current.rank() != 2 || current.rows() != 1)
    throw ContractError("nlo_attend: current feature must be [1 x d]");
  if (!window.defined() || window.rank() != 2 || window.rows() == 0)
    throw ContractError("nlo_attend: window must be a non-empty [len x d] tensor");
  if (window.cols() != current.cols())
    throw ShapeError("nlo_attend: window width " + std::to_string(window.cols()) +
                     " does not match feature width " + std::to_string(current.cols()));
  if (mask.size() != window.rows())
    throw ShapeError("nlo_attend: mask length does not match window length");
  bool any_valid = false;
  for (std::uint8_t m : mask) any_valid = any_valid || m != 0;
  if (!any_valid) throw ContractError("nlo_attend: window is fully masked");
  if (params.norm_factor <= 0.0)
    throw ConfigError("nlo_attend: normalization factor must be positive");

  Tensor query = matmul(current, params.w_theta);        // 1 x d_e
  Tensor keys = matmul(window, params.w_phi);            // len x d_e
  Tensor logits = matmul(query, transpose(keys));        // 1 x len
  logits = scale(logits, 1.0 / params.norm_factor);

  bool all_valid = true;
  for (std::uint8_t m : mask) all_valid = all_valid && m != 0;
  if (!all_valid) {
    std::vector<double> bias(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) bias[i] = mask[i] ? 0.0 : kMaskedLogit;
    logits = add(logits, Tensor::from_data({1, mask.size()}, std::move(bias)));
  }

  Tensor weights = softmax(logits);                      // 1 x len
  Tensor values = matmul(window, params.w_g);            // len x d
  Tensor attended = matmul(weights, values);             // 1 x d
  Tensor refined = dropout(layer_norm(attended, params.ln_gain, params.ln_bias),
                           params.dropout_rate, mode, rng);
  AttendResult out;
  out.r = add(refined, current);
  out.weights = weights;
  out.attended = attended;
  return out;
}

WaveParams init_wave(std::size_t nominal_len, Rng& rng) {
  if (nominal_len < 1) throw ConfigError("init_wave: window length must be >= 1");
  WaveParams p;
  // Start near a plain average over the window.
  const double base = 1.0 / static_cast<double>(nominal_len);
  std::vector<double> w(nominal_len);
  for (double& v : w) v = base * rng.uniform(0.5, 1.5);
  p.weights = Tensor::from_data({1, nominal_len}, std::move(w), true);
  p.nominal_len = nominal_len;
  return p;
}

Tensor wave_attend(const WaveParams& params, const Tensor& window,
                   std::span<const std::uint8_t> mask) {
  if (!window.defined() || window.rank() != 2 || window.rows() == 0)
    throw ContractError("wave_attend: window must be a non-empty [len x d] tensor");
  if (mask.size() != window.rows())
    throw ShapeError("wave_attend: mask length does not match window length");
  const std::size_t len = window.rows();
  if (len > params.nominal_len)
    throw ShapeError("wave_attend: window longer than the learned weight vector");

  // Align by lag from the current frame: the last weight column multiplies
  // the window's last row.
  Tensor w = params.nominal_len == len
                 ? params.weights
                 : slice_cols(params.weights, params.nominal_len - len, params.nominal_len);
  bool all_valid = true;
  for (std::uint8_t m : mask) all_valid = all_valid && m != 0;
  Tensor rows = window;
  if (!all_valid) {
    std::vector<double> mm(len * window.cols());
    for (std::size_t r = 0; r < len; ++r)
      for (std::size_t c = 0; c < window.cols(); ++c)
        mm[r * window.cols() + c] = mask[r] ? 1.0 : 0.0;
    rows = mul(rows, Tensor::from_data({len, window.cols()}, std::move(mm)));
  }
  return matmul(w, rows);  // 1 x d
}

HeadParams init_head(std::size_t in_width, std::size_t hidden, std::size_t classes, Rng& rng) {
  if (in_width < 1 || hidden < 1 || classes < 1)
    throw ConfigError("init_head: widths must be positive");
  HeadParams h;
  h.w1 = fan_in_uniform({in_width, hidden}, in_width, rng);
  h.b1 = Tensor::zeros({hidden}, true);
  h.w2 = fan_in_uniform({hidden, classes}, hidden, rng);
  h.b2 = Tensor::zeros({classes}, true);
  return h;
}

Tensor head_logits(const HeadParams& head, const Tensor& input) {
  Tensor hidden = relu(add_rowvec(matmul(input, head.w1), head.b1));
  return add_rowvec(matmul(hidden, head.w2), head.b2);
}

Tensor classify(const HeadParams& head, const Tensor& r, const Tensor& c) {
  return head_logits(head, concat_cols(r, c));
}

}  // namespace tmr
