#include "tmr/encoder.hpp"

#include <cmath>

#include "tmr/errors.hpp"

namespace tmr {

namespace {

// Uniform fan-in scaling: U(-s, s) with s = sqrt(3 / fan_in), unit variance
// of the pre-activations for unit-variance inputs.
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double s = std::sqrt(3.0 / static_cast<double>(fan_in));
  return Tensor::uniform(std::move(shape), -s, s, rng, true);
}

// Orthonormalize the columns of a square random matrix (modified
// Gram-Schmidt). Used for the recurrent blocks.
std::vector<double> orthogonal_block(std::size_t d, Rng& rng) {
  std::vector<double> m(d * d);
  for (double& v : m) v = rng.normal();
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += m[i * d + j] * m[i * d + k];
      for (std::size_t i = 0; i < d; ++i) m[i * d + j] -= dot * m[i * d + k];
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += m[i * d + j] * m[i * d + j];
    norm = std::sqrt(std::max(norm, 1e-12));
    for (std::size_t i = 0; i < d; ++i) m[i * d + j] /= norm;
  }
  return m;
}

}  // namespace

EncoderParams init_encoder(std::size_t d_raw, std::size_t d, Rng& rng) {
  if (d_raw < 1 || d < 1) throw ConfigError("init_encoder: widths must be positive");
  EncoderParams p;
  p.d_raw = d_raw;
  p.d = d;
  p.frame.w1 = fan_in_uniform({d_raw, d}, d_raw, rng);
  p.frame.b1 = Tensor::zeros({d}, true);
  p.frame.w2 = fan_in_uniform({d, d}, d, rng);
  p.frame.b2 = Tensor::zeros({d}, true);

  p.lstm.wx = fan_in_uniform({d, 4 * d}, d, rng);
  // Per-gate orthogonal recurrent blocks, forget-gate bias +1.
  std::vector<double> wh(d * 4 * d);
  for (int gate = 0; gate < 4; ++gate) {
    auto block = orthogonal_block(d, rng);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        wh[i * 4 * d + gate * d + j] = block[i * d + j];
  }
  p.lstm.wh = Tensor::from_data({d, 4 * d}, std::move(wh), true);
  std::vector<double> b(4 * d, 0.0);
  for (std::size_t j = d; j < 2 * d; ++j) b[j] = 1.0;  // forget gate
  p.lstm.b = Tensor::from_data({4 * d}, std::move(b), true);
  return p;
}

Tensor encode_clip(const EncoderParams& params, const Tensor& clip) {
  if (!clip.defined() || clip.rank() != 2 || clip.rows() == 0)
    throw ContractError("encode_clip: clip must be a non-empty [n x d_raw] tensor");
  if (clip.cols() != params.d_raw)
    throw ShapeError("encode_clip: frame width " + std::to_string(clip.cols()) +
                     " does not match encoder d_raw " + std::to_string(params.d_raw));
  const std::size_t n = clip.rows();
  const std::size_t d = params.d;

  Tensor h = Tensor::zeros({1, d});
  Tensor c = Tensor::zeros({1, d});
  for (std::size_t t = 0; t < n; ++t) {
    Tensor x = Tensor::row(clip.values().subspan(t * params.d_raw, params.d_raw));
    Tensor f = add_rowvec(matmul(relu(add_rowvec(matmul(x, params.frame.w1), params.frame.b1)),
                                 params.frame.w2),
                          params.frame.b2);
    Tensor z = add_rowvec(add(matmul(f, params.lstm.wx), matmul(h, params.lstm.wh)),
                          params.lstm.b);
    Tensor gi = sigmoid(slice_cols(z, 0, d));
    Tensor gf = sigmoid(slice_cols(z, d, 2 * d));
    Tensor gc = tanh(slice_cols(z, 2 * d, 3 * d));
    Tensor go = sigmoid(slice_cols(z, 3 * d, 4 * d));
    c = add(mul(gf, c), mul(gi, gc));
    h = mul(go, tanh(c));
  }
  return h;
}

Tensor clip_tensor(const LabeledSequence& seq, std::size_t t, std::size_t clip_len) {
  if (clip_len < 1) throw ConfigError("clip_tensor: clip length must be >= 1");
  if (t >= seq.T) throw IndexError("clip_tensor: frame index out of range");
  const std::size_t begin = t + 1 >= clip_len ? t + 1 - clip_len : 0;
  const std::size_t len = t + 1 - begin;
  std::vector<double> data(seq.features.begin() + begin * seq.d_raw,
                           seq.features.begin() + (t + 1) * seq.d_raw);
  return Tensor::from_data({len, seq.d_raw}, std::move(data));
}

Tensor encode_sequence(const EncoderParams& params, const LabeledSequence& seq,
                       std::size_t clip_len) {
  if (clip_len < 1) throw ConfigError("encode_sequence: clip length must be >= 1");
  NoGradGuard guard;
  std::vector<double> rows;
  rows.reserve(seq.T * params.d);
  for (std::size_t t = 0; t < seq.T; ++t) {
    Tensor h = encode_clip(params, clip_tensor(seq, t, clip_len));
    rows.insert(rows.end(), h.values().begin(), h.values().end());
  }
  return Tensor::from_data({seq.T, params.d}, std::move(rows));
}

}  // namespace tmr
