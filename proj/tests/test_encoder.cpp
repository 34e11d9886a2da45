#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tmr/encoder.hpp"
#include "tmr/errors.hpp"
#include "tmr/membank.hpp"
#include "tmr/nlop.hpp"
#include "tmr/synth.hpp"

using namespace tmr;

namespace {

double grad_norm(const Tensor& t) {
  double n = 0.0;
  for (double g : t.grad()) n += g * g;
  return std::sqrt(n);
}

}  // namespace

TEST_CASE("encode_clip shape and zero-parameter behavior") {
  Rng rng(5);
  EncoderParams p = init_encoder(6, 8, rng);
  auto clip = Tensor::uniform({4, 6}, -1.0, 1.0, rng);
  Tensor h = encode_clip(p, clip);
  CHECK(h.rows() == 1);
  CHECK(h.cols() == 8);

  // zero weights and biases give a zero feature
  EncoderParams z = init_encoder(6, 8, rng);
  for (Tensor* t : {&z.frame.w1, &z.frame.b1, &z.frame.w2, &z.frame.b2, &z.lstm.wx,
                    &z.lstm.wh, &z.lstm.b})
    for (double& v : t->mutable_values()) v = 0.0;
  Tensor hz = encode_clip(z, clip);
  for (double v : hz.values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(encode_clip(p, Tensor()), ContractError);
  CHECK_THROWS_AS(encode_clip(p, Tensor::zeros({3, 5})), ShapeError);
}

TEST_CASE("encode_clip is sensitive to the order of non-final frames") {
  Rng rng(17);
  EncoderParams p = init_encoder(4, 6, rng);
  auto clip = Tensor::uniform({5, 4}, -1.0, 1.0, rng);

  // swap frames 1 and 2 (keeping the final frame fixed)
  std::vector<double> swapped(clip.values().begin(), clip.values().end());
  for (std::size_t c = 0; c < 4; ++c) std::swap(swapped[1 * 4 + c], swapped[2 * 4 + c]);
  Tensor h1 = encode_clip(p, clip);
  Tensor h2 = encode_clip(p, Tensor::from_data({5, 4}, swapped));
  double diff = 0.0;
  for (std::size_t i = 0; i < h1.size(); ++i)
    diff = std::max(diff, std::abs(h1.values()[i] - h2.values()[i]));
  CHECK(diff > 1e-8);
}

TEST_CASE("encode_sequence matches per-clip evaluation") {
  WorkflowSchema s = default_schema();
  Rng rng(23);
  EncoderParams p = init_encoder(s.d_raw, 12, rng);
  for (std::uint64_t v = 0; v < 5; ++v) {
    LabeledSequence seq = generate(s, derive_seed(55, v), 40, 60);
    Tensor rows = encode_sequence(p, seq, 10);
    CHECK(rows.rows() == seq.T);
    CHECK(rows.cols() == 12);
    for (std::size_t t = 0; t < seq.T; t += 7) {
      Tensor h = encode_clip(p, clip_tensor(seq, t, 10));
      for (std::size_t c = 0; c < 12; ++c)
        CHECK(std::abs(rows.at(t, c) - h.at(0, c)) <= 1e-9);
    }
  }
}

TEST_CASE("clip window truncates at the sequence start") {
  WorkflowSchema s = default_schema();
  LabeledSequence seq = generate(s, 3, 40, 60);
  CHECK(clip_tensor(seq, 0, 10).rows() == 1);
  CHECK(clip_tensor(seq, 4, 10).rows() == 5);
  CHECK(clip_tensor(seq, 20, 10).rows() == 10);

  // T=1 sequence handled by encode_sequence
  Rng rng(2);
  EncoderParams p = init_encoder(s.d_raw, 6, rng);
  LabeledSequence one = seq;
  one.T = 1;
  one.features.resize(s.d_raw);
  one.labels.resize(1);
  Tensor rows = encode_sequence(p, one, 10);
  Tensor h = encode_clip(p, clip_tensor(one, 0, 10));
  for (std::size_t c = 0; c < 6; ++c) CHECK(rows.at(0, c) == h.at(0, c));
}

TEST_CASE("gradients flow to both frame and recurrent groups") {
  Rng rng(31);
  EncoderParams p = init_encoder(5, 7, rng);
  auto clip = Tensor::uniform({6, 5}, -1.0, 1.0, rng);
  Rng hrng(1);
  HeadParams head = init_head(7, 7, 3, hrng);
  Tensor loss = cross_entropy(head_logits(head, encode_clip(p, clip)), 1);
  backward(loss);
  CHECK(grad_norm(p.frame.w1) > 0.0);
  CHECK(grad_norm(p.frame.w2) > 0.0);
  CHECK(grad_norm(p.lstm.wx) > 0.0);
  CHECK(grad_norm(p.lstm.wh) > 0.0);
  CHECK(grad_norm(p.lstm.b) > 0.0);
}

TEST_CASE("encoder determinism under fixed parameters") {
  Rng rng(41);
  EncoderParams p = init_encoder(4, 6, rng);
  auto clip = Tensor::uniform({8, 4}, -1.0, 1.0, rng);
  CHECK(encode_clip(p, clip).value_hash() == encode_clip(p, clip).value_hash());
}
